//! Style-aggregated two-stream facial landmark detection at desk scale.
//!
//! The pipeline runs in two halves. Style discovery clusters faces by
//! appearance and trains a pair of cycle-consistent generators whose
//! averaged outputs give a style-aggregated copy of every face. The
//! detector then consumes the original and aggregated faces together
//! through a three-stage belief-map cascade.

pub mod aggregation;
pub mod dataset;
pub mod detector;
pub mod discovery;
mod error;
pub mod evaluation;
pub mod imaging;
pub mod nets;
pub mod pipeline;
pub mod seed;

pub use error::{Error, Result};
