//! Stage orchestration: synthetic data through the cross-style report, with
//! content-hashed stage markers for resumable runs.

mod config;
mod markers;
mod stages;

pub use config::{
    variant_stream_mode, ClusterPool, CrossStyleConfig, DataConfig, DiscoveryConfig, EvaluationConfig, PipelineConfig, SAN,
    SAN_WITHOUT_GAN,
};
pub use markers::{hash_outputs, sha256_hex, StageMarkers, StageRecord, MARKER_FILE};
pub use stages::{DiscoverySummary, GanSummary, Pipeline, Stage, StageOutcome};

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::dataset::write_atomic;
use crate::error::{io_err, Error, Result};

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut json = serde_json::to_string_pretty(value).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
    json.push('\n');
    write_atomic(path, json.as_bytes())
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| Error::Json { path: path.to_path_buf(), source })
}
