//! Manifests, annotation formats and dataset generation.

mod manifest;
mod pts;
mod split;
mod styled;
pub mod synth;

pub use manifest::{
    default_image_path, image_path, read_manifest, write_atomic, write_manifest, DatasetManifest, FaceRecord,
    LandmarkAnnotation, Split, StyleLabel, MANIFEST_FORMAT, MANIFEST_VERSION,
};
pub use pts::{format_pts, parse_pts};
pub use split::split_dataset;
pub use styled::{generate_styled_dataset, styled_manifest_path, StyledManifest};
pub use synth::{generate_synthetic_dataset, synth_face, synth_faces, FaceGeometry, SynthParams};

use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imaging::RgbImage;

/// Loads every record image of a manifest, in record order.
pub fn load_images(manifest: &DatasetManifest, manifest_path: &Path) -> Result<Vec<RgbImage>> {
    manifest
        .records
        .par_iter()
        .map(|r| RgbImage::load_png(&image_path(manifest_path, r)).map_err(|e| Error::Record { id: r.id.clone(), source: Box::new(e) }))
        .collect()
}
