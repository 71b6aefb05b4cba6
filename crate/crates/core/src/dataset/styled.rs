use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::manifest::{image_path, write_manifest, DatasetManifest, StyleLabel};
use crate::error::{Error, Result};
use crate::imaging::{RgbImage, StyleFilter};

/// One restyled copy of a source manifest and where it was written.
#[derive(Clone, Debug)]
pub struct StyledManifest {
    pub style: StyleLabel,
    pub path: PathBuf,
    pub manifest: DatasetManifest,
}

/// Layout: `<out_root>/<style>/<split>.json` with images in `<out_root>/<style>/images/`.
pub fn styled_manifest_path(out_root: &Path, style: StyleLabel, split_name: &str) -> PathBuf {
    out_root.join(style.name()).join(format!("{split_name}.json"))
}

/// Applies each filter to every image of `manifest` (read from next to
/// `manifest_path`). Annotations and record order are copied unchanged.
/// The first failing record aborts the run.
pub fn generate_styled_dataset(
    manifest: &DatasetManifest,
    manifest_path: &Path,
    filters: &[StyleFilter],
    out_root: &Path,
) -> Result<Vec<StyledManifest>> {
    let split_name = manifest.split.name();
    let sources: Vec<RgbImage> = manifest
        .records
        .par_iter()
        .map(|r| {
            RgbImage::load_png(&image_path(manifest_path, r)).map_err(|e| Error::Record { id: r.id.clone(), source: Box::new(e) })
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(filters.len());
    for &filter in filters {
        let style = StyleLabel::from(filter);
        let path = styled_manifest_path(out_root, style, split_name);
        let styled = manifest.relabeled(format!("{}-{}", manifest.name, style.name()), style);
        styled
            .records
            .par_iter()
            .zip(&sources)
            .map(|(r, img)| {
                filter
                    .apply(img)
                    .save_png(&image_path(&path, r))
                    .map_err(|e| Error::Record { id: r.id.clone(), source: Box::new(e) })
            })
            .collect::<Result<Vec<()>>>()?;
        write_manifest(&styled, &path)?;
        out.push(StyledManifest { style, path, manifest: styled });
    }
    Ok(out)
}
