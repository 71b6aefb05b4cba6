//! Cycle-consistent style transfer between two discovered clusters and
//! style-aggregated faces.

mod cycle;
mod nets;

pub use cycle::{cycle_losses, train_cycle_generators, CycleLogEntry, CycleLosses, CycleModels, CycleTrainConfig, CycleTrainLog};
pub use nets::{apply_translator, ConstantTranslator, Discriminator, Generator, GeneratorConfig, IdentityTranslator, Translator};

use std::path::Path;

use rayon::prelude::*;
use sanlite_numerics::checkpoint;

use crate::dataset::{image_path, write_manifest, DatasetManifest};
use crate::error::{Error, Result};
use crate::imaging::RgbImage;

/// Pixelwise mean of the two transferred images, clamped to `[0, 1]`.
pub fn aggregate_style(image: &RgbImage, to_a: &dyn Translator<f32>, to_b: &dyn Translator<f32>) -> Result<RgbImage> {
    let ta = apply_translator(to_a, image)?;
    let tb = apply_translator(to_b, image)?;
    let data = ta.data().iter().zip(tb.data()).map(|(x, y)| 0.5 * (x + y)).collect();
    RgbImage::from_planar(image.width(), image.height(), data)
}

/// Writes the aggregated image of every record next to `out_path` and a
/// manifest with the same records and annotations.
pub fn precompute_aggregated_manifest(
    manifest: &DatasetManifest,
    manifest_path: &Path,
    to_a: &(dyn Translator<f32> + Sync),
    to_b: &(dyn Translator<f32> + Sync),
    out_path: &Path,
) -> Result<DatasetManifest> {
    let out = manifest.relabeled(format!("{}-aggregated", manifest.name), manifest.style);
    manifest
        .records
        .par_iter()
        .zip(&out.records)
        .map(|(src, dst)| {
            let err = |e| Error::Record { id: src.id.clone(), source: Box::new(e) };
            let img = RgbImage::load_png(&image_path(manifest_path, src)).map_err(err)?;
            aggregate_style(&img, to_a, to_b).and_then(|agg| agg.save_png(&image_path(out_path, dst))).map_err(err)
        })
        .collect::<Result<Vec<()>>>()?;
    let mut out = out;
    for (o, s) in out.records.iter_mut().zip(&manifest.records) {
        o.style_tag = s.style_tag.clone();
    }
    write_manifest(&out, out_path)?;
    Ok(out)
}

pub fn save_generator(g: &Generator, path: &Path) -> Result<()> {
    Ok(checkpoint::save(&g.params, path)?)
}

pub fn load_generator(config: GeneratorConfig, path: &Path) -> Result<Generator> {
    let mut g = Generator::new(config, &mut crate::seed::rng(0));
    g.params.load_from(&checkpoint::load(path)?)?;
    Ok(g)
}
