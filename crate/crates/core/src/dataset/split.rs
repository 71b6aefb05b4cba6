use rand::seq::SliceRandom;

use super::manifest::{DatasetManifest, Split};
use crate::error::{invalid, Result};
use crate::seed;

/// Seeded shuffle, then the first `round(n * train_fraction)` records train.
pub fn split_dataset(manifest: &DatasetManifest, train_fraction: f64, seed: u64) -> Result<(DatasetManifest, DatasetManifest)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(invalid(format!("train fraction must lie in (0, 1), got {train_fraction}")));
    }
    let mut order: Vec<usize> = (0..manifest.len()).collect();
    order.shuffle(&mut seed::rng(seed));
    let n_train = (manifest.len() as f64 * train_fraction).round() as usize;
    let pick = |idx: &[usize], split: Split| {
        let mut m = manifest.clone();
        m.split = split;
        m.records = idx.iter().map(|&i| manifest.records[i].clone()).collect();
        m
    };
    Ok((pick(&order[..n_train], Split::Train), pick(&order[n_train..], Split::Test)))
}
