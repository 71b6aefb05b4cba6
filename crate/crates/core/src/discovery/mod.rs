//! Style-discriminative features, hidden-style clustering and cluster pair selection.

mod classifier;
mod kmeans;

pub use classifier::{style_feature, train_classifier_on, ClassifierConfig, StyleClassifier, StyleFeature, TrainedClassifier};
pub use kmeans::{kmeans_cluster, l2_normalize, purity, select_cluster_pair, squared_distance, ClusterModel, MAX_LLOYD_ITERATIONS};

use std::fmt::Write as _;
use std::path::Path;

use crate::dataset::{load_images, write_atomic, DatasetManifest};
use crate::error::{invalid, Result};
use crate::imaging::RgbImage;

/// Trains the style classifier on an original manifest plus its styled copies.
/// Class `0` is the original set and class `i` the `i`-th styled set.
pub fn train_style_classifier(
    original: (&DatasetManifest, &Path),
    styled: &[(&DatasetManifest, &Path)],
    config: &ClassifierConfig,
    seed: u64,
) -> Result<TrainedClassifier> {
    for (m, _) in styled {
        let aligned = m.records.len() == original.0.records.len()
            && m.records.iter().zip(&original.0.records).all(|(a, b)| a.id == b.id);
        if !aligned {
            return Err(invalid(format!(
                "styled manifest '{}' does not share the record ordering of '{}'",
                m.name, original.0.name
            )));
        }
    }
    let mut classes = vec![load_images(original.0, original.1)?];
    for (m, p) in styled {
        classes.push(load_images(m, p)?);
    }
    train_classifier_on(&classes, config, seed)
}

pub fn extract_style_feature(classifier: &StyleClassifier, image: &RgbImage) -> Result<StyleFeature> {
    style_feature(classifier, image)
}

/// One row per record: `record_id,cluster_index,distance`.
pub fn cluster_csv(ids: &[String], model: &ClusterModel) -> String {
    let mut out = String::from("record_id,cluster_index,distance\n");
    for ((id, a), d) in ids.iter().zip(&model.assignments).zip(&model.distances) {
        let _ = writeln!(out, "{id},{a},{d:.6}");
    }
    out
}

pub fn write_cluster_csv(path: &Path, ids: &[String], model: &ClusterModel) -> Result<()> {
    write_atomic(path, cluster_csv(ids, model).as_bytes())
}

/// Features are L2-normalized before clustering.
pub fn cluster_images(classifier: &StyleClassifier, images: &[RgbImage], k: usize, seed: u64) -> Result<ClusterModel> {
    let feats = classifier.extract_features(images)?;
    let points: Vec<Vec<f64>> = feats.iter().map(|f| l2_normalize(f)).collect();
    kmeans_cluster(&points, k, seed)
}
