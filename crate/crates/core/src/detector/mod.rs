//! Two-stream cascaded belief-map landmark detector.

mod heatmap;
mod model;
mod train;

pub use heatmap::{decode_landmarks, make_gt_beliefmaps, BeliefTargets, HEATMAP_STRIDE};
pub use model::{detector_loss, DetectorConfig, DetectorModel, StageOutputs, StreamMode};
pub use train::{
    evaluate_loss, load_detector, log_csv, predict_samples, prepare_samples, samples_from_images, save_detector, train_detector,
    DetectorSample,
    EpochLog, TrainedDetector,
};
