use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use sanlite_numerics::{checkpoint, Float, OptimizerState, Tape, Tensor};
use serde::{Deserialize, Serialize};

use super::heatmap::{decode_landmarks, make_gt_beliefmaps};
use super::model::{detector_loss, DetectorConfig, DetectorModel};
use crate::dataset::{load_images, DatasetManifest, FaceRecord};
use crate::error::{invalid, Result};
use crate::imaging::{crop_face, sample_shift, shift_points, translate, Affine, Point, RgbImage};
use crate::seed;

/// One face cropped for the detector: both streams share the crop box.
#[derive(Clone, Debug)]
pub struct DetectorSample {
    pub id: String,
    pub original: RgbImage,
    pub aggregated: RgbImage,
    /// Landmarks in crop pixels.
    pub points: Vec<Point>,
    pub visible: Vec<bool>,
    /// Image-to-crop transform.
    pub to_crop: Affine,
}

/// Crops every record; `aggregated` must list the same records in the same
/// order. Without it both streams get the original crop.
pub fn prepare_samples(
    manifest: (&DatasetManifest, &Path),
    aggregated: Option<(&DatasetManifest, &Path)>,
    config: &DetectorConfig,
) -> Result<Vec<DetectorSample>> {
    let (m, path) = manifest;
    if m.num_landmarks != config.num_landmarks {
        return Err(invalid(format!("manifest has K = {}, detector expects {}", m.num_landmarks, config.num_landmarks)));
    }
    let originals = load_images(m, path)?;
    let aggregated_images = match aggregated {
        Some((am, ap)) => {
            let aligned = am.records.len() == m.records.len() && am.records.iter().zip(&m.records).all(|(a, b)| a.id == b.id);
            if !aligned {
                return Err(invalid(format!("aggregated manifest '{}' is not aligned with '{}'", am.name, m.name)));
            }
            Some(load_images(am, ap)?)
        }
        None => None,
    };
    samples_from_images(&m.records, &originals, aggregated_images.as_deref(), config)
}

/// In-memory variant of [`prepare_samples`].
pub fn samples_from_images(
    records: &[FaceRecord],
    originals: &[RgbImage],
    aggregated: Option<&[RgbImage]>,
    config: &DetectorConfig,
) -> Result<Vec<DetectorSample>> {
    if originals.len() != records.len() || aggregated.is_some_and(|a| a.len() != records.len()) {
        return Err(invalid("record and image counts differ"));
    }
    records
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let (original, to_crop) = crop_face(&originals[i], &r.bbox, config.crop_expand, config.input_size)?;
            let aggregated = match aggregated {
                Some(imgs) => crop_face(&imgs[i], &r.bbox, config.crop_expand, config.input_size)?.0,
                None => original.clone(),
            };
            Ok(DetectorSample {
                id: r.id.clone(),
                original,
                aggregated,
                points: r.annotation.points.iter().map(|p| to_crop.apply(*p)).collect(),
                visible: r.annotation.visible.clone(),
                to_crop,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainedDetector {
    pub model: DetectorModel,
    pub log: Vec<EpochLog>,
    pub warnings: Vec<String>,
}

pub fn log_csv(log: &[EpochLog]) -> String {
    let mut out = String::from("epoch,lr,mean_loss\n");
    for e in log {
        let _ = writeln!(out, "{},{:e},{:.6}", e.epoch, e.lr, e.mean_loss);
    }
    out
}

struct Batch<T> {
    original: Tensor<T>,
    aggregated: Tensor<T>,
    target: Tensor<T>,
}

fn build_batch<T: Float>(items: &[(&RgbImage, &RgbImage, Vec<Point>, &[bool])], config: &DetectorConfig, warnings: &mut Vec<String>) -> Result<Batch<T>> {
    let mut o = Vec::with_capacity(items.len());
    let mut a = Vec::with_capacity(items.len());
    let mut t = Vec::with_capacity(items.len());
    for (io, is, pts, vis) in items {
        o.push(io.to_tensor::<T>());
        a.push(is.to_tensor::<T>());
        let gt = make_gt_beliefmaps::<T>(pts, vis, config.input_size, config.sigma_gt)?;
        warnings.extend(gt.warnings);
        t.push(gt.maps);
    }
    Ok(Batch { original: Tensor::stack(&o)?, aggregated: Tensor::stack(&a)?, target: Tensor::stack(&t)? })
}

fn batch_loss<T: Float>(model: &DetectorModel<T>, batch: Batch<T>, trainable: bool) -> Result<(Tape<T>, sanlite_numerics::Bound, sanlite_numerics::Var)> {
    let mut tape = Tape::new();
    let bound = if trainable { model.params.bind(&mut tape)? } else { model.params.bind_frozen(&mut tape)? };
    let io = tape.constant(batch.original)?;
    let is = tape.constant(batch.aggregated)?;
    let target = tape.constant(batch.target)?;
    let out = model.forward(&mut tape, &bound, io, is)?;
    let loss = detector_loss(&mut tape, &out, target)?;
    Ok((tape, bound, loss))
}

/// Mean loss over `samples` without augmentation or updates.
pub fn evaluate_loss(model: &DetectorModel, samples: &[DetectorSample]) -> Result<f64> {
    let mut total = 0.0;
    let mut warnings = Vec::new();
    for chunk in samples.chunks(model.config.batch_size) {
        let items: Vec<_> = chunk.iter().map(|s| (&s.original, &s.aggregated, s.points.clone(), s.visible.as_slice())).collect();
        let batch = build_batch::<f32>(&items, &model.config, &mut warnings)?;
        let (tape, _, loss) = batch_loss(model, batch, false)?;
        total += tape.value(loss).item().to_f64_lossy() * chunk.len() as f64;
    }
    Ok(total / samples.len().max(1) as f64)
}

/// Seeded minibatch training with per-epoch random shifts shared by both streams.
pub fn train_detector(samples: &[DetectorSample], config: &DetectorConfig) -> Result<TrainedDetector> {
    config.validate()?;
    if samples.is_empty() {
        return Err(invalid("detector training needs at least one sample"));
    }
    let mut model = DetectorModel::<f32>::new(config.clone(), &mut seed::stage_rng(config.seed, "detector-init"))?;
    let mut rng = seed::stage_rng(config.seed, "detector-batches");
    let mut opt = OptimizerState::new(config.optimizer, &model.params);
    let schedule = config.schedule();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let mut warnings = Vec::new();
    for epoch in 0..config.epochs {
        let lr = schedule.lr_at(epoch);
        opt.set_lr(lr);
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let mut shifted = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let s = &samples[i];
                let shift = sample_shift(config.input_size, config.input_size, &s.points, config.max_shift, &mut rng);
                shifted.push((translate(&s.original, shift), translate(&s.aggregated, shift), shift_points(&s.points, shift), i));
            }
            let items: Vec<_> = shifted.iter().map(|(o, a, p, i)| (o, a, p.clone(), samples[*i].visible.as_slice())).collect();
            let batch = build_batch::<f32>(&items, config, &mut warnings)?;
            let (mut tape, bound, loss) = batch_loss(&model, batch, true)?;
            tape.backward(loss)?;
            sum += tape.value(loss).item().to_f64_lossy() * chunk.len() as f64;
            model.params.accumulate_grads(&tape, &bound)?;
            opt.step(&mut model.params)?;
            model.params.zero_grad();
        }
        let mean_loss = sum / samples.len() as f64;
        log::debug!("detector epoch {epoch}: lr {lr:e} loss {mean_loss:.4}");
        log.push(EpochLog { epoch, lr, mean_loss });
    }
    warnings.sort();
    warnings.dedup();
    Ok(TrainedDetector { model, log, warnings })
}

/// Final-stage landmarks for each sample, mapped back to image coordinates.
pub fn predict_samples(model: &DetectorModel, samples: &[DetectorSample]) -> Result<Vec<Vec<Point>>> {
    let per_chunk: Vec<Vec<Vec<Point>>> = samples
        .par_chunks(16)
        .map(|chunk| {
            let mut tape = Tape::<f32>::new();
            let bound = model.params.bind_frozen(&mut tape)?;
            let o = tape.constant(Tensor::stack(&chunk.iter().map(|s| s.original.to_tensor()).collect::<Vec<_>>())?)?;
            let a = tape.constant(Tensor::stack(&chunk.iter().map(|s| s.aggregated.to_tensor()).collect::<Vec<_>>())?)?;
            let out = model.forward(&mut tape, &bound, o, a)?;
            let h3 = tape.value(out.h_3);
            chunk
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let back = s.to_crop.inverse();
                    Ok(decode_landmarks(&h3.batch_item(i), model.config.input_size)?.into_iter().map(|p| back.apply(p)).collect())
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(per_chunk.into_iter().flatten().collect())
}

pub fn save_detector(model: &DetectorModel, path: &Path) -> Result<()> {
    Ok(checkpoint::save(&model.params, path)?)
}

pub fn load_detector(config: DetectorConfig, path: &Path) -> Result<DetectorModel> {
    let mut model = DetectorModel::new(config, &mut seed::rng(0))?;
    model.params.load_from(&checkpoint::load(path)?)?;
    Ok(model)
}
