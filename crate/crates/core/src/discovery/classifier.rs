use rand::seq::SliceRandom;
use rand::Rng;
use sanlite_numerics::{Bound, Float, OptimizerConfig, OptimizerState, Parameters, Tape, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::imaging::{resize_image, RgbImage};
use crate::nets::{self, Init};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    /// Images are resized to `input_size x input_size` before the convnet.
    pub input_size: usize,
    /// Output channels of the four conv blocks; the last is the feature width.
    pub channels: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    /// Learning rate at the last step relative to the first; linear in between.
    pub final_lr_fraction: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            input_size: 32,
            channels: vec![8, 16, 32, 64],
            epochs: 2,
            batch_size: 16,
            optimizer: OptimizerConfig::sgd(0.01, 0.9),
            final_lr_fraction: 1.0,
        }
    }
}

impl ClassifierConfig {
    /// Settings tuned for the synthetic 64px corpus: more, smaller steps and a decaying rate.
    pub fn desk() -> Self {
        Self {
            epochs: 8,
            batch_size: 4,
            optimizer: OptimizerConfig::sgd(0.02, 0.9),
            final_lr_fraction: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pools = self.channels.len().saturating_sub(1);
        if self.channels.is_empty() || self.input_size % (1 << pools) != 0 {
            return Err(invalid(format!(
                "classifier input {} must be divisible by 2^{} for {} blocks",
                self.input_size,
                pools,
                self.channels.len()
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(invalid("classifier epochs and batch_size must be positive"));
        }
        Ok(())
    }
}

/// Conv blocks, global average pooling, and a linear head over style classes.
#[derive(Clone, Debug)]
pub struct StyleClassifier<T = f32> {
    pub config: ClassifierConfig,
    pub num_classes: usize,
    pub params: Parameters<T>,
}

pub type StyleFeature = Vec<f32>;

impl<T: Float> StyleClassifier<T> {
    pub fn new<R: Rng + ?Sized>(config: ClassifierConfig, num_classes: usize, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut params = Parameters::new();
        let mut cin = 3;
        for (i, &c) in config.channels.iter().enumerate() {
            nets::add_conv(&mut params, &format!("block{i}"), cin, c, 3, Init::He, rng);
            cin = c;
        }
        nets::add_linear(&mut params, "head", cin, num_classes, 0.1, rng);
        Ok(Self { config, num_classes, params })
    }

    pub fn feature_dim(&self) -> usize {
        *self.config.channels.last().expect("validated")
    }

    /// Pooled penultimate activations `[N, feature_dim]`.
    pub fn features(&self, tape: &mut Tape<T>, bound: &Bound, x: Var) -> Result<Var> {
        let mut h = nets::center_input(tape, x)?;
        let blocks = self.config.channels.len();
        for i in 0..blocks {
            h = nets::conv_relu(tape, bound, &format!("block{i}"), h)?;
            if i + 1 < blocks {
                h = tape.max_pool2(h)?;
            }
        }
        Ok(tape.global_avg_pool(h)?)
    }

    pub fn logits(&self, tape: &mut Tape<T>, bound: &Bound, x: Var) -> Result<Var> {
        let f = self.features(tape, bound, x)?;
        nets::linear(tape, bound, "head", f)
    }

    pub fn prepare(&self, img: &RgbImage) -> Tensor<T> {
        let s = self.config.input_size;
        resize_image(img, s, s).to_tensor()
    }

    fn batch(&self, images: &[&RgbImage]) -> Result<Tensor<T>> {
        let items: Vec<Tensor<T>> = images.iter().map(|im| self.prepare(im)).collect();
        Ok(Tensor::stack(&items)?)
    }

    /// Style features for each image, in order.
    pub fn extract_features(&self, images: &[RgbImage]) -> Result<Vec<StyleFeature>> {
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(32) {
            let refs: Vec<&RgbImage> = chunk.iter().collect();
            let mut tape = Tape::new();
            let bound = self.params.bind_frozen(&mut tape)?;
            let x = tape.constant(self.batch(&refs)?)?;
            let f = self.features(&mut tape, &bound, x)?;
            let d = self.feature_dim();
            out.extend(tape.value(f).data().chunks(d).map(|row| row.iter().map(|v| v.to_f32_lossy()).collect()));
        }
        Ok(out)
    }

    pub fn predict(&self, images: &[RgbImage]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(32) {
            let refs: Vec<&RgbImage> = chunk.iter().collect();
            let mut tape = Tape::new();
            let bound = self.params.bind_frozen(&mut tape)?;
            let x = tape.constant(self.batch(&refs)?)?;
            let y = self.logits(&mut tape, &bound, x)?;
            for row in tape.value(y).data().chunks(self.num_classes) {
                let best = row
                    .iter()
                    .enumerate()
                    .fold(0, |best, (i, v)| if *v > row[best] { i } else { best });
                out.push(best);
            }
        }
        Ok(out)
    }

    fn mean_loss(&self, images: &[&RgbImage], labels: &[usize]) -> Result<f64> {
        let mut total = 0.0;
        for (chunk, lab) in images.chunks(32).zip(labels.chunks(32)) {
            let mut tape = Tape::new();
            let bound = self.params.bind_frozen(&mut tape)?;
            let x = tape.constant(self.batch(chunk)?)?;
            let y = self.logits(&mut tape, &bound, x)?;
            let l = tape.softmax_cross_entropy(y, lab)?;
            total += tape.value(l).item().to_f64_lossy() * chunk.len() as f64;
        }
        Ok(total / images.len().max(1) as f64)
    }
}

pub fn style_feature(classifier: &StyleClassifier, image: &RgbImage) -> Result<StyleFeature> {
    Ok(classifier.extract_features(std::slice::from_ref(image))?.remove(0))
}

#[derive(Clone, Debug)]
pub struct TrainedClassifier {
    pub classifier: StyleClassifier,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub train_accuracy: f64,
}

/// Cross-entropy training where `images_by_class[c]` holds the images of class `c`.
pub fn train_classifier_on(images_by_class: &[Vec<RgbImage>], config: &ClassifierConfig, seed: u64) -> Result<TrainedClassifier> {
    if images_by_class.len() < 2 || images_by_class.iter().any(|c| c.is_empty()) {
        return Err(invalid("style classifier needs at least two non-empty classes"));
    }
    let mut rng = seed::rng(seed);
    let mut model = StyleClassifier::<f32>::new(config.clone(), images_by_class.len(), &mut rng)?;
    let samples: Vec<(&RgbImage, usize)> = images_by_class
        .iter()
        .enumerate()
        .flat_map(|(c, imgs)| imgs.iter().map(move |im| (im, c)))
        .collect();
    let all_images: Vec<&RgbImage> = samples.iter().map(|s| s.0).collect();
    let all_labels: Vec<usize> = samples.iter().map(|s| s.1).collect();
    let initial_loss = model.mean_loss(&all_images, &all_labels)?;

    let prepared: Vec<Tensor<f32>> = all_images.iter().map(|im| model.prepare(im)).collect();
    let mut opt = OptimizerState::new(config.optimizer, &model.params);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let total_steps = config.epochs * samples.len().div_ceil(config.batch_size);
    let mut step = 0;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let progress = step as f64 / (total_steps.max(2) - 1) as f64;
            opt.set_lr(config.optimizer.lr * (1.0 - progress * (1.0 - config.final_lr_fraction)));
            step += 1;
            let x = Tensor::stack(&batch.iter().map(|&i| prepared[i].clone()).collect::<Vec<_>>())?;
            let labels: Vec<usize> = batch.iter().map(|&i| all_labels[i]).collect();
            let mut tape = Tape::new();
            let bound = model.params.bind(&mut tape)?;
            let xv = tape.constant(x)?;
            let y = model.logits(&mut tape, &bound, xv)?;
            let loss = tape.softmax_cross_entropy(y, &labels)?;
            tape.backward(loss)?;
            model.params.accumulate_grads(&tape, &bound)?;
            opt.step(&mut model.params)?;
            model.params.zero_grad();
        }
    }
    let final_loss = model.mean_loss(&all_images, &all_labels)?;
    let owned: Vec<RgbImage> = all_images.iter().map(|&im| im.clone()).collect();
    let predicted = model.predict(&owned)?;
    let correct = predicted.iter().zip(&all_labels).filter(|(p, l)| p == l).count();
    Ok(TrainedClassifier {
        classifier: model,
        initial_loss,
        final_loss,
        train_accuracy: correct as f64 / samples.len() as f64,
    })
}
