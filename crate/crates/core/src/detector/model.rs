use std::fmt;
use std::str::FromStr;

use rand::Rng;
use sanlite_numerics::{Bound, Float, OptimizerConfig, Parameters, StepSchedule, Tape, Var};
use serde::{Deserialize, Serialize};

use super::heatmap::HEATMAP_STRIDE;
use crate::error::{invalid, Error, Result};
use crate::nets::{self, Init};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StreamMode {
    TwoStream,
    /// Both streams see the original face.
    OriginalOnly,
    /// Both streams see the style-aggregated face.
    AggregatedOnly,
}

impl StreamMode {
    pub fn name(self) -> &'static str {
        match self {
            StreamMode::TwoStream => "two-stream",
            StreamMode::OriginalOnly => "original-only",
            StreamMode::AggregatedOnly => "aggregated-only",
        }
    }
}

impl fmt::Display for StreamMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StreamMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [StreamMode::TwoStream, StreamMode::OriginalOnly, StreamMode::AggregatedOnly]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| invalid(format!("unknown stream mode `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub input_size: usize,
    pub num_landmarks: usize,
    /// Channels of the 1/8-resolution features of each stream.
    pub feature_channels: usize,
    pub extractor_channels: Vec<usize>,
    pub head_channels: usize,
    /// GT Gaussian std in heatmap cells.
    pub sigma_gt: f64,
    pub stages: usize,
    pub stream_mode: StreamMode,
    pub optimizer: OptimizerConfig,
    pub lr_milestones: Vec<usize>,
    pub lr_gamma: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Face box expansion before cropping.
    pub crop_expand: f64,
    /// Largest random translation, in crop pixels, per training sample.
    pub max_shift: usize,
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl DetectorConfig {
    pub fn desk() -> Self {
        Self {
            input_size: 64,
            num_landmarks: 5,
            feature_channels: 32,
            extractor_channels: vec![16, 32, 32, 64],
            head_channels: 32,
            sigma_gt: 1.5,
            stages: 3,
            stream_mode: StreamMode::TwoStream,
            optimizer: OptimizerConfig::adam(1e-3).with_weight_decay(5e-4),
            lr_milestones: Vec::new(),
            lr_gamma: 0.5,
            epochs: 30,
            batch_size: 8,
            crop_expand: 0.2,
            max_shift: 6,
            seed: 0,
        }
    }

    /// Full-scale schedule: SGD with momentum, lr 5e-5 halved at epochs 30/35/40/45.
    pub fn paper() -> Self {
        Self {
            optimizer: OptimizerConfig::sgd(5e-5, 0.9).with_weight_decay(5e-4),
            lr_milestones: vec![30, 35, 40, 45],
            lr_gamma: 0.5,
            epochs: 50,
            ..Self::desk()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "paper" => Ok(Self::paper()),
            other => Err(invalid(format!("unknown preset `{other}` (expected desk or paper)"))),
        }
    }

    pub fn schedule(&self) -> StepSchedule {
        StepSchedule { base_lr: self.optimizer.lr, milestones: self.lr_milestones.clone(), gamma: self.lr_gamma }
    }

    pub fn heatmap_size(&self) -> usize {
        self.input_size / HEATMAP_STRIDE
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || self.input_size % HEATMAP_STRIDE != 0 {
            return Err(invalid(format!("input_size {} must be a positive multiple of 8", self.input_size)));
        }
        if self.num_landmarks < 2 {
            return Err(invalid("num_landmarks must be at least 2"));
        }
        if self.stages != 3 {
            return Err(invalid(format!("the cascade has exactly 3 stages, got {}", self.stages)));
        }
        if self.extractor_channels.len() != 4 {
            return Err(invalid("extractor_channels needs one width per block (4)"));
        }
        if self.batch_size == 0 || self.feature_channels == 0 || self.head_channels == 0 {
            return Err(invalid("batch_size and channel widths must be positive"));
        }
        if !(self.sigma_gt > 0.0) {
            return Err(invalid("sigma_gt must be positive"));
        }
        Ok(())
    }
}

const STREAMS: [&str; 2] = ["orig", "agg"];

/// Separate extractors and stage-1 heads per stream, then two fusion stages.
#[derive(Clone, Debug)]
pub struct DetectorModel<T = f32> {
    pub config: DetectorConfig,
    pub params: Parameters<T>,
}

#[derive(Clone, Copy, Debug)]
pub struct StageOutputs {
    pub h_o: Var,
    pub h_s: Var,
    pub h_2: Var,
    pub h_3: Var,
}

impl<T: Float> DetectorModel<T> {
    pub fn new<R: Rng + ?Sized>(config: DetectorConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut p = Parameters::new();
        let k1 = config.num_landmarks + 1;
        let (c, hc) = (config.feature_channels, config.head_channels);
        let head = Init::Gaussian(0.1);
        for s in STREAMS {
            let mut cin = 3;
            for (i, &w) in config.extractor_channels.iter().enumerate() {
                nets::add_conv(&mut p, &format!("{s}.block{i}"), cin, w, 3, Init::He, rng);
                cin = w;
            }
            nets::add_conv(&mut p, &format!("{s}.feat0"), cin, c, 3, Init::He, rng);
            nets::add_conv(&mut p, &format!("{s}.feat1"), c, c, 3, Init::He, rng);
            nets::add_conv(&mut p, &format!("{s}.stage1.a"), c, hc, 3, head, rng);
            nets::add_conv(&mut p, &format!("{s}.stage1.out"), hc, k1, 1, head, rng);
        }
        for (stage, cin) in [("stage2", 2 * c + 2 * k1), ("stage3", 2 * c + k1)] {
            nets::add_conv(&mut p, &format!("{stage}.a"), cin, hc, 3, head, rng);
            nets::add_conv(&mut p, &format!("{stage}.b"), hc, hc, 3, head, rng);
            nets::add_conv(&mut p, &format!("{stage}.out"), hc, k1, 1, head, rng);
        }
        Ok(Self { config, params: p })
    }

    fn extract(&self, tape: &mut Tape<T>, bound: &Bound, stream: &str, x: Var) -> Result<Var> {
        let mut h = nets::center_input(tape, x)?;
        for i in 0..4 {
            h = nets::conv_relu(tape, bound, &format!("{stream}.block{i}"), h)?;
            if i < 3 {
                h = tape.max_pool2(h)?;
            }
        }
        h = nets::conv_relu(tape, bound, &format!("{stream}.feat0"), h)?;
        nets::conv_relu(tape, bound, &format!("{stream}.feat1"), h)
    }

    fn head(&self, tape: &mut Tape<T>, bound: &Bound, prefix: &str, x: Var, layers: &[&str]) -> Result<Var> {
        let mut h = x;
        for l in layers {
            h = nets::conv_relu(tape, bound, &format!("{prefix}.{l}"), h)?;
        }
        nets::conv(tape, bound, &format!("{prefix}.out"), h)
    }

    /// Runs both streams and the cascade. `i_o` and `i_s` are `[N, 3, s, s]`;
    /// the stream mode decides which image each stream actually receives.
    pub fn forward(&self, tape: &mut Tape<T>, bound: &Bound, i_o: Var, i_s: Var) -> Result<StageOutputs> {
        let s = self.config.input_size;
        let (so, ss) = (tape.value(i_o).shape().to_vec(), tape.value(i_s).shape().to_vec());
        let expected = |sh: &[usize]| sh.len() == 4 && sh[1] == 3 && sh[2] == s && sh[3] == s;
        if !expected(&so) || !expected(&ss) || so[0] != ss[0] {
            return Err(invalid(format!("detector inputs must both be [N, 3, {s}, {s}], got {so:?} and {ss:?}")));
        }
        let (i_o, i_s) = match self.config.stream_mode {
            StreamMode::TwoStream => (i_o, i_s),
            StreamMode::OriginalOnly => (i_o, i_o),
            StreamMode::AggregatedOnly => (i_s, i_s),
        };
        let f_o = self.extract(tape, bound, STREAMS[0], i_o)?;
        let f_s = self.extract(tape, bound, STREAMS[1], i_s)?;
        let h_o = self.head(tape, bound, "orig.stage1", f_o, &["a"])?;
        let h_s = self.head(tape, bound, "agg.stage1", f_s, &["a"])?;
        let x2 = tape.concat_channels(&[f_o, f_s, h_o, h_s])?;
        let h_2 = self.head(tape, bound, "stage2", x2, &["a", "b"])?;
        let x3 = tape.concat_channels(&[f_o, f_s, h_2])?;
        let h_3 = self.head(tape, bound, "stage3", x3, &["a", "b"])?;
        Ok(StageOutputs { h_o, h_s, h_2, h_3 })
    }

    pub fn cast<U: Float>(&self) -> DetectorModel<U> {
        DetectorModel { config: self.config.clone(), params: self.params.cast() }
    }
}

/// Sum over the four stages of the squared Frobenius distance to `target`,
/// averaged over the batch.
pub fn detector_loss<T: Float>(tape: &mut Tape<T>, outputs: &StageOutputs, target: Var) -> Result<Var> {
    let mut total: Option<Var> = None;
    for h in [outputs.h_o, outputs.h_s, outputs.h_2, outputs.h_3] {
        let term = tape.frobenius_sq_loss(h, target)?;
        total = Some(match total {
            Some(t) => tape.add(t, term)?,
            None => term,
        });
    }
    Ok(total.expect("four stages"))
}
