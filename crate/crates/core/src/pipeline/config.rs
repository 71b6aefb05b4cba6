use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aggregation::CycleTrainConfig;
use crate::dataset::SynthParams;
use crate::detector::{DetectorConfig, StreamMode};
use crate::discovery::ClassifierConfig;
use crate::error::{io_err, Error, Result};
use crate::evaluation::Normalizer;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub synth: SynthParams,
    pub train_count: usize,
    pub test_count: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { synth: SynthParams::default(), train_count: 500, test_count: 100 }
    }
}

/// Which images k-means sees.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClusterPool {
    /// The three filtered copies of the training set.
    Styled,
    /// The original training set plus its filtered copies.
    All,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscoveryConfig {
    pub classifier: ClassifierConfig,
    pub k: usize,
    pub pool: ClusterPool,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        Self { classifier: ClassifierConfig::desk(), k: 3, pool: ClusterPool::Styled }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub normalizer: Normalizer,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { normalizer: Normalizer::SYNTHETIC_INTEROCULAR }
    }
}

pub const SAN: &str = "san";
pub const SAN_WITHOUT_GAN: &str = "san-wo-gan";

/// Stream mode that realizes a named detector variant.
pub fn variant_stream_mode(variant: &str) -> Result<StreamMode> {
    match variant {
        SAN => Ok(StreamMode::TwoStream),
        SAN_WITHOUT_GAN => Ok(StreamMode::OriginalOnly),
        other => other.parse().map_err(|_| Error::Config(format!("unknown detector variant `{other}`"))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossStyleConfig {
    pub variants: Vec<String>,
    /// Use only the first `n` training records per cell.
    pub train_limit: Option<usize>,
    /// Detector epochs per cell; the detector section's value when unset.
    pub epochs: Option<usize>,
}

impl Default for CrossStyleConfig {
    fn default() -> Self {
        Self { variants: vec![SAN_WITHOUT_GAN.into(), SAN.into()], train_limit: None, epochs: None }
    }
}

/// Everything one pipeline run needs. Seed fields inside the module
/// sections are replaced by per-stage seeds derived from `seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub discovery: DiscoveryConfig,
    pub cycle: CycleTrainConfig,
    pub detector: DetectorConfig,
    pub evaluation: EvaluationConfig,
    pub cross_style: CrossStyleConfig,
    /// Whether `pipeline` runs the cross-style grid.
    pub run_cross_style: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("runs/desk"),
            data: DataConfig::default(),
            discovery: DiscoveryConfig::default(),
            cycle: CycleTrainConfig::default(),
            detector: DetectorConfig::desk(),
            evaluation: EvaluationConfig::default(),
            cross_style: CrossStyleConfig::default(),
            run_cross_style: true,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.data.train_count == 0 || self.data.test_count == 0 {
            return cfg("data.train_count and data.test_count must be positive".into());
        }
        if self.discovery.k < 2 {
            return cfg(format!("discovery.k must be at least 2 to select a cluster pair, got {}", self.discovery.k));
        }
        if self.detector.num_landmarks != crate::dataset::synth::SYNTH_LANDMARKS {
            return cfg(format!("detector.num_landmarks must match the synthetic layout ({})", crate::dataset::synth::SYNTH_LANDMARKS));
        }
        for v in &self.cross_style.variants {
            variant_stream_mode(v)?;
        }
        let wrap = |e: Error| Error::Config(e.to_string());
        self.discovery.classifier.validate().map_err(wrap)?;
        self.cycle.validate().map_err(wrap)?;
        self.detector.validate().map_err(wrap)?;
        Ok(())
    }

    /// Replaces the detector's training schedule with a named preset.
    pub fn apply_preset(&mut self, name: &str) -> Result<()> {
        let p = DetectorConfig::preset(name)?;
        let d = &mut self.detector;
        d.optimizer = p.optimizer;
        d.lr_milestones = p.lr_milestones;
        d.lr_gamma = p.lr_gamma;
        d.epochs = p.epochs;
        d.batch_size = p.batch_size;
        Ok(())
    }
}
