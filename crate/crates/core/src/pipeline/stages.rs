use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::{variant_stream_mode, ClusterPool, PipelineConfig};
use super::markers::{hash_outputs, outputs_match, sha256_hex, StageMarkers, StageRecord};
use super::{read_json, write_json};
use crate::aggregation::{load_generator, precompute_aggregated_manifest, save_generator, train_cycle_generators};
use crate::dataset::{
    generate_styled_dataset, generate_synthetic_dataset, load_images, read_manifest, write_atomic, DatasetManifest, Split, StyleLabel,
};
use crate::detector::{
    load_detector, log_csv, predict_samples, prepare_samples, save_detector, train_detector, DetectorConfig, DetectorModel,
    DetectorSample,
};
use crate::discovery::{cluster_images, purity, select_cluster_pair, train_style_classifier, write_cluster_csv, StyleClassifier};
use crate::error::{io_err, Error, Result};
use crate::evaluation::{cross_style_matrix, evaluate_predictions, DetectorFactory, EvalReport, EvalResult, CrossStyleResult};
use crate::imaging::{RgbImage, StyleFilter};
use crate::seed::stage_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stage {
    SynthData,
    Stylize,
    Discover,
    TrainGan,
    Aggregate,
    TrainDetector,
    Evaluate,
    CrossStyle,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::SynthData,
        Stage::Stylize,
        Stage::Discover,
        Stage::TrainGan,
        Stage::Aggregate,
        Stage::TrainDetector,
        Stage::Evaluate,
        Stage::CrossStyle,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::SynthData => "synth-data",
            Stage::Stylize => "stylize",
            Stage::Discover => "discover",
            Stage::TrainGan => "train-gan",
            Stage::Aggregate => "aggregate",
            Stage::TrainDetector => "train-detector",
            Stage::Evaluate => "evaluate",
            Stage::CrossStyle => "cross-style",
            Stage::Report => "report",
        }
    }

    pub fn from_name(name: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|s| s.name() == name)
    }

    /// Stages whose outputs this stage reads; a missing input is an error.
    pub fn inputs(self) -> &'static [Stage] {
        match self {
            Stage::SynthData => &[],
            Stage::Stylize => &[Stage::SynthData],
            Stage::Discover => &[Stage::SynthData, Stage::Stylize],
            Stage::TrainGan => &[Stage::Stylize, Stage::Discover],
            Stage::Aggregate => &[Stage::SynthData, Stage::Stylize, Stage::TrainGan],
            Stage::TrainDetector => &[Stage::SynthData, Stage::Aggregate],
            Stage::Evaluate => &[Stage::SynthData, Stage::Stylize, Stage::Aggregate, Stage::TrainDetector],
            Stage::CrossStyle => &[Stage::SynthData, Stage::Stylize, Stage::Aggregate],
            Stage::Report => &[Stage::Evaluate],
        }
    }

    /// Read when present.
    fn optional_inputs(self) -> &'static [Stage] {
        match self {
            Stage::Report => &[Stage::CrossStyle],
            _ => &[],
        }
    }

    /// Output locations relative to the run root.
    pub fn outputs(self) -> Vec<PathBuf> {
        let styled = |split: &str| StyleFilter::ALL.iter().map(|f| PathBuf::from(format!("data/{split}/{}", StyleLabel::from(*f).name()))).collect::<Vec<_>>();
        match self {
            Stage::SynthData => vec!["data/train/original".into(), "data/test/original".into()],
            Stage::Stylize => [styled("train"), styled("test")].concat(),
            Stage::Discover => vec!["discovery".into()],
            Stage::TrainGan => vec!["gan".into()],
            Stage::Aggregate => vec!["aggregated".into()],
            Stage::TrainDetector => vec!["detector".into()],
            Stage::Evaluate => vec!["eval".into()],
            Stage::CrossStyle => vec!["cross_style".into()],
            Stage::Report => vec!["report".into()],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StageOutcome {
    Ran,
    /// Skipped on resume: fingerprint and output hashes matched.
    Reused,
}

const SPLITS: [Split; 2] = [Split::Train, Split::Test];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscoverySummary {
    pub classifier_accuracy: f64,
    pub classifier_initial_loss: f64,
    pub classifier_final_loss: f64,
    pub pool: Vec<StyleLabel>,
    pub k: usize,
    pub sizes: Vec<usize>,
    /// Largest and smallest cluster.
    pub pair: (usize, usize),
    /// Against the known style of each pooled image.
    pub purity: f64,
    pub majority_style: Vec<StyleLabel>,
    pub inertia: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanSummary {
    pub cluster_a: usize,
    pub cluster_b: usize,
    pub size_a: usize,
    pub size_b: usize,
    pub probe_cycle_initial: f64,
    pub probe_cycle_final: f64,
}

pub struct Pipeline {
    pub config: PipelineConfig,
    root: PathBuf,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let root = config.out_dir.clone();
        Ok(Self { config, root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest_path(&self, split: Split, style: StyleLabel) -> PathBuf {
        self.root.join(format!("data/{0}/{1}/{0}.json", split.name(), style.name()))
    }

    pub fn aggregated_path(&self, split: Split, style: StyleLabel) -> PathBuf {
        self.root.join(format!("aggregated/{0}/{1}/{0}.json", split.name(), style.name()))
    }

    fn stage_seed(&self, stage: Stage, part: &str) -> u64 {
        stage_seed(self.config.seed, &format!("{}/{part}", stage.name()))
    }

    /// Stages `pipeline` runs, in order.
    pub fn pipeline_stages(&self) -> Vec<Stage> {
        Stage::ALL.into_iter().filter(|s| *s != Stage::CrossStyle || self.config.run_cross_style).collect()
    }

    fn stage_config(&self, stage: Stage) -> serde_json::Value {
        let c = &self.config;
        match stage {
            Stage::SynthData => json!(c.data),
            Stage::Stylize | Stage::Aggregate => json!(null),
            Stage::Discover => json!(c.discovery),
            Stage::TrainGan => json!(c.cycle),
            Stage::TrainDetector => json!(c.detector),
            Stage::Evaluate | Stage::Report => json!(c.evaluation),
            Stage::CrossStyle => json!({ "cross_style": c.cross_style, "detector": c.detector, "evaluation": c.evaluation }),
        }
    }

    fn fingerprint(&self, stage: Stage) -> Result<String> {
        let mut inputs = serde_json::Map::new();
        for &dep in stage.inputs() {
            let hashes = hash_outputs(&self.root, &dep.outputs())?;
            if hashes.is_empty() {
                return Err(Error::Invalid(format!("stage `{}` needs the outputs of `{}`; run it first", stage.name(), dep.name())));
            }
            inputs.insert(dep.name().into(), json!(hashes));
        }
        for &dep in stage.optional_inputs() {
            inputs.insert(dep.name().into(), json!(hash_outputs(&self.root, &dep.outputs())?));
        }
        let doc = json!({
            "stage": stage.name(),
            "seed": self.config.seed,
            "config": self.stage_config(stage),
            "inputs": inputs,
        });
        Ok(sha256_hex(doc.to_string().as_bytes()))
    }

    /// Runs one stage from scratch: its output directories are cleared first.
    pub fn run_stage(&self, stage: Stage) -> Result<()> {
        let wrap = |source: Error| Error::Stage { stage: stage.name(), source: Box::new(source) };
        let fingerprint = self.fingerprint(stage).map_err(wrap)?;
        for out in stage.outputs() {
            let p = self.root.join(out);
            if p.exists() {
                fs::remove_dir_all(&p).map_err(io_err(&p)).map_err(wrap)?;
            }
        }
        log::info!("stage {}", stage.name());
        self.execute(stage).map_err(wrap)?;
        let mut markers = StageMarkers::load(&self.root).map_err(wrap)?;
        let outputs = hash_outputs(&self.root, &stage.outputs()).map_err(wrap)?;
        markers.stages.insert(stage.name().into(), StageRecord { fingerprint, outputs });
        markers.save(&self.root).map_err(wrap)
    }

    /// Runs `stages` in order; with `resume`, stages whose recorded
    /// fingerprint and output hashes still match are skipped.
    pub fn run(&self, stages: &[Stage], resume: bool) -> Result<Vec<(Stage, StageOutcome)>> {
        let mut done = Vec::with_capacity(stages.len());
        for &stage in stages {
            if resume && self.is_current(stage)? {
                log::info!("stage {} unchanged, reusing outputs", stage.name());
                done.push((stage, StageOutcome::Reused));
                continue;
            }
            self.run_stage(stage)?;
            done.push((stage, StageOutcome::Ran));
        }
        Ok(done)
    }

    pub fn is_current(&self, stage: Stage) -> Result<bool> {
        let markers = StageMarkers::load(&self.root)?;
        let Some(record) = markers.stages.get(stage.name()) else {
            return Ok(false);
        };
        let fingerprint = match self.fingerprint(stage) {
            Ok(f) => f,
            Err(_) => return Ok(false),
        };
        Ok(fingerprint == record.fingerprint && outputs_match(&self.root, &stage.outputs(), record)?)
    }

    fn execute(&self, stage: Stage) -> Result<()> {
        match stage {
            Stage::SynthData => self.synth_data(),
            Stage::Stylize => self.stylize(),
            Stage::Discover => self.discover(),
            Stage::TrainGan => self.train_gan(),
            Stage::Aggregate => self.aggregate(),
            Stage::TrainDetector => self.train_main_detector(),
            Stage::Evaluate => self.evaluate(),
            Stage::CrossStyle => self.cross_style(),
            Stage::Report => self.report(),
        }
    }

    fn synth_data(&self) -> Result<()> {
        let d = &self.config.data;
        for split in SPLITS {
            let count = if split == Split::Train { d.train_count } else { d.test_count };
            let path = self.manifest_path(split, StyleLabel::Original);
            let dir = path.parent().expect("manifest has a parent");
            generate_synthetic_dataset(&d.synth, count, self.stage_seed(Stage::SynthData, split.name()), dir, split.name(), split)?;
        }
        Ok(())
    }

    fn stylize(&self) -> Result<()> {
        for split in SPLITS {
            let path = self.manifest_path(split, StyleLabel::Original);
            let manifest = read_manifest(&path)?;
            generate_styled_dataset(&manifest, &path, &StyleFilter::ALL, &self.root.join("data").join(split.name()))?;
        }
        Ok(())
    }

    fn load(&self, path: &Path) -> Result<(DatasetManifest, PathBuf)> {
        Ok((read_manifest(path)?, path.to_path_buf()))
    }

    fn pool_styles(&self) -> Vec<StyleLabel> {
        match self.config.discovery.pool {
            ClusterPool::Styled => StyleFilter::ALL.iter().map(|f| StyleLabel::from(*f)).collect(),
            ClusterPool::All => StyleLabel::BENCHMARK.to_vec(),
        }
    }

    /// Pooled training images, their `style/id` keys and style labels.
    fn cluster_pool(&self) -> Result<(Vec<RgbImage>, Vec<String>, Vec<StyleLabel>)> {
        let (mut images, mut keys, mut labels) = (Vec::new(), Vec::new(), Vec::new());
        for style in self.pool_styles() {
            let (m, p) = self.load(&self.manifest_path(Split::Train, style))?;
            images.extend(load_images(&m, &p)?);
            keys.extend(m.records.iter().map(|r| format!("{}/{}", style.name(), r.id)));
            labels.extend(std::iter::repeat_n(style, m.records.len()));
        }
        Ok((images, keys, labels))
    }

    fn discover(&self) -> Result<()> {
        let sets: Vec<(DatasetManifest, PathBuf)> =
            StyleLabel::BENCHMARK.iter().map(|s| self.load(&self.manifest_path(Split::Train, *s))).collect::<Result<_>>()?;
        let styled: Vec<(&DatasetManifest, &Path)> = sets[1..].iter().map(|(m, p)| (m, p.as_path())).collect();
        let dc = &self.config.discovery;
        let trained = train_style_classifier(
            (&sets[0].0, &sets[0].1),
            &styled,
            &dc.classifier,
            self.stage_seed(Stage::Discover, "classifier"),
        )?;
        let dir = self.root.join("discovery");
        sanlite_numerics::checkpoint::save(&trained.classifier.params, &dir.join("classifier.ckpt"))?;

        let (images, keys, labels) = self.cluster_pool()?;
        let model = cluster_images(&trained.classifier, &images, dc.k, self.stage_seed(Stage::Discover, "kmeans"))?;
        let pair = select_cluster_pair(&model)?;
        write_cluster_csv(&dir.join("clusters.csv"), &keys, &model)?;
        let majority_style = (0..dc.k)
            .map(|c| {
                let members: Vec<StyleLabel> = model.members(c).into_iter().map(|i| labels[i]).collect();
                self.pool_styles()
                    .into_iter()
                    .max_by_key(|s| (members.iter().filter(|m| *m == s).count(), std::cmp::Reverse(s.name())))
                    .unwrap_or(StyleLabel::Original)
            })
            .collect();
        let summary = DiscoverySummary {
            classifier_accuracy: trained.train_accuracy,
            classifier_initial_loss: trained.initial_loss,
            classifier_final_loss: trained.final_loss,
            pool: self.pool_styles(),
            k: dc.k,
            sizes: model.sizes(),
            pair,
            purity: purity(&model.assignments, &labels),
            majority_style,
            inertia: model.inertia,
        };
        log::info!("discovery: accuracy {:.4}, purity {:.4}, sizes {:?}", summary.classifier_accuracy, summary.purity, summary.sizes);
        write_json(&dir.join("summary.json"), &summary)
    }

    pub fn load_classifier(&self) -> Result<StyleClassifier> {
        let mut c = StyleClassifier::new(self.config.discovery.classifier.clone(), StyleLabel::BENCHMARK.len(), &mut crate::seed::rng(0))?;
        c.params.load_from(&sanlite_numerics::checkpoint::load(&self.root.join("discovery/classifier.ckpt"))?)?;
        Ok(c)
    }

    pub fn discovery_summary(&self) -> Result<DiscoverySummary> {
        read_json(&self.root.join("discovery/summary.json"))
    }

    pub fn gan_summary(&self) -> Result<GanSummary> {
        read_json(&self.root.join("gan/summary.json"))
    }

    /// Images of clusters `A` and `B` as listed in the exported assignments.
    fn cluster_members(&self, pair: (usize, usize)) -> Result<(Vec<RgbImage>, Vec<RgbImage>)> {
        let csv_path = self.root.join("discovery/clusters.csv");
        let text = fs::read_to_string(&csv_path).map_err(io_err(&csv_path))?;
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for line in text.lines().skip(1) {
            let mut cols = line.split(',');
            let (Some(key), Some(cluster)) = (cols.next(), cols.next()) else {
                return Err(Error::Invalid(format!("{}: malformed row `{line}`", csv_path.display())));
            };
            let cluster: usize = cluster.parse().map_err(|_| Error::Invalid(format!("{}: bad cluster index in `{line}`", csv_path.display())))?;
            let target = if cluster == pair.0 {
                &mut a
            } else if cluster == pair.1 {
                &mut b
            } else {
                continue;
            };
            let (style, id) = key.split_once('/').ok_or_else(|| Error::Invalid(format!("bad record key `{key}`")))?;
            target.push(self.root.join(format!("data/train/{style}/images/{id}.png")));
        }
        let load = |paths: Vec<PathBuf>| paths.iter().map(|p| RgbImage::load_png(p)).collect::<Result<Vec<_>>>();
        Ok((load(a)?, load(b)?))
    }

    fn train_gan(&self) -> Result<()> {
        let summary = self.discovery_summary()?;
        let (images_a, images_b) = self.cluster_members(summary.pair)?;
        let mut cfg = self.config.cycle.clone();
        cfg.seed = self.stage_seed(Stage::TrainGan, "cycle");
        let models = train_cycle_generators(&images_a, &images_b, &cfg)?;
        let dir = self.root.join("gan");
        save_generator(&models.to_a, &dir.join("to_a.ckpt"))?;
        save_generator(&models.to_b, &dir.join("to_b.ckpt"))?;
        write_atomic(&dir.join("log.csv"), models.log.to_csv().as_bytes())?;
        log::info!("cycle loss on probe batch: {:.4} -> {:.4}", models.log.probe_cycle_initial, models.log.probe_cycle_final);
        write_json(
            &dir.join("summary.json"),
            &GanSummary {
                cluster_a: summary.pair.0,
                cluster_b: summary.pair.1,
                size_a: images_a.len(),
                size_b: images_b.len(),
                probe_cycle_initial: models.log.probe_cycle_initial,
                probe_cycle_final: models.log.probe_cycle_final,
            },
        )
    }

    fn aggregate(&self) -> Result<()> {
        let g = self.config.cycle.generator;
        let to_a = load_generator(g, &self.root.join("gan/to_a.ckpt"))?;
        let to_b = load_generator(g, &self.root.join("gan/to_b.ckpt"))?;
        for split in SPLITS {
            for style in StyleLabel::BENCHMARK {
                let (m, p) = self.load(&self.manifest_path(split, style))?;
                precompute_aggregated_manifest(&m, &p, &to_a, &to_b, &self.aggregated_path(split, style))?;
            }
        }
        Ok(())
    }

    /// Crops of one styled split paired with their aggregated counterparts.
    pub fn samples(&self, split: Split, style: StyleLabel, config: &DetectorConfig) -> Result<(DatasetManifest, Vec<DetectorSample>)> {
        let (m, p) = self.load(&self.manifest_path(split, style))?;
        let (am, ap) = self.load(&self.aggregated_path(split, style))?;
        let samples = prepare_samples((&m, &p), Some((&am, &ap)), config)?;
        Ok((m, samples))
    }

    fn train_main_detector(&self) -> Result<()> {
        let mut cfg = self.config.detector.clone();
        cfg.seed = self.stage_seed(Stage::TrainDetector, "detector");
        let (_, samples) = self.samples(Split::Train, StyleLabel::Original, &cfg)?;
        let trained = train_detector(&samples, &cfg)?;
        let dir = self.root.join("detector");
        save_detector(&trained.model, &dir.join("model.ckpt"))?;
        write_atomic(&dir.join("log.csv"), log_csv(&trained.log).as_bytes())?;
        write_json(&dir.join("config.json"), &cfg)?;
        let mut warnings = String::new();
        for w in &trained.warnings {
            let _ = writeln!(warnings, "{w}");
        }
        write_atomic(&dir.join("warnings.txt"), warnings.as_bytes())
    }

    pub fn load_main_detector(&self) -> Result<DetectorModel> {
        let cfg: DetectorConfig = read_json(&self.root.join("detector/config.json"))?;
        load_detector(cfg, &self.root.join("detector/model.ckpt"))
    }

    fn evaluate(&self) -> Result<()> {
        let model = self.load_main_detector()?;
        let name = format!("main-{}", model.config.stream_mode);
        let mut results = Vec::new();
        for style in StyleLabel::BENCHMARK {
            let (m, samples) = self.samples(Split::Test, style, &model.config)?;
            let preds = predict_samples(&model, &samples)?;
            let r = evaluate_predictions(&m.records, &preds, self.config.evaluation.normalizer, &format!("test/{style}"), &name)?;
            log::info!("{name} on test/{style}: NME {:.4}", r.mean_nme());
            results.push(r);
        }
        write_json(&self.root.join("eval/results.json"), &results)
    }

    pub fn eval_results(&self) -> Result<Vec<EvalResult>> {
        read_json(&self.root.join("eval/results.json"))
    }

    fn cross_style(&self) -> Result<()> {
        let cs = &self.config.cross_style;
        let mut base = self.config.detector.clone();
        if let Some(e) = cs.epochs {
            base.epochs = e;
        }
        let mut train = HashMap::new();
        let mut test = HashMap::new();
        for style in StyleLabel::BENCHMARK {
            let (_, mut s) = self.samples(Split::Train, style, &base)?;
            if let Some(n) = cs.train_limit {
                s.truncate(n);
            }
            train.insert(style, s);
            test.insert(style, self.samples(Split::Test, style, &base)?);
        }
        let factory = GridFactory {
            base,
            train,
            test,
            normalizer: self.config.evaluation.normalizer,
            checkpoint_dir: self.root.join("cross_style"),
        };
        let variants: Vec<&str> = cs.variants.iter().map(String::as_str).collect();
        let result = cross_style_matrix(&factory, &StyleLabel::BENCHMARK, &variants, self.stage_seed(Stage::CrossStyle, "grid"));
        write_json(&self.root.join("cross_style/result.json"), &result)
    }

    pub fn cross_style_result(&self) -> Result<CrossStyleResult> {
        read_json(&self.root.join("cross_style/result.json"))
    }

    fn report(&self) -> Result<()> {
        let mut report = EvalReport { evaluations: self.eval_results()?, ..EvalReport::default() };
        if self.root.join("cross_style/result.json").exists() {
            let cross = self.cross_style_result()?;
            report.evaluations.extend(cross.evaluations);
            let has = |v: &str| cross.matrices.iter().any(|m| m.variant == v);
            if has(super::SAN_WITHOUT_GAN) && has(super::SAN) {
                report.comparison = Some((super::SAN_WITHOUT_GAN.into(), super::SAN.into()));
            }
            report.matrices = cross.matrices;
        }
        crate::evaluation::emit_report(&report, &self.root.join("report"))?;
        Ok(())
    }
}

struct GridFactory {
    base: DetectorConfig,
    train: HashMap<StyleLabel, Vec<DetectorSample>>,
    test: HashMap<StyleLabel, (DatasetManifest, Vec<DetectorSample>)>,
    normalizer: crate::evaluation::Normalizer,
    checkpoint_dir: PathBuf,
}

impl DetectorFactory for GridFactory {
    type Model = (DetectorModel, StyleLabel);

    fn train(&self, variant: &str, train_style: StyleLabel, seed: u64) -> Result<Self::Model> {
        let mut cfg = self.base.clone();
        cfg.stream_mode = variant_stream_mode(variant)?;
        cfg.seed = seed;
        let trained = train_detector(&self.train[&train_style], &cfg)?;
        let dir = self.checkpoint_dir.join(variant);
        save_detector(&trained.model, &dir.join(format!("{train_style}.ckpt")))?;
        write_atomic(&dir.join(format!("{train_style}.log.csv")), log_csv(&trained.log).as_bytes())?;
        log::info!("cross-style {variant} trained on {train_style}: final loss {:.4}", trained.log.last().map_or(f64::NAN, |e| e.mean_loss));
        Ok((trained.model, train_style))
    }

    fn evaluate(&self, model: &Self::Model, variant: &str, test_style: StyleLabel) -> Result<EvalResult> {
        let (m, samples) = &self.test[&test_style];
        let preds = predict_samples(&model.0, samples)?;
        evaluate_predictions(&m.records, &preds, self.normalizer, &format!("{}->{test_style}", model.1), variant)
    }
}
