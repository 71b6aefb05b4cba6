use std::fs;
use std::path::{Path, PathBuf};

use sanlite_core::dataset::{Split, StyleLabel};
use sanlite_core::detector::{DetectorConfig, StreamMode};
use sanlite_core::pipeline::*;
use sanlite_core::Error;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn bundled_desk_config_is_the_default() {
    assert_eq!(PipelineConfig::load(&configs_dir().join("desk.json")).unwrap(), PipelineConfig::default());
    let smoke = PipelineConfig::load(&configs_dir().join("smoke.json")).unwrap();
    assert_eq!(smoke.data.train_count, 16);
    assert_eq!(smoke.detector.input_size, PipelineConfig::default().detector.input_size);
}

#[test]
fn unknown_keys_are_rejected_by_name() {
    for (text, key) in [
        (r#"{ "seed": 1, "bogus_key": 3 }"#, "bogus_key"),
        (r#"{ "detector": { "epochz": 3 } }"#, "epochz"),
        (r#"{ "data": { "synth": { "image_sise": 64 } } }"#, "image_sise"),
    ] {
        let err = PipelineConfig::from_json(text).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains(key), "{err}");
    }
}

#[test]
fn semantic_validation() {
    for text in [
        r#"{ "discovery": { "k": 1 } }"#,
        r#"{ "cross_style": { "variants": ["san", "nonsense"] } }"#,
        r#"{ "data": { "test_count": 0 } }"#,
        r#"{ "detector": { "num_landmarks": 68 } }"#,
        r#"{ "cycle": { "batch_size": 0 } }"#,
    ] {
        assert!(PipelineConfig::from_json(text).is_err(), "{text}");
    }
    assert_eq!(variant_stream_mode(SAN).unwrap(), StreamMode::TwoStream);
    assert_eq!(variant_stream_mode(SAN_WITHOUT_GAN).unwrap(), StreamMode::OriginalOnly);
    assert_eq!(variant_stream_mode("aggregated-only").unwrap(), StreamMode::AggregatedOnly);
}

#[test]
fn presets_replace_only_the_schedule() {
    let mut c = PipelineConfig::default();
    c.apply_preset("paper").unwrap();
    let paper = DetectorConfig::paper();
    assert_eq!((c.detector.epochs, c.detector.batch_size), (paper.epochs, paper.batch_size));
    assert_eq!(c.detector.optimizer, paper.optimizer);
    assert_eq!(c.detector.input_size, DetectorConfig::desk().input_size);
    assert!(c.apply_preset("huge").is_err());
}

fn tiny(root: &Path, seed: u64) -> Pipeline {
    let mut c = PipelineConfig::load(&configs_dir().join("smoke.json")).unwrap();
    c.out_dir = root.to_path_buf();
    c.seed = seed;
    Pipeline::new(c).unwrap()
}

#[test]
fn stages_need_their_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let err = tiny(dir.path(), 1).run_stage(Stage::Stylize).unwrap_err().to_string();
    assert!(err.contains("stylize") && err.contains("synth-data"), "{err}");
}

#[test]
fn resume_reuses_only_unchanged_stages() {
    let dir = tempfile::tempdir().unwrap();
    let p = tiny(dir.path(), 3);
    let stages = [Stage::SynthData, Stage::Stylize];
    let outcomes = |r: Vec<(Stage, StageOutcome)>| r.into_iter().map(|(_, o)| o).collect::<Vec<_>>();
    assert_eq!(outcomes(p.run(&stages, true).unwrap()), [StageOutcome::Ran; 2]);
    let before = hash_outputs(dir.path(), &Stage::Stylize.outputs()).unwrap();
    assert_eq!(outcomes(p.run(&stages, true).unwrap()), [StageOutcome::Reused; 2]);

    // a tampered styled image invalidates only the stage that wrote it
    let light = p.manifest_path(Split::Train, StyleLabel::Light);
    let light_dir = light.parent().unwrap().strip_prefix(dir.path()).unwrap().to_path_buf();
    let img = dir.path().join(before.keys().find(|k| k.ends_with(".png") && Path::new(k).starts_with(&light_dir)).unwrap());
    fs::write(&img, b"not a png").unwrap();
    assert_eq!(outcomes(p.run(&stages, true).unwrap()), [StageOutcome::Reused, StageOutcome::Ran]);
    assert_eq!(hash_outputs(dir.path(), &Stage::Stylize.outputs()).unwrap(), before);

    // a new seed changes the fingerprint of every stage
    let q = tiny(dir.path(), 4);
    assert_eq!(outcomes(q.run(&stages, true).unwrap()), [StageOutcome::Ran; 2]);
    assert!(dir.path().join(MARKER_FILE).is_file());
}
