use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn smoke_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.json")
}

fn sanlite(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sanlite"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(&p, root, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

#[test]
fn invalid_config_key_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{ "detector": { "learning_rate_typo": 1 } }"#).unwrap();
    let o = sanlite(&["synth-data", "--config", cfg.to_str().unwrap()], &dir.path().join("run"));
    assert!(!o.status.success());
    assert!(stderr(&o).contains("learning_rate_typo"), "{}", stderr(&o));
    assert!(!dir.path().join("run").exists());
}

#[test]
fn bad_flag_values_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = sanlite(&["synth-data", "--stream-mode", "three-stream"], dir.path());
    assert!(!o.status.success());
    let o = sanlite(&["synth-data", "--preset", "huge"], dir.path());
    assert!(!o.status.success());
}

#[test]
fn missing_inputs_name_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let o = sanlite(&["train-gan", "--config", smoke_config().to_str().unwrap()], dir.path());
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("train-gan") && err.contains("stylize"), "{err}");
}

#[test]
fn stylize_is_byte_identical_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config();
    let args = |cmd: &'static str| [cmd, "--config", cfg.to_str().unwrap(), "--seed", "11"];
    assert!(sanlite(&args("synth-data"), dir.path()).status.success());
    let inputs = tree(&dir.path().join("data/train/original"));
    let o = sanlite(&args("stylize"), dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let first = tree(&dir.path().join("data"));
    assert!(sanlite(&args("stylize"), dir.path()).status.success());
    assert_eq!(tree(&dir.path().join("data")), first);
    // inputs are never rewritten
    assert_eq!(tree(&dir.path().join("data/train/original")), inputs);
    assert!(first.keys().any(|k| k.starts_with("train/sketch")));
}

#[test]
fn smoke_pipeline_then_resume() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config();
    let args = ["pipeline", "--config", cfg.to_str().unwrap(), "--seed", "5", "--resume"];
    let o = sanlite(&args, dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let first = stdout(&o);
    assert_eq!(first.lines().count(), 9, "{first}");
    assert!(first.lines().all(|l| l.ends_with(" done")), "{first}");
    for f in ["per_image.csv", "summary.csv", "ced.svg", "style_matrix.csv", "improvement.csv"] {
        assert!(dir.path().join("report").join(f).is_file(), "{f}");
    }
    let o = sanlite(&args, dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).lines().all(|l| l.ends_with(" reused")), "{}", stdout(&o));
}
