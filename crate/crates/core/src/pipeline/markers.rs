use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::write_atomic;
use crate::error::{io_err, Error, Result};

pub const MARKER_FILE: &str = "stages.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageRecord {
    /// Hash of the stage's configuration and its inputs' content hashes.
    pub fingerprint: String,
    /// Output path relative to the run root, to the SHA-256 of its bytes.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageMarkers {
    pub stages: BTreeMap<String, StageRecord>,
}

impl StageMarkers {
    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(MARKER_FILE);
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        serde_json::from_str(&text).map_err(|source| Error::Json { path, source })
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        let path = root.join(MARKER_FILE);
        let json = serde_json::to_string_pretty(self).map_err(|source| Error::Json { path: path.clone(), source })?;
        write_atomic(&path, json.as_bytes())
    }
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> =
        fs::read_dir(dir).map_err(io_err(dir))?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>().map_err(io_err(dir))?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

/// Content hashes of every file below the given directories (relative to `root`).
pub fn hash_outputs(root: &Path, dirs: &[PathBuf]) -> Result<BTreeMap<String, String>> {
    let mut files = Vec::new();
    for d in dirs {
        let full = root.join(d);
        if full.is_dir() {
            collect_files(&full, &mut files)?;
        } else if full.is_file() {
            files.push(full);
        }
    }
    let mut out = BTreeMap::new();
    for f in files {
        let bytes = fs::read(&f).map_err(io_err(&f))?;
        let rel = f.strip_prefix(root).unwrap_or(&f).to_string_lossy().replace('\\', "/");
        out.insert(rel, sha256_hex(&bytes));
    }
    Ok(out)
}

/// True when every recorded output still exists with its recorded hash and
/// nothing new appeared.
pub fn outputs_match(root: &Path, dirs: &[PathBuf], record: &StageRecord) -> Result<bool> {
    Ok(!record.outputs.is_empty() && hash_outputs(root, dirs)? == record.outputs)
}
