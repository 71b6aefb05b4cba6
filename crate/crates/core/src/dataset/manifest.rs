use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};
use crate::imaging::{BBox, Point, StyleFilter};

pub const MANIFEST_FORMAT: &str = "sanlite-manifest";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandmarkAnnotation {
    pub points: Vec<Point>,
    pub visible: Vec<bool>,
}

impl LandmarkAnnotation {
    pub fn all_visible(points: Vec<Point>) -> Self {
        let visible = vec![true; points.len()];
        Self { points, visible }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaceRecord {
    pub id: String,
    /// Image path relative to the manifest's directory.
    pub image: String,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub annotation: LandmarkAnnotation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style_tag: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StyleLabel {
    Original,
    Light,
    Gray,
    Sketch,
    SyntheticMixed,
}

impl StyleLabel {
    /// The four styles of the cross-style benchmark, in table order.
    pub const BENCHMARK: [StyleLabel; 4] = [StyleLabel::Original, StyleLabel::Light, StyleLabel::Gray, StyleLabel::Sketch];

    pub fn name(self) -> &'static str {
        match self {
            StyleLabel::Original => "original",
            StyleLabel::Light => "light",
            StyleLabel::Gray => "gray",
            StyleLabel::Sketch => "sketch",
            StyleLabel::SyntheticMixed => "synthetic-mixed",
        }
    }

    pub fn filter(self) -> Option<StyleFilter> {
        match self {
            StyleLabel::Light => Some(StyleFilter::Light),
            StyleLabel::Gray => Some(StyleFilter::Gray),
            StyleLabel::Sketch => Some(StyleFilter::Sketch),
            _ => None,
        }
    }
}

impl From<StyleFilter> for StyleLabel {
    fn from(f: StyleFilter) -> Self {
        match f {
            StyleFilter::Light => StyleLabel::Light,
            StyleFilter::Gray => StyleLabel::Gray,
            StyleFilter::Sketch => StyleLabel::Sketch,
        }
    }
}

impl fmt::Display for StyleLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StyleLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [StyleLabel::Original, StyleLabel::Light, StyleLabel::Gray, StyleLabel::Sketch, StyleLabel::SyntheticMixed]
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown style `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format: String,
    pub version: u32,
    pub name: String,
    pub split: Split,
    pub style: StyleLabel,
    pub num_landmarks: usize,
    pub records: Vec<FaceRecord>,
}

impl DatasetManifest {
    pub fn new(name: impl Into<String>, split: Split, style: StyleLabel, num_landmarks: usize) -> Self {
        Self {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            name: name.into(),
            split,
            style,
            num_landmarks,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Manifest(m));
        if self.format != MANIFEST_FORMAT {
            return bad(format!("format is `{}`, expected `{MANIFEST_FORMAT}`", self.format));
        }
        if self.version != MANIFEST_VERSION {
            return bad(format!("unsupported version {}", self.version));
        }
        if self.num_landmarks < 2 {
            return bad(format!("num_landmarks must be at least 2, got {}", self.num_landmarks));
        }
        let mut ids = HashSet::new();
        for r in &self.records {
            if !ids.insert(r.id.as_str()) {
                return bad(format!("duplicate record id `{}`", r.id));
            }
            let a = &r.annotation;
            if a.points.len() != self.num_landmarks || a.visible.len() != self.num_landmarks {
                return bad(format!(
                    "record `{}` has {} points / {} visibility flags, manifest K = {}",
                    r.id,
                    a.points.len(),
                    a.visible.len(),
                    self.num_landmarks
                ));
            }
            if a.points.iter().flatten().any(|v| !v.is_finite()) {
                return bad(format!("record `{}` has non-finite landmark coordinates", r.id));
            }
            if !r.bbox.is_valid() {
                return bad(format!("record `{}` has an invalid box {:?}", r.id, r.bbox));
            }
        }
        Ok(())
    }

    /// Same records, but each image path `images/<id>.png` and the given label.
    pub fn relabeled(&self, name: impl Into<String>, style: StyleLabel) -> Self {
        let mut m = self.clone();
        m.name = name.into();
        m.style = style;
        for r in &mut m.records {
            r.image = default_image_path(&r.id);
            r.style_tag = Some(style.name().into());
        }
        m
    }
}

pub fn default_image_path(id: &str) -> String {
    format!("images/{id}.png")
}

/// Resolves a record's image relative to the directory holding `manifest_path`.
pub fn image_path(manifest_path: &Path, record: &FaceRecord) -> PathBuf {
    manifest_path.parent().unwrap_or(Path::new(".")).join(&record.image)
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
    manifest.validate()?;
    Ok(manifest)
}

/// Validates, then writes through a temporary file and rename.
pub fn write_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    manifest.validate()?;
    let json = serde_json::to_string_pretty(manifest).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
    write_atomic(path, json.as_bytes())
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))?;
    Ok(())
}
