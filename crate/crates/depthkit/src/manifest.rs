//! JSON-Lines prediction manifests.
//!
//! Each record line is `{"image_id", "image", "depth", "mask"?}` with paths
//! relative to the manifest's directory. An optional first line without an
//! `image_id` carries manifest metadata:
//!
//! ```text
//! {"source_tag": "teacher-vitg", "dataset_role": "pseudo_labeled_real", "depth_kind": "inverse_relative"}
//! {"image_id": "0001", "image": "img/0001.png", "depth": "teacher/0001.pfm"}
//! ```

use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use depthkit_core::{DepthKind, DepthMap};
use serde::{Deserialize, Serialize};

use crate::depthio::{self, IoError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DatasetRole {
    LabeledSynthetic,
    PseudoLabeledReal,
    GroundTruth,
    #[default]
    ModelPrediction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub image_id: String,
    pub image: PathBuf,
    pub depth: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source_tag: Option<String>,
    #[serde(default)]
    dataset_role: DatasetRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    depth_kind: Option<DepthKind>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionManifest {
    pub source_tag: String,
    pub dataset_role: DatasetRole,
    /// Kind of PFM and PNG16 depth files; RawF32 files carry their own.
    pub depth_kind: DepthKind,
    /// Directory that relative entry paths are resolved against.
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {reason}", path.display())]
    Parse { path: PathBuf, line: usize, reason: String },
    #[error("{}:{line}: duplicate image_id {image_id:?}", path.display())]
    DuplicateImageId {
        path: PathBuf,
        line: usize,
        image_id: String,
    },
    #[error("image {image_id:?}: missing file {}", file.display())]
    MissingFile { image_id: String, file: PathBuf },
    #[error("missing counterpart for image {0:?}")]
    MissingCounterpart(String),
    #[error(transparent)]
    Depth(#[from] IoError),
    #[error("image {image_id:?}: {source}")]
    Shape {
        image_id: String,
        #[source]
        source: depthkit_core::Error,
    },
}

fn default_kind(role: DatasetRole) -> DepthKind {
    match role {
        DatasetRole::GroundTruth => DepthKind::MetricMeters,
        _ => DepthKind::InverseRelative,
    }
}

impl PredictionManifest {
    pub fn new(source_tag: impl Into<String>, dataset_role: DatasetRole, root: impl Into<PathBuf>) -> Self {
        Self {
            source_tag: source_tag.into(),
            dataset_role,
            depth_kind: default_kind(dataset_role),
            root: root.into(),
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, image_id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.image_id == image_id)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.root.join(p)
    }

    /// Loads the entry's depth map, restricted to its mask file if present.
    pub fn load_depth(&self, entry: &ManifestEntry) -> Result<DepthMap, ManifestError> {
        let mut map = depthio::load_depth_auto(&self.resolve(&entry.depth), self.depth_kind)?;
        if let Some(mask) = &entry.mask {
            let mask = depthio::load_mask(&self.resolve(mask))?;
            map.restrict(&mask).map_err(|source| ManifestError::Shape {
                image_id: entry.image_id.clone(),
                source,
            })?;
        }
        Ok(map)
    }

    /// Serializes to JSONL with a metadata header line.
    pub fn to_jsonl(&self) -> String {
        let header = Header {
            source_tag: Some(self.source_tag.clone()),
            dataset_role: self.dataset_role,
            depth_kind: Some(self.depth_kind),
        };
        let mut out = serde_json::to_string(&header).expect("serializable");
        out.push('\n');
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("serializable"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), ManifestError> {
        write_atomic(path, self.to_jsonl().as_bytes()).map_err(|source| ManifestError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Parses manifest text. File existence is not checked here.
pub fn parse_manifest(text: &str, path: &Path) -> Result<PredictionManifest, ManifestError> {
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("manifest")
        .to_string();
    let mut header: Option<Header> = None;
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    let parse_err = |line: usize, reason: String| ManifestError::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(raw).map_err(|e| parse_err(line, e.to_string()))?;
        if value.get("image_id").is_none() {
            if header.is_some() || !entries.is_empty() {
                return Err(parse_err(line, "metadata line must come first".into()));
            }
            header = Some(serde_json::from_value(value).map_err(|e| parse_err(line, e.to_string()))?);
            continue;
        }
        let entry: ManifestEntry = serde_json::from_value(value).map_err(|e| parse_err(line, e.to_string()))?;
        if !seen.insert(entry.image_id.clone()) {
            return Err(ManifestError::DuplicateImageId {
                path: path.to_path_buf(),
                line,
                image_id: entry.image_id,
            });
        }
        entries.push(entry);
    }
    let header = header.unwrap_or(Header {
        source_tag: None,
        dataset_role: DatasetRole::default(),
        depth_kind: None,
    });
    Ok(PredictionManifest {
        source_tag: header.source_tag.unwrap_or(stem),
        dataset_role: header.dataset_role,
        depth_kind: header.depth_kind.unwrap_or_else(|| default_kind(header.dataset_role)),
        root,
        entries,
    })
}

/// Reads and validates a manifest. Fails without a partial result if any
/// referenced file is missing.
pub fn load_manifest(path: &Path) -> Result<PredictionManifest, ManifestError> {
    let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let manifest = parse_manifest(&text, path)?;
    for e in &manifest.entries {
        for p in [Some(&e.image), Some(&e.depth), e.mask.as_ref()].into_iter().flatten() {
            let full = manifest.resolve(p);
            if !full.is_file() {
                return Err(ManifestError::MissingFile {
                    image_id: e.image_id.clone(),
                    file: full,
                });
            }
        }
    }
    Ok(manifest)
}

/// Writes through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

/// Writes one JSON value per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), ManifestError> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("serializable"));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes()).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads one JSON value per non-blank line.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, ManifestError> {
    let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| ManifestError::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_empty_manifest() {
        let m = parse_manifest("", Path::new("dir/preds.jsonl")).unwrap();
        assert!(m.is_empty());
        assert_eq!(m.source_tag, "preds");
        assert_eq!(m.root, Path::new("dir"));
        assert_eq!(m.depth_kind, DepthKind::InverseRelative);
    }

    #[test]
    fn records_keep_file_order() {
        let text = r#"{"image_id":"b","image":"b.png","depth":"b.pfm"}
{"image_id":"a","image":"a.png","depth":"a.pfm","mask":"a_mask.png"}

{"image_id":"c","image":"c.png","depth":"c.pfm"}
"#;
        let m = parse_manifest(text, Path::new("m.jsonl")).unwrap();
        let ids: Vec<_> = m.entries.iter().map(|e| e.image_id.as_str()).collect();
        assert_eq!(ids, ["b", "a", "c"]);
        assert_eq!(m.entries[1].mask.as_deref(), Some(Path::new("a_mask.png")));
    }

    #[test]
    fn duplicate_ids_are_named() {
        let text = "{\"image_id\":\"x\",\"image\":\"i\",\"depth\":\"d\"}\n{\"image_id\":\"x\",\"image\":\"i\",\"depth\":\"d\"}\n";
        match parse_manifest(text, Path::new("m.jsonl")) {
            Err(ManifestError::DuplicateImageId { image_id, line, .. }) => {
                assert_eq!(image_id, "x");
                assert_eq!(line, 2);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn header_sets_role_and_kind() {
        let text = "{\"source_tag\":\"kitti\",\"dataset_role\":\"ground_truth\"}\n";
        let m = parse_manifest(text, Path::new("gt.jsonl")).unwrap();
        assert_eq!(m.source_tag, "kitti");
        assert_eq!(m.depth_kind, DepthKind::MetricMeters);
        let late = "{\"image_id\":\"x\",\"image\":\"i\",\"depth\":\"d\"}\n{\"source_tag\":\"t\"}\n";
        assert!(matches!(
            parse_manifest(late, Path::new("m")),
            Err(ManifestError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = "{\"image_id\":\"x\",\"image\":\"i\",\"depth\":\"d\",\"extra\":1}\n";
        assert!(matches!(
            parse_manifest(text, Path::new("m")),
            Err(ManifestError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn serialization_round_trips() {
        let mut m = PredictionManifest::new("teacher", DatasetRole::PseudoLabeledReal, "root");
        m.entries.push(ManifestEntry {
            image_id: "0".into(),
            image: "i.png".into(),
            depth: "d.pfm".into(),
            mask: Some("m.png".into()),
        });
        let back = parse_manifest(&m.to_jsonl(), Path::new("root/whatever.jsonl")).unwrap();
        assert_eq!(back, m);
    }
}
