use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Ground-truth class of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Clean,
    Attacked,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Clean => 0,
            Label::Attacked => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Label::Clean),
            1 => Some(Label::Attacked),
            _ => None,
        }
    }

    pub fn is_attacked(self) -> bool {
        self == Label::Attacked
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split tag '{other}'")),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One labeled feature map in a manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub map_path: PathBuf,
    pub label: Label,
    /// Whether the attack changed the victim's output. Only meaningful for attacked samples.
    pub effective: Option<bool>,
    pub patch_count: Option<u32>,
    pub split: Split,
}

#[derive(Serialize, Deserialize)]
struct RawRecord {
    map_path: String,
    label: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    effective: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    patch_count: Option<u32>,
    split: String,
}

fn parse_record(line: &str, base: &Path) -> std::result::Result<SampleRecord, String> {
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let label = raw
        .label
        .as_u64()
        .and_then(|v| u8::try_from(v).ok())
        .and_then(Label::from_u8)
        .ok_or_else(|| format!("label must be 0 or 1, got {}", raw.label))?;
    if raw.effective.is_some() && label == Label::Clean {
        return Err("'effective' is only allowed on attacked samples".into());
    }
    let split = raw.split.parse::<Split>()?;
    let map_path = PathBuf::from(raw.map_path);
    let map_path = if map_path.is_relative() {
        base.join(map_path)
    } else {
        map_path
    };
    Ok(SampleRecord {
        map_path,
        label,
        effective: raw.effective,
        patch_count: raw.patch_count,
        split,
    })
}

/// Parses a JSON Lines manifest. Relative map paths are resolved against the
/// manifest's directory; blank lines are skipped.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<SampleRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            parse_record(line, base).map_err(|message| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            })
        })
        .collect()
}

/// Writes records as JSON Lines. Paths are written relative to `path`'s
/// directory when they live underneath it.
pub fn write_manifest(path: impl AsRef<Path>, records: &[SampleRecord]) -> Result<()> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    let mut out = Vec::new();
    for r in records {
        let rel = r.map_path.strip_prefix(base).unwrap_or(&r.map_path);
        let raw = RawRecord {
            map_path: rel.to_string_lossy().into_owned(),
            label: r.label.as_u8().into(),
            effective: r.effective,
            patch_count: r.patch_count,
            split: r.split.as_str().to_string(),
        };
        serde_json::to_writer(&mut out, &raw).expect("manifest record serializes");
        out.push(b'\n');
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|source| Error::Write {
            path: path.to_path_buf(),
            source,
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(text: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        std::fs::write(&path, text).unwrap();
        (dir, path)
    }

    #[test]
    fn parses_two_records_in_order() {
        let (dir, path) = manifest(
            "{\"map_path\":\"a.npy\",\"label\":0,\"split\":\"train\"}\n\
             {\"map_path\":\"b.npy\",\"label\":1,\"effective\":true,\"patch_count\":2,\"split\":\"test\"}\n",
        );
        let recs = load_manifest(&path).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].label, Label::Clean);
        assert_eq!(recs[0].map_path, dir.path().join("a.npy"));
        assert_eq!(recs[1].label, Label::Attacked);
        assert_eq!(recs[1].effective, Some(true));
        assert_eq!(recs[1].patch_count, Some(2));
        assert_eq!(recs[1].split, Split::Test);
    }

    #[test]
    fn bad_label_reports_line() {
        let (_dir, path) = manifest(
            "{\"map_path\":\"a.npy\",\"label\":0,\"split\":\"train\"}\n\
             {\"map_path\":\"b.npy\",\"label\":2,\"split\":\"train\"}\n",
        );
        match load_manifest(&path).unwrap_err() {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("label"));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn rejects_unknown_split_and_clean_effective() {
        let (_d, path) = manifest("{\"map_path\":\"a.npy\",\"label\":0,\"split\":\"dev\"}\n");
        assert!(load_manifest(&path).unwrap_err().to_string().contains("split"));
        let (_d, path) = manifest(
            "{\"map_path\":\"a.npy\",\"label\":0,\"effective\":false,\"split\":\"val\"}\n",
        );
        assert!(matches!(load_manifest(&path), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            load_manifest("/definitely/missing.jsonl"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn write_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.jsonl");
        let recs = vec![SampleRecord {
            map_path: dir.path().join("maps/x.npy"),
            label: Label::Attacked,
            effective: None,
            patch_count: Some(4),
            split: Split::Val,
        }];
        write_manifest(&path, &recs).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"maps/x.npy\""));
        assert_eq!(load_manifest(&path).unwrap(), recs);
    }
}
