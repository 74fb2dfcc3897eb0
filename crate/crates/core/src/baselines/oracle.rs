use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;

use super::{iou, BBox, Mask};
use crate::{Error, Result};

/// Model output for one (possibly occluded) input.
#[derive(Debug, Clone, PartialEq)]
pub enum Inference {
    Label(i64),
    Boxes(Vec<BBox>),
}

/// Black-box model queried under occlusion. Must be deterministic for a
/// fixed input and mask; `mask` is `None` for the unmasked query.
pub trait InferenceOracle {
    fn infer(&self, input: &str, mask: Option<&Mask>) -> Result<Inference>;
}

impl<F> InferenceOracle for F
where
    F: Fn(&str, Option<&Mask>) -> Result<Inference>,
{
    fn infer(&self, input: &str, mask: Option<&Mask>) -> Result<Inference> {
        self(input, mask)
    }
}

/// Whether a masked inference agrees with the original. Labels must match;
/// every original box must have a masked box overlapping it with IoU above 0.5.
pub fn equivalent(original: &Inference, masked: &Inference) -> Result<bool> {
    match (original, masked) {
        (Inference::Label(a), Inference::Label(b)) => Ok(a == b),
        (Inference::Boxes(orig), Inference::Boxes(new)) => Ok(orig
            .iter()
            .all(|r| new.iter().any(|q| iou(r, q) > 0.5))),
        _ => Err(Error::Oracle(
            "oracle mixed class labels and boxes for one input".into(),
        )),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    input: String,
    mask: String,
    #[serde(default)]
    label: Option<i64>,
    #[serde(default)]
    boxes: Option<Vec<[f64; 4]>>,
}

const UNMASKED: &str = "none";
const FALLBACK: &str = "*";

/// Replays inferences recorded in a JSONL file, one object per line:
/// `{"input": ID, "mask": MASK, "label": N}` or with `"boxes": [[x0,y0,x1,y1], ...]`.
/// `MASK` is a mask id, `none` for the unmasked query, or `*` for any mask
/// without its own record.
#[derive(Debug, Clone, Default)]
pub struct StubOracle {
    records: HashMap<(String, String), Inference>,
}

impl StubOracle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.into(),
            source,
        })?;
        let mut oracle = Self::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parse = |message: String| Error::Parse {
                path: path.into(),
                line: i + 1,
                message,
            };
            let rec: Record = serde_json::from_str(line).map_err(|e| parse(e.to_string()))?;
            let inference = match (rec.label, rec.boxes) {
                (Some(label), None) => Inference::Label(label),
                (None, Some(boxes)) => Inference::Boxes(
                    boxes
                        .iter()
                        .map(|b| BBox::new(b[0], b[1], b[2], b[3]))
                        .collect::<Result<_>>()
                        .map_err(|e| parse(e.to_string()))?,
                ),
                _ => return Err(parse("exactly one of 'label' or 'boxes' is required".into())),
            };
            let key = canonical_mask(&rec.mask).map_err(|e| parse(e.to_string()))?;
            oracle.records.insert((rec.input, key), inference);
        }
        Ok(oracle)
    }

    /// Records `inference` for `mask`; see the type docs for the mask syntax.
    pub fn insert(&mut self, input: &str, mask: &str, inference: Inference) -> Result<()> {
        self.records.insert((input.into(), canonical_mask(mask)?), inference);
        Ok(())
    }
}

fn canonical_mask(mask: &str) -> Result<String> {
    Ok(match mask {
        UNMASKED | FALLBACK => mask.to_string(),
        other => other.parse::<Mask>()?.to_string(),
    })
}

impl InferenceOracle for StubOracle {
    fn infer(&self, input: &str, mask: Option<&Mask>) -> Result<Inference> {
        let key = mask.map_or_else(|| UNMASKED.to_string(), Mask::to_string);
        self.records
            .get(&(input.to_string(), key.clone()))
            .or_else(|| mask.and(self.records.get(&(input.to_string(), FALLBACK.to_string()))))
            .cloned()
            .ok_or_else(|| Error::Oracle(format!("no recorded inference for input '{input}' under mask '{key}'")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn bx(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn equivalence_rules() {
        assert!(equivalent(&Inference::Label(3), &Inference::Label(3)).unwrap());
        assert!(!equivalent(&Inference::Label(3), &Inference::Label(4)).unwrap());
        let orig = Inference::Boxes(vec![bx(0.0, 0.0, 10.0, 10.0)]);
        // IoU of exactly one half does not count as a match
        let half = Inference::Boxes(vec![bx(0.0, 0.0, 10.0, 5.0)]);
        assert!(!equivalent(&orig, &half).unwrap());
        let close = Inference::Boxes(vec![bx(20.0, 20.0, 30.0, 30.0), bx(0.0, 0.0, 10.0, 6.0)]);
        assert!(equivalent(&orig, &close).unwrap());
        assert!(equivalent(&Inference::Boxes(vec![]), &Inference::Boxes(vec![])).unwrap());
        assert!(equivalent(&orig, &Inference::Label(1)).is_err());
    }

    #[test]
    fn stub_file_lookup() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, r#"{{"input": "a", "mask": "none", "label": 1}}"#).unwrap();
        writeln!(file, r#"{{"input": "a", "mask": "*", "label": 1}}"#).unwrap();
        writeln!(file, r#"{{"input": "a", "mask": "win:1,2,3", "label": 7}}"#).unwrap();
        writeln!(file).unwrap();
        writeln!(file, r#"{{"input": "b", "mask": "rows: 0-5", "boxes": [[0,0,2,2]]}}"#).unwrap();
        let oracle = StubOracle::load(file.path()).unwrap();
        assert_eq!(oracle.infer("a", None).unwrap(), Inference::Label(1));
        let win = Mask::Window(super::super::Window { row: 1, col: 2, size: 3 });
        assert_eq!(oracle.infer("a", Some(&win)).unwrap(), Inference::Label(7));
        assert_eq!(oracle.infer("a", Some(&Mask::Cols { start: 0, end: 1 })).unwrap(), Inference::Label(1));
        assert_eq!(
            oracle.infer("b", Some(&Mask::Rows { start: 0, end: 5 })).unwrap(),
            Inference::Boxes(vec![bx(0.0, 0.0, 2.0, 2.0)])
        );
        let err = oracle.infer("b", None).unwrap_err();
        assert!(matches!(err, Error::Oracle(_)) && !err.is_usage());
    }

    #[test]
    fn stub_file_errors_name_the_line() {
        for (body, needle) in [
            (r#"{"input": "a", "mask": "none"}"#, "exactly one"),
            (r#"{"input": "a", "mask": "bogus", "label": 1}"#, "malformed mask"),
            (r#"{"input": "a", "mask": "none", "boxes": [[3,0,1,1]]}"#, "x0<x1"),
            ("not json", "expected"),
        ] {
            let mut file = tempfile::NamedTempFile::new().unwrap();
            writeln!(file, r#"{{"input": "ok", "mask": "none", "label": 0}}"#).unwrap();
            writeln!(file, "{body}").unwrap();
            match StubOracle::load(file.path()).unwrap_err() {
                Error::Parse { line, message, .. } => {
                    assert_eq!(line, 2);
                    assert!(message.contains(needle), "{message}");
                }
                other => panic!("unexpected {other}"),
            }
        }
    }
}
