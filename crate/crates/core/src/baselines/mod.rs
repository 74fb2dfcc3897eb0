//! Reference baseline detectors that query a black-box model under occlusion.

mod geometry;
mod objectseeker;
mod oracle;
mod themis;

pub use geometry::{ioa, iou, BBox};
pub use objectseeker::{half_masks, objectseeker_score, ObjectSeekerScore};
pub use oracle::{equivalent, Inference, InferenceOracle, StubOracle};
pub use themis::{themis_candidates, themis_detect, ThemisOutcome, ThemisParams, Verdict, Window};

use std::fmt;
use std::str::FromStr;

use crate::Error;

/// An occlusion applied to the input before re-querying the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mask {
    /// A square window in feature-map coordinates.
    Window(Window),
    /// Image rows `start..end` occluded; empty when the range is.
    Rows { start: usize, end: usize },
    /// Image columns `start..end` occluded.
    Cols { start: usize, end: usize },
}

/// Mask ids read `win:ROW,COL,SIZE`, `rows:START-END` or `cols:START-END`.
impl fmt::Display for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mask::Window(w) => write!(f, "win:{},{},{}", w.row, w.col, w.size),
            Mask::Rows { start, end } => write!(f, "rows:{start}-{end}"),
            Mask::Cols { start, end } => write!(f, "cols:{start}-{end}"),
        }
    }
}

impl FromStr for Mask {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self, Error> {
        let bad = || Error::Argument(format!("malformed mask id '{text}'"));
        let (kind, rest) = text.split_once(':').ok_or_else(bad)?;
        let nums = |sep: char| -> Result<Vec<usize>, Error> {
            rest.split(sep).map(|p| p.trim().parse().map_err(|_| bad())).collect()
        };
        match kind {
            "win" => match nums(',')?[..] {
                [row, col, size] if size > 0 => Ok(Mask::Window(Window { row, col, size })),
                _ => Err(bad()),
            },
            "rows" | "cols" => match nums('-')?[..] {
                [start, end] if start <= end => Ok(if kind == "rows" {
                    Mask::Rows { start, end }
                } else {
                    Mask::Cols { start, end }
                }),
                _ => Err(bad()),
            },
            _ => Err(bad()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_ids_round_trip() {
        for mask in [
            Mask::Window(Window { row: 3, col: 0, size: 2 }),
            Mask::Rows { start: 0, end: 50 },
            Mask::Cols { start: 50, end: 100 },
        ] {
            assert_eq!(mask.to_string().parse::<Mask>().unwrap(), mask);
        }
        assert_eq!(Mask::Rows { start: 0, end: 5 }.to_string(), "rows:0-5");
        for bad in ["win:1,2", "cols:a-b", "rows:6-5", "none", "win:0,0,0"] {
            assert!(bad.parse::<Mask>().is_err(), "{bad}");
        }
    }
}
