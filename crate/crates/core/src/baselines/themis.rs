use super::{equivalent, InferenceOracle, Mask};
use crate::ensemble::binarize;
use crate::{Error, FeatureMap, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThemisParams {
    /// Importance threshold as a fraction of the map maximum.
    pub beta: f64,
    /// Minimum fraction of important cells inside a window.
    pub theta: f64,
    /// Window side length in feature-map cells.
    pub window: usize,
}

impl ThemisParams {
    pub fn new(beta: f64, theta: f64, window: usize) -> Result<Self> {
        let p = Self { beta, theta, window };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) || !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::Argument(format!(
                "beta and theta must lie in [0,1], got {} and {}",
                self.beta, self.theta
            )));
        }
        if self.window == 0 {
            return Err(Error::Argument("window size must be positive".into()));
        }
        Ok(())
    }
}

/// Top-left corner and side of a square window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Window {
    pub row: usize,
    pub col: usize,
    pub size: usize,
}

/// Windows whose count of important cells reaches `theta * window^2`, in row-major order.
/// A cell is important when it is positive and at or above `beta` times the map maximum.
pub fn themis_candidates(map: &FeatureMap, params: &ThemisParams) -> Result<Vec<Window>> {
    params.validate()?;
    let n = params.window;
    let (rows, cols) = (map.rows(), map.cols());
    if n > rows.min(cols) {
        return Err(Error::Argument(format!(
            "window {n} does not fit a {rows}x{cols} map"
        )));
    }
    let bits = binarize(map, params.beta);
    // summed-area table with a zero border row and column
    let w = cols + 1;
    let mut sat = vec![0usize; (rows + 1) * w];
    for r in 0..rows {
        for c in 0..cols {
            sat[(r + 1) * w + c + 1] =
                (bits.get(r, c) && map.get(r, c) > 0.0) as usize + sat[r * w + c + 1] + sat[(r + 1) * w + c] - sat[r * w + c];
        }
    }
    let need = params.theta * (n * n) as f64;
    let mut out = Vec::new();
    for r in 0..=rows - n {
        for c in 0..=cols - n {
            let count = sat[(r + n) * w + c + n] + sat[r * w + c] - sat[r * w + c + n] - sat[(r + n) * w + c];
            if count as f64 >= need {
                out.push(Window { row: r, col: c, size: n });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Clean,
    /// Occluding `window` changed the model's output.
    Attack { window: Window },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThemisOutcome {
    pub verdict: Verdict,
    /// Oracle calls made, including the unmasked one.
    pub queries: usize,
    pub candidates: usize,
}

/// Occludes each candidate window in turn and stops at the first one that
/// changes the oracle's inference.
pub fn themis_detect(
    input: &str,
    map: &FeatureMap,
    params: &ThemisParams,
    oracle: &dyn InferenceOracle,
) -> Result<ThemisOutcome> {
    let candidates = themis_candidates(map, params)?;
    let original = oracle.infer(input, None)?;
    let mut queries = 1;
    for window in &candidates {
        let masked = oracle.infer(input, Some(&Mask::Window(*window)))?;
        queries += 1;
        if !equivalent(&original, &masked)? {
            return Ok(ThemisOutcome {
                verdict: Verdict::Attack { window: *window },
                queries,
                candidates: candidates.len(),
            });
        }
    }
    Ok(ThemisOutcome {
        verdict: Verdict::Clean,
        queries,
        candidates: candidates.len(),
    })
}
