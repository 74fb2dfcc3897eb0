use super::{ioa, BBox, Mask};
use crate::{Error, Result};

/// The `2 * (k_x + k_y)` half-image masks: each of `k_x` horizontal lines at
/// row `round(i * height / (k_x + 1))` yields a mask above and a mask below
/// it, then likewise for `k_y` vertical lines across the width.
pub fn half_masks(width: usize, height: usize, k_x: usize, k_y: usize) -> Vec<Mask> {
    let line = |i: usize, extent: usize, k: usize| (2 * i * extent + k + 1) / (2 * (k + 1));
    let mut masks = Vec::with_capacity(2 * (k_x + k_y));
    for i in 1..=k_x {
        let y = line(i, height, k_x);
        masks.push(Mask::Rows { start: 0, end: y });
        masks.push(Mask::Rows { start: y, end: height });
    }
    for i in 1..=k_y {
        let x = line(i, width, k_y);
        masks.push(Mask::Cols { start: 0, end: x });
        masks.push(Mask::Cols { start: x, end: width });
    }
    masks
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectSeekerScore {
    /// One minus the worst best-match IoA over all masked boxes.
    pub score: f64,
    /// Set when there were no original boxes; the score is then 0.
    pub no_original_boxes: bool,
    /// Masked inferences that returned no boxes and so did not contribute.
    pub empty_masked_sets: usize,
}

/// Attack score from the unmasked detections and one detection set per half-mask.
pub fn objectseeker_score(
    original: &[BBox],
    masked: &[(Mask, Vec<BBox>)],
    k_x: usize,
    k_y: usize,
) -> Result<ObjectSeekerScore> {
    if masked.len() != 2 * (k_x + k_y) {
        return Err(Error::Argument(format!(
            "expected {} masked detection sets for k_x={k_x}, k_y={k_y}, got {}",
            2 * (k_x + k_y),
            masked.len()
        )));
    }
    let empty_masked_sets = masked.iter().filter(|(_, boxes)| boxes.is_empty()).count();
    if original.is_empty() {
        return Ok(ObjectSeekerScore {
            score: 0.0,
            no_original_boxes: true,
            empty_masked_sets,
        });
    }
    let alpha = masked
        .iter()
        .flat_map(|(_, boxes)| boxes)
        .map(|q| original.iter().map(|r| ioa(q, r)).fold(0.0, f64::max))
        .fold(1.0, f64::min);
    Ok(ObjectSeekerScore {
        score: 1.0 - alpha,
        no_original_boxes: false,
        empty_masked_sets,
    })
}
