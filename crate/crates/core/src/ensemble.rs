//! Saliency-threshold ensembles and feature-map binarization.

use crate::{Error, FeatureMap, Result};

/// Strictly increasing saliency thresholds, each in `[0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSet {
    values: Vec<f64>,
}

impl ThresholdSet {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Argument("threshold set must not be empty".into()));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..1.0).contains(*v)) {
            return Err(Error::Argument(format!("threshold {v} outside [0, 1)")));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Argument(
                "thresholds must be strictly increasing".into(),
            ));
        }
        Ok(Self { values })
    }

    /// `{0, 1/B, ..., (B-1)/B}`.
    pub fn equidistant(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::Argument("ensemble size must be at least 1".into()));
        }
        Self::new((0..size).map(|b| b as f64 / size as f64).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Same as [`ThresholdSet::equidistant`].
pub fn make_equidistant_thresholds(size: usize) -> Result<ThresholdSet> {
    ThresholdSet::equidistant(size)
}

/// Boolean grid with the shape of its source feature map.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMap {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl BinaryMap {
    pub fn new(rows: usize, cols: usize, bits: Vec<bool>) -> Result<Self> {
        if rows == 0 || cols == 0 || bits.len() != rows * cols {
            return Err(Error::Argument(format!(
                "binary map {rows}x{cols} with {} bits",
                bits.len()
            )));
        }
        Ok(Self { rows, cols, bits })
    }

    /// Parses rows of `'#'`/`'1'` (set) and `'.'`/`'0'` (unset), e.g. `".#.\n###"`.
    pub fn from_pattern(pattern: &str) -> Result<Self> {
        let lines: Vec<&str> = pattern
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect();
        let cols = lines.first().map_or(0, |l| l.len());
        if lines.iter().any(|l| l.len() != cols) {
            return Err(Error::Argument("ragged binary pattern".into()));
        }
        let bits = lines
            .iter()
            .flat_map(|l| l.chars())
            .map(|c| match c {
                '#' | '1' => Ok(true),
                '.' | '0' => Ok(false),
                other => Err(Error::Argument(format!("bad pattern char '{other}'"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(lines.len(), cols, bits)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.cols + col]
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// True when every set bit of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BinaryMap) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self.bits.iter().zip(&other.bits).all(|(a, b)| !a || *b)
    }
}

/// `value >= beta * max`, decided on the exact real product.
///
/// Deciding exactly is what makes binarization invariant to positive scaling
/// of the map whenever the scaled map is itself exact.
#[inline]
fn at_or_above(value: f64, beta: f64, max: f64) -> bool {
    let t = beta * max;
    let slack = t * (4.0 * f64::EPSILON);
    if value > t + slack {
        true
    } else if value < t - slack {
        false
    } else {
        (-beta).mul_add(max, value) >= 0.0
    }
}

/// Marks cells with `map[i][j] >= beta * max(map)`.
pub fn binarize(map: &FeatureMap, beta: f64) -> BinaryMap {
    binarize_with_max(map, beta, map.max())
}

fn binarize_with_max(map: &FeatureMap, beta: f64, max: f64) -> BinaryMap {
    debug_assert!((0.0..=1.0).contains(&beta));
    BinaryMap {
        rows: map.rows(),
        cols: map.cols(),
        bits: map
            .values()
            .iter()
            .map(|&v| at_or_above(v, beta, max))
            .collect(),
    }
}

/// One binary map per threshold, in threshold order.
pub fn binarize_ensemble(map: &FeatureMap, thresholds: &ThresholdSet) -> Vec<BinaryMap> {
    let max = map.max();
    thresholds
        .values()
        .iter()
        .map(|&beta| binarize_with_max(map, beta, max))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn example_map() -> FeatureMap {
        FeatureMap::from_rows(&[vec![0.0, 2.0], vec![4.0, 4.0]]).unwrap()
    }

    #[test]
    fn equidistant_sets() {
        let b20 = ThresholdSet::equidistant(20).unwrap();
        assert_eq!(b20.len(), 20);
        assert_eq!(b20.values()[0], 0.0);
        assert!((b20.values()[1] - 0.05).abs() < 1e-15);
        assert!((b20.values()[19] - 0.95).abs() < 1e-15);
        assert_eq!(
            ThresholdSet::equidistant(4).unwrap().values(),
            &[0.0, 0.25, 0.5, 0.75]
        );
        assert_eq!(ThresholdSet::equidistant(1).unwrap().values(), &[0.0]);
        assert!(ThresholdSet::equidistant(0).is_err());
    }

    #[test]
    fn threshold_set_validation() {
        assert!(ThresholdSet::new(vec![]).is_err());
        assert!(ThresholdSet::new(vec![0.5, 0.5]).is_err());
        assert!(ThresholdSet::new(vec![0.0, 1.0]).is_err());
        assert!(ThresholdSet::new(vec![-0.1]).is_err());
    }

    #[test]
    fn binarize_examples() {
        let m = example_map();
        assert_eq!(binarize(&m, 0.5), BinaryMap::from_pattern(".#\n##").unwrap());
        assert_eq!(binarize(&m, 0.0).count_ones(), 4);
        assert_eq!(binarize(&FeatureMap::zeros(3, 3).unwrap(), 0.7).count_ones(), 9);
    }

    #[test]
    fn ensemble_examples() {
        let m = example_map();
        let set = ThresholdSet::new(vec![0.0, 0.5]).unwrap();
        let maps = binarize_ensemble(&m, &set);
        assert_eq!(maps[0].count_ones(), 4);
        assert_eq!(maps[1], binarize(&m, 0.5));
        let maps = binarize_ensemble(&m, &ThresholdSet::equidistant(20).unwrap());
        assert_eq!(maps.len(), 20);
        assert!(maps.iter().all(|b| b.rows() == 2 && b.cols() == 2));
        assert_eq!(binarize_ensemble(&m.scaled(3.0).unwrap(), &set), binarize_ensemble(&m, &set));
    }

    #[test]
    fn exact_tie_is_inclusive() {
        // 0.3 * 10 rounds below 3.0; the exact product is slightly above 3.0.
        let m = FeatureMap::from_rows(&[vec![3.0, 10.0]]).unwrap();
        let exact_product_exceeds = 0.3f64.mul_add(10.0, -3.0) > 0.0;
        assert_eq!(binarize(&m, 0.3).get(0, 0), !exact_product_exceeds);
    }

    fn arb_map() -> impl Strategy<Value = FeatureMap> {
        (1usize..8, 1usize..8).prop_flat_map(|(r, c)| {
            prop::collection::vec(0.0f64..10.0, r * c)
                .prop_map(move |v| FeatureMap::new(r, c, v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn monotone_in_beta(map in arb_map(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(binarize(&map, hi).is_subset_of(&binarize(&map, lo)));
        }

        #[test]
        fn zero_threshold_sets_everything(map in arb_map()) {
            prop_assert_eq!(binarize(&map, 0.0).count_ones(), map.rows() * map.cols());
        }

        #[test]
        fn power_of_two_scaling_is_exact(map in arb_map(), beta in 0.0f64..1.0, k in -20i32..20) {
            let scaled = map.scaled(2f64.powi(k)).unwrap();
            prop_assert_eq!(binarize(&scaled, beta), binarize(&map, beta));
        }
    }
}
