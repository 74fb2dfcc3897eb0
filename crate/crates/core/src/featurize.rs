//! Clustering-feature curves across a threshold ensemble.

use crate::ensemble::{binarize_ensemble, BinaryMap, ThresholdSet};
use crate::gridclust::{cluster, ClusterParams, ClusterStats};
use crate::{Error, FeatureMap, Result};

/// Curve channels in their fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    NClusters = 0,
    DMean = 1,
    DStd = 2,
    NImp = 3,
}

impl Channel {
    pub const ALL: [Channel; 4] = [
        Channel::NClusters,
        Channel::DMean,
        Channel::DStd,
        Channel::NImp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Channel::NClusters => "n_clusters",
            Channel::DMean => "d_mean",
            Channel::DStd => "d_std",
            Channel::NImp => "n_imp",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }
}

/// Subset of the four curve channels, kept in channel order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ChannelMask(u8);

impl ChannelMask {
    pub const ALL: ChannelMask = ChannelMask(0b1111);

    pub fn from_bits(bits: u8) -> Result<Self> {
        if bits == 0 || bits > 0b1111 {
            return Err(Error::Argument(format!("invalid channel mask {bits:#06b}")));
        }
        Ok(Self(bits))
    }

    pub fn from_channels(channels: &[Channel]) -> Result<Self> {
        Self::from_bits(channels.iter().fold(0, |acc, c| acc | (1 << *c as u8)))
    }

    /// All channels except `channel`.
    pub fn without(channel: Channel) -> Self {
        Self(0b1111 & !(1 << channel as u8))
    }

    /// Parses a comma-separated list of channel names, or `all`.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim() == "all" {
            return Ok(Self::ALL);
        }
        let channels = text
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                Channel::from_name(s)
                    .ok_or_else(|| Error::Argument(format!("unknown channel '{s}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_channels(&channels)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn contains(self, channel: Channel) -> bool {
        self.0 & (1 << channel as u8) != 0
    }

    pub fn channels(self) -> Vec<Channel> {
        Channel::ALL.into_iter().filter(|c| self.contains(*c)).collect()
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
}

impl Default for ChannelMask {
    fn default() -> Self {
        Self::ALL
    }
}

/// Channel-by-threshold matrix of clustering statistics, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCurves {
    channels: usize,
    len: usize,
    data: Vec<f64>,
    preprocessed: bool,
}

impl FeatureCurves {
    pub fn new(channels: usize, len: usize, data: Vec<f64>, preprocessed: bool) -> Result<Self> {
        if channels == 0 || len == 0 || data.len() != channels * len {
            return Err(Error::Argument(format!(
                "curves {channels}x{len} with {} values",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("curves must be finite".into()));
        }
        Ok(Self {
            channels,
            len,
            data,
            preprocessed,
        })
    }

    pub fn zeros(channels: usize, len: usize) -> Self {
        Self {
            channels,
            len,
            data: vec![0.0; channels * len],
            preprocessed: true,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_preprocessed(&self) -> bool {
        self.preprocessed
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, channel: usize) -> &[f64] {
        &self.data[channel * self.len..(channel + 1) * self.len]
    }

    pub fn row_mut(&mut self, channel: usize) -> &mut [f64] {
        &mut self.data[channel * self.len..(channel + 1) * self.len]
    }

    pub fn get(&self, channel: usize, t: usize) -> f64 {
        self.data[channel * self.len + t]
    }

    /// Keeps only the rows selected by `mask`. Requires all four channels.
    pub fn select(&self, mask: ChannelMask) -> Result<Self> {
        if self.channels != 4 {
            return Err(Error::Argument(format!(
                "channel selection needs 4 channels, have {}",
                self.channels
            )));
        }
        let data = mask
            .channels()
            .into_iter()
            .flat_map(|c| self.row(c as usize).to_vec())
            .collect();
        Ok(Self {
            channels: mask.len(),
            len: self.len,
            data,
            preprocessed: self.preprocessed,
        })
    }
}

/// Raw clustering statistics: column `b` describes the map binarized at the
/// `b`-th threshold.
pub fn curves(map: &FeatureMap, thresholds: &ThresholdSet, params: &ClusterParams) -> FeatureCurves {
    let len = thresholds.len();
    let mut data = vec![0.0; 4 * len];
    let maps = binarize_ensemble(map, thresholds);
    let mut prev: Option<(&BinaryMap, ClusterStats)> = None;
    for (b, binary) in maps.iter().enumerate() {
        // neighbouring thresholds often select the same cells; reuse their stats
        let stats = match prev {
            Some((m, s)) if m == binary => s,
            _ => cluster(binary, params),
        };
        prev = Some((binary, stats));
        for (ch, v) in stats.as_array().into_iter().enumerate() {
            data[ch * len + b] = v;
        }
    }
    FeatureCurves {
        channels: 4,
        len,
        data,
        preprocessed: false,
    }
}

/// Maps `row` affinely onto `[-1, 1]` (min to -1, max to 1); constant rows become 0.
pub fn rescale_row(row: &mut [f64]) {
    let (lo, hi) = row
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if hi > lo {
        let span = hi - lo;
        for v in row.iter_mut() {
            *v = 2.0 * (*v - lo) / span - 1.0;
        }
    } else {
        row.fill(0.0);
    }
}

/// Rescales every row to `[-1, 1]`.
pub fn preprocess(raw: &FeatureCurves) -> Result<FeatureCurves> {
    if raw.preprocessed {
        return Err(Error::Argument("curves are already preprocessed".into()));
    }
    let mut out = raw.clone();
    for ch in 0..out.channels {
        rescale_row(out.row_mut(ch));
    }
    out.preprocessed = true;
    Ok(out)
}

/// Full featurization: raw curves, preprocessing, then channel selection.
pub fn featurize_sample(
    map: &FeatureMap,
    thresholds: &ThresholdSet,
    params: &ClusterParams,
    mask: ChannelMask,
) -> Result<FeatureCurves> {
    if mask.is_empty() {
        return Err(Error::Argument("channel mask must not be empty".into()));
    }
    preprocess(&curves(map, thresholds, params))?.select(mask)
}

/// Raw curves as CSV with header `beta,n_clusters,d_mean,d_std,n_imp`.
pub fn curves_csv(raw: &FeatureCurves, thresholds: &ThresholdSet) -> String {
    let mut out = String::from("beta,n_clusters,d_mean,d_std,n_imp\n");
    for (b, beta) in thresholds.values().iter().enumerate() {
        out.push_str(&format!(
            "{beta},{},{},{},{}\n",
            raw.get(0, b),
            raw.get(1, b),
            raw.get(2, b),
            raw.get(3, b)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn curves_of(raw: &[f64]) -> FeatureCurves {
        FeatureCurves::new(1, raw.len(), raw.to_vec(), false).unwrap()
    }

    #[test]
    fn preprocess_rows() {
        assert_eq!(preprocess(&curves_of(&[0.0, 5.0, 10.0])).unwrap().data(), &[-1.0, 0.0, 1.0]);
        assert_eq!(preprocess(&curves_of(&[3.0, 3.0, 3.0])).unwrap().data(), &[0.0, 0.0, 0.0]);
        assert_eq!(preprocess(&curves_of(&[1.0, 2.0])).unwrap().data(), &[-1.0, 1.0]);
        let done = preprocess(&curves_of(&[1.0, 2.0])).unwrap();
        assert!(preprocess(&done).is_err());
    }

    #[test]
    fn small_map_curves() {
        let m = FeatureMap::from_rows(&[vec![0.0, 2.0], vec![4.0, 4.0]]).unwrap();
        let set = ThresholdSet::new(vec![0.0, 0.5]).unwrap();
        let raw = curves(&m, &set, &ClusterParams::default());
        assert!(!raw.is_preprocessed());
        assert_eq!(raw.row(0), &[0.0, 0.0]);
        assert_eq!(raw.row(3), &[4.0, 3.0]);
        assert_eq!(raw.row(1), &[0.0, 0.0]);
        assert_eq!(raw.row(2), &[0.0, 0.0]);
    }

    #[test]
    fn beta_zero_column_counts_every_cell() {
        let values = (0..30).map(|i| (i % 7) as f64).collect();
        let m = FeatureMap::new(5, 6, values).unwrap();
        let raw = curves(&m, &ThresholdSet::equidistant(5).unwrap(), &ClusterParams::default());
        assert_eq!(raw.get(3, 0), 30.0);
        assert!(raw.row(3).windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn masks() {
        let m = FeatureMap::new(6, 6, (0..36).map(|i| ((i * 13) % 11) as f64).collect()).unwrap();
        let set = ThresholdSet::equidistant(8).unwrap();
        let params = ClusterParams::default();
        let full = featurize_sample(&m, &set, &params, ChannelMask::ALL).unwrap();
        assert_eq!((full.channels(), full.len()), (4, 8));
        assert!(full.data().iter().all(|v| (-1.0..=1.0).contains(v)));

        let no_std = featurize_sample(&m, &set, &params, ChannelMask::without(Channel::DStd)).unwrap();
        assert_eq!(no_std.channels(), 3);
        assert_eq!(no_std.row(0), full.row(0));
        assert_eq!(no_std.row(1), full.row(1));
        assert_eq!(no_std.row(2), full.row(3));

        assert!(ChannelMask::from_bits(0).is_err());
        assert_eq!(ChannelMask::parse("n_clusters,n_imp").unwrap().len(), 2);
        assert_eq!(ChannelMask::parse("all").unwrap(), ChannelMask::ALL);
        assert!(ChannelMask::parse("entropy").is_err());
    }

    #[test]
    fn csv_layout() {
        let m = FeatureMap::from_rows(&[vec![0.0, 2.0], vec![4.0, 4.0]]).unwrap();
        let set = ThresholdSet::new(vec![0.0, 0.5]).unwrap();
        let csv = curves_csv(&curves(&m, &set, &ClusterParams::default()), &set);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "beta,n_clusters,d_mean,d_std,n_imp");
        assert_eq!(lines[1], "0,0,0,0,4");
        assert_eq!(lines[2], "0.5,0,0,0,3");
    }

    proptest! {
        #[test]
        fn rescaled_rows_hit_both_ends(row in prop::collection::vec(-50.0f64..50.0, 2..30)) {
            let mut out = row.clone();
            rescale_row(&mut out);
            let lo = row.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if hi > lo {
                prop_assert!(out.iter().all(|v| (-1.0..=1.0).contains(v)));
                prop_assert!(out.contains(&-1.0) && out.contains(&1.0));
                let mut again = out.clone();
                rescale_row(&mut again);
                prop_assert!(again.iter().zip(&out).all(|(a, b)| (a - b).abs() < 1e-12));
            } else {
                prop_assert!(out.iter().all(|v| *v == 0.0));
            }
        }
    }
}
