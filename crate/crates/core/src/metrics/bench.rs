use std::collections::BTreeMap;
use std::time::Instant;

use crate::adnet::ADModel;
use crate::ensemble::ThresholdSet;
use crate::featurize::featurize_sample;
use crate::gridclust::ClusterParams;
use crate::{Error, FeatureMap, Result};

/// Median and quartiles of a set of timings, in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingSummary {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl TimingSummary {
    fn of(times: &[f64]) -> Self {
        let mut sorted = times.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self {
            n: sorted.len(),
            min: sorted[0],
            q1: quantile(&sorted, 0.25),
            median: quantile(&sorted, 0.5),
            q3: quantile(&sorted, 0.75),
            max: sorted[sorted.len() - 1],
        }
    }
}

/// Linearly interpolated quantile of an ascending, non-empty slice.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    /// Seconds per map, in input order.
    pub times: Vec<f64>,
    pub patch_counts: Vec<Option<u32>>,
    pub overall: TimingSummary,
    pub by_patch_count: BTreeMap<u32, TimingSummary>,
}

impl BenchReport {
    /// Per-sample rows, a blank line, then one summary row per group.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample,patch_count,seconds\n");
        for (i, (t, p)) in self.times.iter().zip(&self.patch_counts).enumerate() {
            let p = p.map(|p| p.to_string()).unwrap_or_default();
            out.push_str(&format!("{i},{p},{t:.9}\n"));
        }
        out.push_str("\ngroup,n,min,q1,median,q3,max\n");
        let mut row = |name: String, s: &TimingSummary| {
            out.push_str(&format!(
                "{name},{},{:.9},{:.9},{:.9},{:.9},{:.9}\n",
                s.n, s.min, s.q1, s.median, s.q3, s.max
            ));
        };
        row("all".into(), &self.overall);
        for (p, s) in &self.by_patch_count {
            row(format!("patch_count={p}"), s);
        }
        out
    }
}

/// Times featurize plus forward for each map on the calling thread. The
/// first map is run once untimed to warm caches and FFT plans.
pub fn bench_pipeline(
    maps: &[(FeatureMap, Option<u32>)],
    thresholds: &ThresholdSet,
    params: &ClusterParams,
    model: &ADModel,
) -> Result<BenchReport> {
    if maps.is_empty() {
        return Err(Error::Argument("nothing to benchmark".into()));
    }
    let mask = model.config.channel_mask;
    let run = |map: &FeatureMap| -> Result<f64> {
        model.score(&featurize_sample(map, thresholds, params, mask)?)
    };
    std::hint::black_box(run(&maps[0].0)?);

    let mut times = Vec::with_capacity(maps.len());
    for (map, _) in maps {
        let start = Instant::now();
        std::hint::black_box(run(map)?);
        times.push(start.elapsed().as_secs_f64());
    }

    let mut groups: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for (t, (_, p)) in times.iter().zip(maps) {
        if let Some(p) = p {
            groups.entry(*p).or_default().push(*t);
        }
    }
    Ok(BenchReport {
        overall: TimingSummary::of(&times),
        by_patch_count: groups.iter().map(|(p, v)| (*p, TimingSummary::of(v))).collect(),
        patch_counts: maps.iter().map(|(_, p)| *p).collect(),
        times,
    })
}
