//! ROC analysis, detection accuracy and rates, and pipeline timing.

mod bench;

pub use bench::{bench_pipeline, quantile, BenchReport, TimingSummary};

use crate::fmap_io::Label;
use crate::{Error, Result};

/// A detection score with its ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredSample {
    pub score: f64,
    pub label: Label,
    pub effective: Option<bool>,
    pub patch_count: Option<u32>,
}

impl ScoredSample {
    pub fn new(score: f64, label: Label) -> Self {
        Self {
            score,
            label,
            effective: None,
            patch_count: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    /// Samples scoring at or above this value are flagged; the first point uses +inf.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,fpr,tpr\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.threshold, p.fpr, p.tpr));
        }
        out
    }
}

fn class_counts(samples: &[ScoredSample]) -> (usize, usize) {
    let pos = samples.iter().filter(|s| s.label.is_attacked()).count();
    (pos, samples.len() - pos)
}

fn check_scores(samples: &[ScoredSample]) -> Result<()> {
    if samples.iter().any(|s| !s.score.is_finite()) {
        return Err(Error::Argument("scores must be finite".into()));
    }
    let (pos, neg) = class_counts(samples);
    if pos == 0 || neg == 0 {
        return Err(Error::Argument(
            "ROC analysis needs both clean and attacked samples".into(),
        ));
    }
    Ok(())
}

/// ROC curve over every distinct score, with trapezoidal AUC.
pub fn roc_curve(samples: &[ScoredSample]) -> Result<RocCurve> {
    check_scores(samples)?;
    let (pos, neg) = class_counts(samples);
    let mut sorted: Vec<&ScoredSample> = samples.iter().collect();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let score = sorted[i].score;
        while i < sorted.len() && sorted[i].score == score {
            if sorted[i].label.is_attacked() {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: score,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum();
    Ok(RocCurve { points, auc })
}

/// Which attacked samples count toward accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EffectFilter {
    #[default]
    All,
    /// Attacked samples explicitly marked effective.
    EffectiveOnly,
    /// Attacked samples explicitly marked non-effective.
    NonEffectiveOnly,
}

impl EffectFilter {
    fn keeps(self, s: &ScoredSample) -> bool {
        if !s.label.is_attacked() {
            return true;
        }
        match self {
            EffectFilter::All => true,
            EffectFilter::EffectiveOnly => s.effective == Some(true),
            EffectFilter::NonEffectiveOnly => s.effective == Some(false),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EffectFilter::All => "all",
            EffectFilter::EffectiveOnly => "effective_only",
            EffectFilter::NonEffectiveOnly => "noneffective_only",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "all" => Ok(EffectFilter::All),
            "effective_only" => Ok(EffectFilter::EffectiveOnly),
            "noneffective_only" => Ok(EffectFilter::NonEffectiveOnly),
            other => Err(Error::Argument(format!("unknown filter '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionMetrics {
    pub threshold: f64,
    /// Correct decisions over clean samples plus the filtered attacked samples.
    pub accuracy: f64,
    /// Recall over all attacked samples, regardless of the filter.
    pub detection_rate: f64,
    pub fpr: f64,
    pub n_clean: usize,
    /// Attacked samples that passed the filter.
    pub n_attacked: usize,
    /// Set when the filter removed every attacked sample; accuracy then covers clean samples only.
    pub no_attacked_after_filter: bool,
}

/// Metrics with "detected" meaning `score >= threshold`.
pub fn detection_metrics(samples: &[ScoredSample], threshold: f64, filter: EffectFilter) -> DetectionMetrics {
    let flagged = |s: &ScoredSample| s.score >= threshold;
    let clean: Vec<&ScoredSample> = samples.iter().filter(|s| !s.label.is_attacked()).collect();
    let attacked: Vec<&ScoredSample> = samples.iter().filter(|s| s.label.is_attacked()).collect();
    let kept: Vec<&ScoredSample> = samples.iter().filter(|s| filter.keeps(s)).collect();
    let n_attacked = kept.iter().filter(|s| s.label.is_attacked()).count();

    let correct = kept.iter().filter(|s| flagged(s) == s.label.is_attacked()).count();
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    DetectionMetrics {
        threshold,
        accuracy: ratio(correct, kept.len()),
        detection_rate: ratio(attacked.iter().filter(|s| flagged(s)).count(), attacked.len()),
        fpr: ratio(clean.iter().filter(|s| flagged(s)).count(), clean.len()),
        n_clean: clean.len(),
        n_attacked,
        no_attacked_after_filter: n_attacked == 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    MaxAccuracy(EffectFilter),
}

/// Scans thresholds between consecutive distinct scores (plus one flagging
/// everything and one flagging nothing) and returns the best by `criterion`.
/// Ties go to the lower false-positive rate, then the lower threshold.
pub fn best_threshold(samples: &[ScoredSample], criterion: Criterion) -> Result<DetectionMetrics> {
    check_scores(samples)?;
    let Criterion::MaxAccuracy(filter) = criterion;
    let mut scores: Vec<f64> = samples.iter().map(|s| s.score).collect();
    scores.sort_by(f64::total_cmp);
    scores.dedup();

    let mut candidates = vec![scores[0]];
    candidates.extend(scores.windows(2).map(|w| (w[0] + w[1]) / 2.0));
    let top = *scores.last().unwrap();
    candidates.push(if top < 1.0 { (top + 1.0) / 2.0 } else { f64::INFINITY });

    let mut best: Option<DetectionMetrics> = None;
    for t in candidates {
        let m = detection_metrics(samples, t, filter);
        let better = match &best {
            None => true,
            Some(b) => {
                m.accuracy > b.accuracy
                    || (m.accuracy == b.accuracy && m.fpr < b.fpr)
                    || (m.accuracy == b.accuracy && m.fpr == b.fpr && m.threshold < b.threshold)
            }
        };
        if better {
            best = Some(m);
        }
    }
    Ok(best.expect("at least two candidates"))
}
