//! Shapley attribution of a detection score to the curve channels.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adnet::ADModel;
use crate::featurize::{Channel, FeatureCurves};
use crate::{Error, Result};

/// Per-channel contributions to `full_score - baseline_score`.
#[derive(Debug, Clone, PartialEq)]
pub struct Attribution {
    /// Channels the model consumes, in input-row order.
    pub channels: Vec<Channel>,
    pub phi: Vec<f64>,
    pub baseline_score: f64,
    pub full_score: f64,
}

pub const SHAP_CSV_HEADER: &str = "sample,phi_nclus,phi_avg,phi_sd,phi_impneu,score,baseline_score";

impl Attribution {
    /// `full_score - baseline_score - sum(phi)`.
    pub fn efficiency_residual(&self) -> f64 {
        self.full_score - self.baseline_score - self.phi.iter().sum::<f64>()
    }

    /// One CSV row under [`SHAP_CSV_HEADER`]; channels the model does not use are left empty.
    pub fn csv_row(&self, sample: &str) -> String {
        let mut fields = vec![sample.to_string()];
        for c in Channel::ALL {
            fields.push(
                self.channels
                    .iter()
                    .position(|x| *x == c)
                    .map(|i| self.phi[i].to_string())
                    .unwrap_or_default(),
            );
        }
        fields.push(self.full_score.to_string());
        fields.push(self.baseline_score.to_string());
        fields.join(",")
    }
}

/// Exact Shapley values of `value` over `n` players; `value` receives the
/// coalition as a bitmask and is called once for each of the `2^n` subsets.
pub fn shapley_exact<F>(n: usize, mut value: F) -> Result<Vec<f64>>
where
    F: FnMut(u32) -> Result<f64>,
{
    let full = 1u32 << n;
    let values: Vec<f64> = (0..full).map(&mut value).collect::<Result<_>>()?;
    let fact = |k: usize| (1..=k).map(|v| v as f64).product::<f64>();
    let weight: Vec<f64> = (0..n).map(|s| fact(s) * fact(n - 1 - s) / fact(n)).collect();
    Ok((0..n)
        .map(|i| {
            let bit = 1u32 << i;
            (0..full)
                .filter(|s| s & bit == 0)
                .map(|s| weight[s.count_ones() as usize] * (values[(s | bit) as usize] - values[s as usize]))
                .sum()
        })
        .collect())
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).map(|i| (n - i) as f64 / (i + 1) as f64).product()
}

/// Kernel SHAP estimate from `n_samples` sampled coalitions. Sampled
/// coalitions are deduplicated and each distinct one is weighted by the
/// Shapley kernel, so covering every coalition reproduces the exact values.
/// The efficiency constraint is imposed by eliminating the last player.
pub fn shapley_kernel<F>(n: usize, mut value: F, n_samples: usize, seed: u64) -> Result<Vec<f64>>
where
    F: FnMut(u32) -> Result<f64>,
{
    if n_samples < 16 {
        return Err(Error::Argument(format!("kernel SHAP needs at least 16 samples, got {n_samples}")));
    }
    let full = (1u32 << n) - 1;
    let empty_value = value(0)?;
    let total = value(full)? - empty_value;
    if n == 1 {
        return Ok(vec![total]);
    }

    let mut chosen = vec![false; full as usize + 1];
    for i in 0..n {
        chosen[1 << i] = true;
        chosen[(full ^ (1 << i)) as usize] = true;
    }
    // coalition sizes are drawn in proportion to the total kernel weight of each size
    let size_weight: Vec<f64> = (1..n).map(|s| (n - 1) as f64 / (s * (n - s)) as f64).collect();
    let weight_sum: f64 = size_weight.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n_samples {
        let mut u = rng.random::<f64>() * weight_sum;
        let mut size = n - 1;
        for (k, w) in size_weight.iter().enumerate() {
            if u < *w {
                size = k + 1;
                break;
            }
            u -= w;
        }
        let mask = sample(&mut rng, n, size).iter().fold(0u32, |m, i| m | (1 << i));
        chosen[mask as usize] = true;
    }

    // weighted least squares in the first n-1 players with phi_last = total - sum
    let m = n - 1;
    let last = 1u32 << m;
    let mut ata = vec![0.0; m * m];
    let mut atb = vec![0.0; m];
    for s in 1..full {
        if !chosen[s as usize] {
            continue;
        }
        let size = s.count_ones() as usize;
        let w = (n - 1) as f64 / (binomial(n, size) * (size * (n - size)) as f64);
        let z_last = (s & last != 0) as u8 as f64;
        let x: Vec<f64> = (0..m).map(|i| ((s >> i) & 1) as f64 - z_last).collect();
        let y = value(s)? - empty_value - z_last * total;
        for i in 0..m {
            atb[i] += w * x[i] * y;
            for j in 0..m {
                ata[i * m + j] += w * x[i] * x[j];
            }
        }
    }
    match solve(ata, atb, m) {
        Some(mut phi) => {
            let rest: f64 = phi.iter().sum();
            phi.push(total - rest);
            Ok(phi)
        }
        None => shapley_exact(n, value),
    }
}

/// Gaussian elimination with partial pivoting; `None` when the system is singular.
fn solve(mut a: Vec<f64>, mut b: Vec<f64>, m: usize) -> Option<Vec<f64>> {
    let scale = a.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    for col in 0..m {
        let pivot = (col..m).max_by(|&i, &j| a[i * m + col].abs().total_cmp(&a[j * m + col].abs()))?;
        if a[pivot * m + col].abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return None;
        }
        for k in 0..m {
            a.swap(col * m + k, pivot * m + k);
        }
        b.swap(col, pivot);
        for row in col + 1..m {
            let f = a[row * m + col] / a[col * m + col];
            for k in col..m {
                a[row * m + k] -= f * a[col * m + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; m];
    for row in (0..m).rev() {
        let tail: f64 = (row + 1..m).map(|k| a[row * m + k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row * m + row];
    }
    Some(x)
}

fn hybrid_scorer<'a>(
    model: &'a ADModel,
    input: &'a FeatureCurves,
    baseline: &'a FeatureCurves,
) -> impl FnMut(u32) -> Result<f64> + 'a {
    let mut buf = baseline.clone();
    move |coalition| {
        for c in 0..input.channels() {
            let src = if coalition & (1 << c) != 0 { input } else { baseline };
            buf.row_mut(c).copy_from_slice(src.row(c));
        }
        model.score(&buf)
    }
}

fn prepare(model: &ADModel, input: &FeatureCurves, baseline: Option<&FeatureCurves>) -> Result<FeatureCurves> {
    model.check_input(input)?;
    let baseline = baseline
        .cloned()
        .unwrap_or_else(|| FeatureCurves::zeros(input.channels(), input.len()));
    if baseline.channels() != input.channels() || baseline.len() != input.len() {
        return Err(Error::Argument(format!(
            "baseline is {}x{} but input is {}x{}",
            baseline.channels(),
            baseline.len(),
            input.channels(),
            input.len()
        )));
    }
    Ok(baseline)
}

fn attribution(model: &ADModel, input: &FeatureCurves, baseline: &FeatureCurves, phi: Vec<f64>) -> Result<Attribution> {
    Ok(Attribution {
        channels: model.config.channel_mask.channels(),
        phi,
        baseline_score: model.score(baseline)?,
        full_score: model.score(input)?,
    })
}

/// Exact Shapley attribution over the model's channels; `baseline` defaults to all zeros.
pub fn exact_shapley(model: &ADModel, input: &FeatureCurves, baseline: Option<&FeatureCurves>) -> Result<Attribution> {
    let baseline = prepare(model, input, baseline)?;
    let phi = shapley_exact(input.channels(), hybrid_scorer(model, input, &baseline))?;
    attribution(model, input, &baseline, phi)
}

/// Kernel SHAP attribution; see [`shapley_kernel`].
pub fn kernel_shap(
    model: &ADModel,
    input: &FeatureCurves,
    baseline: Option<&FeatureCurves>,
    n_samples: usize,
    seed: u64,
) -> Result<Attribution> {
    let baseline = prepare(model, input, baseline)?;
    let phi = shapley_kernel(input.channels(), hybrid_scorer(model, input, &baseline), n_samples, seed)?;
    attribution(model, input, &baseline, phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adnet::{init_model, ADConfig};
    use crate::featurize::ChannelMask;
    use proptest::prelude::*;

    /// Shapley values from the permutation definition: average marginal
    /// contribution over all orderings of the players.
    fn permutation_shapley(n: usize, value: &dyn Fn(u32) -> f64) -> Vec<f64> {
        fn perms(items: Vec<usize>) -> Vec<Vec<usize>> {
            if items.len() <= 1 {
                return vec![items];
            }
            let mut out = Vec::new();
            for i in 0..items.len() {
                let mut rest = items.clone();
                let head = rest.remove(i);
                for mut p in perms(rest) {
                    p.insert(0, head);
                    out.push(p);
                }
            }
            out
        }
        let all = perms((0..n).collect());
        let mut phi = vec![0.0; n];
        for order in &all {
            let mut s = 0u32;
            for &p in order {
                phi[p] += value(s | 1 << p) - value(s);
                s |= 1 << p;
            }
        }
        phi.iter().map(|v| v / all.len() as f64).collect()
    }

    fn game(table: &[f64]) -> impl Fn(u32) -> f64 + '_ {
        move |s| table[s as usize]
    }

    #[test]
    fn additive_game_recovers_individual_effects() {
        let effects = [0.3, -0.1, 0.0, 0.7];
        let value = |s: u32| 0.2 + (0..4).filter(|i| s & (1 << i) != 0).map(|i| effects[i]).sum::<f64>();
        let exact = shapley_exact(4, |s| Ok(value(s))).unwrap();
        let kernel = shapley_kernel(4, |s| Ok(value(s)), 500, 3).unwrap();
        for i in 0..4 {
            assert!((exact[i] - effects[i]).abs() < 1e-12);
            assert!((kernel[i] - effects[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_and_null_players() {
        // players 0 and 1 interchangeable, player 3 never matters
        let value = |s: u32| {
            let a = (s & 1 != 0) as u8 as f64 + (s & 2 != 0) as u8 as f64;
            a * a + 0.5 * (s & 4 != 0) as u8 as f64 * a
        };
        let phi = shapley_exact(4, |s| Ok(value(s))).unwrap();
        assert!((phi[0] - phi[1]).abs() < 1e-12);
        assert_eq!(phi[3], 0.0);
    }

    #[test]
    fn kernel_rejects_few_samples() {
        assert!(shapley_kernel(4, |_| Ok(0.0), 15, 0).is_err());
    }

    #[test]
    fn small_games() {
        assert_eq!(shapley_kernel(1, |s| Ok(s as f64 * 2.0), 16, 0).unwrap(), vec![2.0]);
        let table = [0.0, 1.0, 3.0, 7.0];
        let exact = shapley_exact(2, |s| Ok(table[s as usize])).unwrap();
        assert_eq!(exact, vec![2.5, 4.5]);
        let kernel = shapley_kernel(2, |s| Ok(table[s as usize]), 16, 0).unwrap();
        assert!((kernel[0] - 2.5).abs() < 1e-12 && (kernel[1] - 4.5).abs() < 1e-12);
    }

    #[test]
    fn model_attribution() {
        let model = init_model(&ADConfig::new(ChannelMask::ALL, 8, 11)).unwrap();
        let data: Vec<f64> = (0..32).map(|i| ((i * 7 % 13) as f64 / 6.0) - 1.0).collect();
        let input = FeatureCurves::new(4, 8, data, true).unwrap();
        let exact = exact_shapley(&model, &input, None).unwrap();
        assert!(exact.efficiency_residual().abs() < 1e-12);
        let kernel = kernel_shap(&model, &input, None, 500, 0).unwrap();
        for (a, b) in exact.phi.iter().zip(&kernel.phi) {
            assert!((a - b).abs() < 1e-9);
        }
        let same = exact_shapley(&model, &input, Some(&input)).unwrap();
        assert!(same.phi.iter().all(|p| *p == 0.0));
        let row = exact.csv_row("s0");
        assert_eq!(row.split(',').count(), 7);
        assert!(SHAP_CSV_HEADER.starts_with("sample,phi_nclus"));
        assert!(exact_shapley(&model, &input, Some(&FeatureCurves::zeros(4, 7))).is_err());
    }

    #[test]
    fn masked_model_leaves_unused_channels_empty() {
        let mask = ChannelMask::without(Channel::DStd);
        let model = init_model(&ADConfig::new(mask, 6, 2)).unwrap();
        let input = FeatureCurves::new(3, 6, (0..18).map(|i| (i as f64 / 9.0) - 1.0).collect(), true).unwrap();
        let attr = exact_shapley(&model, &input, None).unwrap();
        assert_eq!(attr.phi.len(), 3);
        let row = attr.csv_row("x");
        assert_eq!(row.split(',').nth(3), Some(""));
    }

    proptest! {
        #[test]
        fn exact_matches_permutation_definition(n in 1usize..6, table in prop::collection::vec(-1.0f64..1.0, 32)) {
            let value = game(&table);
            let exact = shapley_exact(n, |s| Ok(value(s))).unwrap();
            let oracle = permutation_shapley(n, &value);
            for (a, b) in exact.iter().zip(&oracle) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            let residual = value((1 << n) - 1) - value(0) - exact.iter().sum::<f64>();
            prop_assert!(residual.abs() < 1e-12);
        }

        #[test]
        fn kernel_saturates_to_exact(table in prop::collection::vec(-1.0f64..1.0, 16), seed in any::<u64>()) {
            let value = game(&table);
            let exact = shapley_exact(4, |s| Ok(value(s))).unwrap();
            let kernel = shapley_kernel(4, |s| Ok(value(s)), 500, seed).unwrap();
            for (a, b) in exact.iter().zip(&kernel) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }
    }
}
