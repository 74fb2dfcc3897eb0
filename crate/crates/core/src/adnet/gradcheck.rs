//! Central finite-difference verification of the analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::{self, bce_loss, BnMode};
use super::{ADModel, PARAM_BLOCKS};
use crate::featurize::FeatureCurves;
use crate::Result;

const STEP: f64 = 1e-5;
const PER_BLOCK: usize = 20;
/// Gradients smaller than this are compared on an absolute scale.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameters compared.
    pub checked: usize,
    /// Sampled parameters whose perturbation crossed a ReLU kink and were replaced.
    pub skipped_kinks: usize,
    /// `(block, index, analytic, numeric)` of the worst parameter.
    pub worst: Option<(&'static str, usize, f64, f64)>,
}

/// Compares analytic gradients with batch norm frozen to running statistics.
pub fn grad_check(model: &ADModel, input: &FeatureCurves, label: bool) -> Result<GradCheckReport> {
    grad_check_with(model, input, label, BnMode::Running, 0)
}

/// Compares analytic and central-difference gradients of `bce_loss(forward(..))`
/// over up to 20 randomly chosen entries of every parameter block.
pub fn grad_check_with(
    model: &ADModel,
    input: &FeatureCurves,
    label: bool,
    bn: BnMode,
    seed: u64,
) -> Result<GradCheckReport> {
    model.check_input(input)?;
    let x = input.data();
    let base = network::forward(model, x, bn);
    let base_pattern = base.relu_pattern();
    let mut grads = model.params.clone();
    network::backward(model, &base, label, bn, &mut grads);

    let mut probe = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped_kinks: 0,
        worst: None,
    };

    for (b, name) in PARAM_BLOCKS.iter().enumerate() {
        let len = model.params.blocks()[b].len();
        let candidates = sample(&mut rng, len, len.min(10 * PER_BLOCK)).into_vec();
        let mut taken = 0;
        for i in candidates {
            if taken == PER_BLOCK {
                break;
            }
            let original = model.params.blocks()[b][i];
            let mut eval = |value: f64| {
                probe.params.blocks_mut()[b][i] = value;
                let f = network::forward(&probe, x, bn);
                (bce_loss(f.score, label), f.relu_pattern() == base_pattern)
            };
            let (plus, same_plus) = eval(original + STEP);
            let (minus, same_minus) = eval(original - STEP);
            probe.params.blocks_mut()[b][i] = original;
            if !(same_plus && same_minus) {
                report.skipped_kinks += 1;
                continue;
            }
            taken += 1;
            let numeric = (plus - minus) / (2.0 * STEP);
            let analytic = grads.blocks()[b][i];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR);
            report.checked += 1;
            if rel >= report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((name, i, analytic, numeric));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adnet::{init_model, ADConfig, ADModel};
    use crate::featurize::ChannelMask;
    use rand::Rng;

    fn random_case(seed: u64, len: usize) -> (ADModel, FeatureCurves) {
        let mut model = init_model(&ADConfig::new(ChannelMask::ALL, len, seed)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
        for v in model.params.bn1_gamma.iter_mut().chain(model.params.bn2_gamma.iter_mut()) {
            *v = rng.random_range(0.5..1.5);
        }
        for v in model.params.bn1_beta.iter_mut().chain(model.params.bn2_beta.iter_mut()) {
            *v = rng.random_range(-0.3..0.3);
        }
        for v in model.bn1.mean.iter_mut().chain(model.bn2.mean.iter_mut()) {
            *v = rng.random_range(-0.2..0.2);
        }
        for v in model.bn1.var.iter_mut().chain(model.bn2.var.iter_mut()) {
            *v = rng.random_range(0.05..0.5);
        }
        let data = (0..4 * len).map(|_| rng.random_range(-1.0..1.0)).collect();
        (model, FeatureCurves::new(4, len, data, true).unwrap())
    }

    #[test]
    fn running_stat_gradients_match() {
        for seed in 0..3 {
            let (model, input) = random_case(seed, 20);
            let r = grad_check(&model, &input, seed % 2 == 0).unwrap();
            assert!(r.checked >= 200, "{r:?}");
            assert!(r.max_rel_error < 1e-4, "{r:?}");
        }
    }

    #[test]
    fn batch_stat_gradients_match() {
        for seed in 0..3 {
            let (model, input) = random_case(seed + 50, 12);
            let r = grad_check_with(&model, &input, true, BnMode::Batch, seed).unwrap();
            assert!(r.max_rel_error < 1e-4, "{r:?}");
        }
    }

    #[test]
    fn single_pool_variant_gradients_match() {
        let (model, input) = random_case(7, 4);
        assert!(!model.config.second_pool);
        let r = grad_check(&model, &input, false).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn zero_model_output_bias_gradient() {
        let config = ADConfig::new(ChannelMask::ALL, 20, 0);
        let model = ADModel::zeroed(&config).unwrap();
        let input = FeatureCurves::zeros(4, 20);
        for label in [false, true] {
            let fwd = network::forward(&model, input.data(), BnMode::Running);
            let mut grads = model.params.clone();
            network::backward(&model, &fwd, label, BnMode::Running, &mut grads);
            let expected = 0.5 - if label { 1.0 } else { 0.0 };
            assert_eq!(grads.out_b[0], expected);
            let r = grad_check(&model, &input, label).unwrap();
            assert!(r.max_rel_error < 1e-4, "{r:?}");
        }
    }
}
