use super::{Params, PARAM_BLOCKS};
use super::train::TrainConfig;
use crate::{Error, Result};

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Params,
    pub v: Params,
    pub t: u64,
}

impl AdamState {
    pub fn new(like: &Params) -> Self {
        let mut m = like.clone();
        m.fill(0.0);
        Self {
            v: m.clone(),
            m,
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of `params` using `grads`; advances `state.t`.
///
/// Non-finite gradients abort before anything is modified.
pub fn adam_step(params: &mut Params, grads: &Params, state: &mut AdamState, config: &TrainConfig) -> Result<()> {
    for (name, block) in PARAM_BLOCKS.iter().zip(grads.blocks()) {
        if block.iter().any(|g| !g.is_finite()) {
            return Err(Error::Training(format!("non-finite gradient in {name}")));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (config.beta1, config.beta2);
    let step = config.lr / (1.0 - b1.powi(t));
    let bias2_sqrt = (1.0 - b2.powi(t)).sqrt();
    let eps = config.adam_eps;

    let AdamState { m, v, .. } = state;
    for (((p, g), m), v) in params
        .blocks_mut()
        .into_iter()
        .zip(grads.blocks())
        .zip(m.blocks_mut())
        .zip(v.blocks_mut())
    {
        for (((p, g), m), v) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= step * *m / (v.sqrt() / bias2_sqrt + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adnet::{init_model, ADConfig};
    use crate::featurize::ChannelMask;

    fn setup() -> (Params, Params, AdamState, TrainConfig) {
        let model = init_model(&ADConfig::new(ChannelMask::ALL, 6, 1)).unwrap();
        let params = model.params.clone();
        let mut grads = params.clone();
        grads.fill(0.0);
        let state = AdamState::new(&params);
        (params, grads, state, TrainConfig::default())
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let (mut params, mut grads, mut state, config) = setup();
        let before = params.clone();
        grads.out_b[0] = 0.37;
        grads.fc1_w[5] = -2.0;
        adam_step(&mut params, &grads, &mut state, &config).unwrap();
        let d = params.out_b[0] - before.out_b[0];
        let expected = config.lr * 0.37 / (0.37 + config.adam_eps);
        assert!((d + expected).abs() < 1e-18, "{d}");
        assert!(((params.fc1_w[5] - before.fc1_w[5]) - config.lr).abs() < 1e-12);
        // untouched coordinates stay put
        assert_eq!(params.fc2_w, before.fc2_w);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let (mut params, grads, mut state, config) = setup();
        let before = params.clone();
        adam_step(&mut params, &grads, &mut state, &config).unwrap();
        adam_step(&mut params, &grads, &mut state, &config).unwrap();
        assert_eq!(params, before);
        assert_eq!(state.t, 2);
    }

    #[test]
    fn constant_gradient_second_step() {
        // Hand-rolled recursion with g = 0.5:
        // m1 = 0.05, v1 = 0.00025; m2 = 0.095, v2 = 0.00049975
        // m2_hat = 0.095 / 0.19 = 0.5, v2_hat = 0.00049975 / 0.001999 = 0.25
        // step = lr * 0.5 / (0.5 + eps)
        let (mut params, mut grads, mut state, config) = setup();
        grads.out_b[0] = 0.5;
        adam_step(&mut params, &grads, &mut state, &config).unwrap();
        let mid = params.out_b[0];
        adam_step(&mut params, &grads, &mut state, &config).unwrap();
        let second = mid - params.out_b[0];
        let expected = config.lr * 0.5 / (0.5 + config.adam_eps);
        assert!((second - expected).abs() < 1e-15, "{second} vs {expected}");
    }

    #[test]
    fn non_finite_gradient_names_block() {
        let (mut params, mut grads, mut state, config) = setup();
        grads.conv2_b[3] = f64::NAN;
        let before = params.clone();
        let err = adam_step(&mut params, &grads, &mut state, &config).unwrap_err();
        assert!(err.to_string().contains("conv2.bias"), "{err}");
        assert_eq!(params, before);
        assert_eq!(state.t, 0);
    }
}
