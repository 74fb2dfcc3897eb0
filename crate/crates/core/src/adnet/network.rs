//! Forward pass with cached activations and the matching backward pass.

use super::{ADModel, BnStats, Params};

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;
const SCORE_CLAMP: f64 = 1e-12;

/// Where batch norm takes its normalization statistics from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    /// Per-channel statistics of the current sample along the threshold axis.
    Batch,
    /// The running estimates stored in the model.
    Running,
}

/// Binary cross-entropy of a score with the score clamped to `[1e-12, 1 - 1e-12]`.
pub fn bce_loss(score: f64, label: bool) -> f64 {
    let p = score.clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP);
    if label {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

struct BnCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
}

/// Intermediate activations of one forward pass.
pub struct Forward {
    input: Vec<f64>,
    bn1: BnCache,
    act1: Vec<f64>,
    bn2: BnCache,
    act2: Vec<f64>,
    hidden1: Vec<f64>,
    hidden2: Vec<f64>,
    pub logit: f64,
    pub score: f64,
}

impl Forward {
    /// Sign pattern of every ReLU input, used to detect kinks between evaluations.
    pub(crate) fn relu_pattern(&self) -> Vec<bool> {
        self.act1
            .iter()
            .chain(&self.act2)
            .chain(&self.hidden1)
            .chain(&self.hidden2)
            .map(|v| *v > 0.0)
            .collect()
    }
}

/// `out[o][t] = b[o] + sum_i sum_k w[o][i][k] * x[i][t*stride + k]`
#[allow(clippy::too_many_arguments)]
fn conv1d(
    x: &[f64],
    in_ch: usize,
    in_len: usize,
    w: &[f64],
    b: &[f64],
    kernel: usize,
    stride: usize,
    out_len: usize,
) -> Vec<f64> {
    let out_ch = b.len();
    let mut out = vec![0.0; out_ch * out_len];
    for o in 0..out_ch {
        let row = &mut out[o * out_len..(o + 1) * out_len];
        row.fill(b[o]);
        for i in 0..in_ch {
            let xi = &x[i * in_len..(i + 1) * in_len];
            let wk = &w[(o * in_ch + i) * kernel..(o * in_ch + i + 1) * kernel];
            for (t, r) in row.iter_mut().enumerate() {
                let start = t * stride;
                *r += wk.iter().zip(&xi[start..start + kernel]).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv1d_backward(
    x: &[f64],
    in_ch: usize,
    in_len: usize,
    w: &[f64],
    kernel: usize,
    stride: usize,
    out_len: usize,
    grad_out: &[f64],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
) -> Vec<f64> {
    let out_ch = grad_b.len();
    let mut grad_x = vec![0.0; in_ch * in_len];
    for o in 0..out_ch {
        let g = &grad_out[o * out_len..(o + 1) * out_len];
        grad_b[o] = g.iter().sum();
        for i in 0..in_ch {
            let base = (o * in_ch + i) * kernel;
            for k in 0..kernel {
                let mut acc = 0.0;
                for (t, gt) in g.iter().enumerate() {
                    let pos = i * in_len + t * stride + k;
                    acc += gt * x[pos];
                    grad_x[pos] += gt * w[base + k];
                }
                grad_w[base + k] = acc;
            }
        }
    }
    grad_x
}

fn avgpool(x: &[f64], ch: usize, in_len: usize, kernel: usize, stride: usize, out_len: usize) -> Vec<f64> {
    let mut out = vec![0.0; ch * out_len];
    let scale = 1.0 / kernel as f64;
    for c in 0..ch {
        for t in 0..out_len {
            let start = c * in_len + t * stride;
            out[c * out_len + t] = x[start..start + kernel].iter().sum::<f64>() * scale;
        }
    }
    out
}

fn avgpool_backward(g: &[f64], ch: usize, in_len: usize, kernel: usize, stride: usize, out_len: usize) -> Vec<f64> {
    let mut out = vec![0.0; ch * in_len];
    let scale = 1.0 / kernel as f64;
    for c in 0..ch {
        for t in 0..out_len {
            let gv = g[c * out_len + t] * scale;
            let start = c * in_len + t * stride;
            for v in &mut out[start..start + kernel] {
                *v += gv;
            }
        }
    }
    out
}

fn batchnorm(x: &[f64], len: usize, gamma: &[f64], beta: &[f64], stats: &BnStats, mode: BnMode) -> (Vec<f64>, BnCache) {
    let ch = gamma.len();
    let mut out = vec![0.0; x.len()];
    let mut cache = BnCache {
        xhat: vec![0.0; x.len()],
        inv_std: vec![0.0; ch],
        batch_mean: vec![0.0; ch],
        batch_var: vec![0.0; ch],
    };
    for c in 0..ch {
        let row = &x[c * len..(c + 1) * len];
        let mean = row.iter().sum::<f64>() / len as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / len as f64;
        cache.batch_mean[c] = mean;
        cache.batch_var[c] = var;
        let (mu, sigma2) = match mode {
            BnMode::Batch => (mean, var),
            BnMode::Running => (stats.mean[c], stats.var[c]),
        };
        let inv_std = 1.0 / (sigma2 + BN_EPS).sqrt();
        cache.inv_std[c] = inv_std;
        for t in 0..len {
            let xh = (row[t] - mu) * inv_std;
            cache.xhat[c * len + t] = xh;
            out[c * len + t] = gamma[c] * xh + beta[c];
        }
    }
    (out, cache)
}

fn batchnorm_backward(
    g: &[f64],
    len: usize,
    gamma: &[f64],
    cache: &BnCache,
    mode: BnMode,
    grad_gamma: &mut [f64],
    grad_beta: &mut [f64],
) -> Vec<f64> {
    let mut grad_x = vec![0.0; g.len()];
    let n = len as f64;
    for c in 0..gamma.len() {
        let gr = &g[c * len..(c + 1) * len];
        let xh = &cache.xhat[c * len..(c + 1) * len];
        let sum_g: f64 = gr.iter().sum();
        let sum_gx: f64 = gr.iter().zip(xh).map(|(a, b)| a * b).sum();
        grad_gamma[c] = sum_gx;
        grad_beta[c] = sum_g;
        let scale = gamma[c] * cache.inv_std[c];
        for t in 0..len {
            grad_x[c * len + t] = match mode {
                BnMode::Running => scale * gr[t],
                BnMode::Batch => scale / n * (n * gr[t] - sum_g - xh[t] * sum_gx),
            };
        }
    }
    grad_x
}

fn relu_in_place(x: &mut [f64]) {
    for v in x.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// `out = W x + b` with `W` stored `[out][in]`.
fn linear(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let n_in = x.len();
    b.iter()
        .enumerate()
        .map(|(o, bo)| bo + w[o * n_in..(o + 1) * n_in].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
        .collect()
}

fn linear_backward(w: &[f64], x: &[f64], g: &[f64], grad_w: &mut [f64], grad_b: &mut [f64]) -> Vec<f64> {
    let n_in = x.len();
    let mut grad_x = vec![0.0; n_in];
    for (o, &go) in g.iter().enumerate() {
        grad_b[o] = go;
        let wr = &w[o * n_in..(o + 1) * n_in];
        let gw = &mut grad_w[o * n_in..(o + 1) * n_in];
        if go == 0.0 {
            gw.fill(0.0);
            continue;
        }
        for ((gwi, xi), (gxi, wi)) in gw.iter_mut().zip(x).zip(grad_x.iter_mut().zip(wr)) {
            *gwi = go * xi;
            *gxi += go * wi;
        }
    }
    grad_x
}

fn relu_backward(g: &mut [f64], activated: &[f64]) {
    for (gv, a) in g.iter_mut().zip(activated) {
        if *a <= 0.0 {
            *gv = 0.0;
        }
    }
}

pub(crate) fn forward(model: &ADModel, input: &[f64], bn: BnMode) -> Forward {
    let cfg = &model.config;
    let s = &model.shapes;
    let p = &model.params;
    let c = cfg.conv_channels;

    let conv1 = conv1d(input, cfg.in_channels, cfg.ensemble_size, &p.conv1_w, &p.conv1_b, cfg.kernel, cfg.stride, s.conv1);
    let pool1 = avgpool(&conv1, c, s.conv1, cfg.pool_kernel, cfg.pool_stride, s.pool1);
    let (mut act1, bn1) = batchnorm(&pool1, s.pool1, &p.bn1_gamma, &p.bn1_beta, &model.bn1, bn);
    relu_in_place(&mut act1);

    let conv2 = conv1d(&act1, c, s.pool1, &p.conv2_w, &p.conv2_b, cfg.kernel, cfg.stride, s.conv2);
    let pool2 = if cfg.second_pool {
        avgpool(&conv2, c, s.conv2, cfg.pool_kernel, cfg.pool_stride, s.pool2)
    } else {
        conv2.clone()
    };
    let (mut act2, bn2) = batchnorm(&pool2, s.pool2, &p.bn2_gamma, &p.bn2_beta, &model.bn2, bn);
    relu_in_place(&mut act2);

    let mut hidden1 = linear(&p.fc1_w, &p.fc1_b, &act2);
    relu_in_place(&mut hidden1);
    let mut hidden2 = linear(&p.fc2_w, &p.fc2_b, &hidden1);
    relu_in_place(&mut hidden2);
    let logit = linear(&p.out_w, &p.out_b, &hidden2)[0];

    Forward {
        input: input.to_vec(),
        bn1,
        act1,
        bn2,
        act2,
        hidden1,
        hidden2,
        logit,
        score: sigmoid(logit),
    }
}

/// Gradient of the BCE loss for `label` with respect to every parameter,
/// written into `grads`.
pub(crate) fn backward(model: &ADModel, fwd: &Forward, label: bool, bn: BnMode, grads: &mut Params) {
    let cfg = &model.config;
    let s = &model.shapes;
    let p = &model.params;
    let c = cfg.conv_channels;

    let d_logit = fwd.score - if label { 1.0 } else { 0.0 };
    let mut g_h2 = linear_backward(&p.out_w, &fwd.hidden2, &[d_logit], &mut grads.out_w, &mut grads.out_b);
    relu_backward(&mut g_h2, &fwd.hidden2);
    let mut g_h1 = linear_backward(&p.fc2_w, &fwd.hidden1, &g_h2, &mut grads.fc2_w, &mut grads.fc2_b);
    relu_backward(&mut g_h1, &fwd.hidden1);
    let mut g_a2 = linear_backward(&p.fc1_w, &fwd.act2, &g_h1, &mut grads.fc1_w, &mut grads.fc1_b);
    relu_backward(&mut g_a2, &fwd.act2);

    let g_p2 = batchnorm_backward(&g_a2, s.pool2, &p.bn2_gamma, &fwd.bn2, bn, &mut grads.bn2_gamma, &mut grads.bn2_beta);
    let g_c2 = if cfg.second_pool {
        avgpool_backward(&g_p2, c, s.conv2, cfg.pool_kernel, cfg.pool_stride, s.pool2)
    } else {
        g_p2
    };
    let mut g_a1 = conv1d_backward(&fwd.act1, c, s.pool1, &p.conv2_w, cfg.kernel, cfg.stride, s.conv2, &g_c2, &mut grads.conv2_w, &mut grads.conv2_b);
    relu_backward(&mut g_a1, &fwd.act1);

    let g_p1 = batchnorm_backward(&g_a1, s.pool1, &p.bn1_gamma, &fwd.bn1, bn, &mut grads.bn1_gamma, &mut grads.bn1_beta);
    let g_c1 = avgpool_backward(&g_p1, c, s.conv1, cfg.pool_kernel, cfg.pool_stride, s.pool1);
    conv1d_backward(&fwd.input, cfg.in_channels, cfg.ensemble_size, &p.conv1_w, cfg.kernel, cfg.stride, s.conv1, &g_c1, &mut grads.conv1_w, &mut grads.conv1_b);
}

/// Folds the batch statistics of a train-mode pass into the running estimates.
pub(crate) fn update_running_stats(model: &mut ADModel, fwd: &Forward) {
    let update = |stats: &mut BnStats, cache: &BnCache, len: usize| {
        let correction = if len > 1 { len as f64 / (len - 1) as f64 } else { 1.0 };
        for c in 0..stats.mean.len() {
            stats.mean[c] = (1.0 - BN_MOMENTUM) * stats.mean[c] + BN_MOMENTUM * cache.batch_mean[c];
            stats.var[c] = (1.0 - BN_MOMENTUM) * stats.var[c] + BN_MOMENTUM * cache.batch_var[c] * correction;
        }
    };
    let (l1, l2) = (model.shapes.pool1, model.shapes.pool2);
    update(&mut model.bn1, &fwd.bn1, l1);
    update(&mut model.bn2, &fwd.bn2, l2);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_values() {
        assert!((bce_loss(0.5, true) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((bce_loss(0.5, false) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(bce_loss(1.0 - 1e-15, true) < 1e-11);
        assert!(bce_loss(0.0, true).is_finite());
        assert!(bce_loss(1.0, false).is_finite());
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn conv_matches_hand_computation() {
        // 1 in-channel, 1 out-channel, x = [1, 2, 3], w = [1, -1], b = 0.5
        let out = conv1d(&[1.0, 2.0, 3.0], 1, 3, &[1.0, -1.0], &[0.5], 2, 1, 2);
        assert_eq!(out, vec![-0.5, -0.5]);
        let pooled = avgpool(&[1.0, 3.0, 5.0], 1, 3, 2, 1, 2);
        assert_eq!(pooled, vec![2.0, 4.0]);
    }
}
