//! The attack-detector network: a two-stage 1D CNN over the feature curves
//! followed by a three-layer MLP head with a sigmoid output.
//!
//! ```text
//! conv(k=2) -> avgpool -> batchnorm -> relu
//! conv(k=2) -> avgpool -> batchnorm -> relu -> flatten
//! fc(576) -> relu -> fc(576) -> relu -> fc(1) -> sigmoid
//! ```
//!
//! Gradients are derived by hand in [`network`]; [`gradcheck`] verifies
//! them against central finite differences.

mod adam;
mod file;
mod gradcheck;
mod network;
mod train;

pub use adam::{adam_step, AdamState};
pub use file::{load_model, load_model_for, save_model, MAGIC};
pub use gradcheck::{grad_check, grad_check_with, GradCheckReport};
pub use network::{bce_loss, BnMode, Forward};
pub use train::{occ_noise, train, train_occ, EpochStats, TrainConfig, TrainHistory};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::featurize::{ChannelMask, FeatureCurves};
use crate::{Error, Result};

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ADConfig {
    pub in_channels: usize,
    pub ensemble_size: usize,
    pub conv_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pool_kernel: usize,
    pub pool_stride: usize,
    /// Whether the second conv stage is followed by pooling. Disabled
    /// automatically by [`ADConfig::new`] for ensembles too short for it.
    pub second_pool: bool,
    pub fc_width: usize,
    pub seed: u64,
    /// Which curve channels the model consumes; `in_channels == channel_mask.len()`.
    pub channel_mask: ChannelMask,
}

/// Per-stage sequence lengths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shapes {
    pub conv1: usize,
    pub pool1: usize,
    pub conv2: usize,
    pub pool2: usize,
    pub flat: usize,
}

fn out_len(len: usize, kernel: usize, stride: usize) -> Option<usize> {
    (len >= kernel).then(|| (len - kernel) / stride + 1)
}

impl ADConfig {
    /// Default architecture for `ensemble_size` thresholds over `mask`.
    /// Drops the second pooling stage when the ensemble is too short for it.
    pub fn new(mask: ChannelMask, ensemble_size: usize, seed: u64) -> Self {
        let mut config = Self {
            in_channels: mask.len(),
            ensemble_size,
            conv_channels: 12,
            kernel: 2,
            stride: 1,
            pool_kernel: 2,
            pool_stride: 1,
            second_pool: true,
            fc_width: 576,
            seed,
            channel_mask: mask,
        };
        if config.shapes().is_err() {
            config.second_pool = false;
        }
        config
    }

    pub fn shapes(&self) -> Result<Shapes> {
        let lengths = || {
            let conv1 = out_len(self.ensemble_size, self.kernel, self.stride)?;
            let pool1 = out_len(conv1, self.pool_kernel, self.pool_stride)?;
            let conv2 = out_len(pool1, self.kernel, self.stride)?;
            let pool2 = if self.second_pool {
                out_len(conv2, self.pool_kernel, self.pool_stride)?
            } else {
                conv2
            };
            Some(Shapes {
                conv1,
                pool1,
                conv2,
                pool2,
                flat: self.conv_channels * pool2,
            })
        };
        lengths().ok_or_else(|| {
            let minimum = (1..10_000)
                .find(|&b| {
                    ADConfig {
                        ensemble_size: b,
                        ..*self
                    }
                    .shapes_opt()
                })
                .unwrap_or(0);
            Error::Config(format!(
                "ensemble size {} is too small for this layer stack (minimum {minimum})",
                self.ensemble_size
            ))
        })
    }

    fn shapes_opt(&self) -> bool {
        let Some(c1) = out_len(self.ensemble_size, self.kernel, self.stride) else {
            return false;
        };
        let Some(p1) = out_len(c1, self.pool_kernel, self.pool_stride) else {
            return false;
        };
        let Some(c2) = out_len(p1, self.kernel, self.stride) else {
            return false;
        };
        !self.second_pool || out_len(c2, self.pool_kernel, self.pool_stride).is_some()
    }

    pub fn validate(&self) -> Result<Shapes> {
        if self.in_channels == 0 || self.conv_channels == 0 || self.fc_width == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if self.kernel == 0 || self.stride == 0 || self.pool_kernel == 0 || self.pool_stride == 0 {
            return Err(Error::Config("kernel sizes and strides must be positive".into()));
        }
        if self.in_channels != self.channel_mask.len() {
            return Err(Error::Config(format!(
                "in_channels {} does not match a {}-channel mask",
                self.in_channels,
                self.channel_mask.len()
            )));
        }
        self.shapes()
    }
}

/// Learnable parameters in their fixed serialization order.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// `[out][in][k]`
    pub conv1_w: Vec<f64>,
    pub conv1_b: Vec<f64>,
    pub bn1_gamma: Vec<f64>,
    pub bn1_beta: Vec<f64>,
    pub conv2_w: Vec<f64>,
    pub conv2_b: Vec<f64>,
    pub bn2_gamma: Vec<f64>,
    pub bn2_beta: Vec<f64>,
    /// `[out][in]`
    pub fc1_w: Vec<f64>,
    pub fc1_b: Vec<f64>,
    pub fc2_w: Vec<f64>,
    pub fc2_b: Vec<f64>,
    pub out_w: Vec<f64>,
    pub out_b: Vec<f64>,
}

pub const PARAM_BLOCKS: [&str; 14] = [
    "conv1.weight",
    "conv1.bias",
    "bn1.weight",
    "bn1.bias",
    "conv2.weight",
    "conv2.bias",
    "bn2.weight",
    "bn2.bias",
    "fc1.weight",
    "fc1.bias",
    "fc2.weight",
    "fc2.bias",
    "out.weight",
    "out.bias",
];

impl Params {
    pub fn zeros(config: &ADConfig, shapes: &Shapes) -> Self {
        let (c, k, f) = (config.conv_channels, config.kernel, config.fc_width);
        Self {
            conv1_w: vec![0.0; c * config.in_channels * k],
            conv1_b: vec![0.0; c],
            bn1_gamma: vec![0.0; c],
            bn1_beta: vec![0.0; c],
            conv2_w: vec![0.0; c * c * k],
            conv2_b: vec![0.0; c],
            bn2_gamma: vec![0.0; c],
            bn2_beta: vec![0.0; c],
            fc1_w: vec![0.0; f * shapes.flat],
            fc1_b: vec![0.0; f],
            fc2_w: vec![0.0; f * f],
            fc2_b: vec![0.0; f],
            out_w: vec![0.0; f],
            out_b: vec![0.0; 1],
        }
    }

    pub fn blocks(&self) -> [&Vec<f64>; 14] {
        [
            &self.conv1_w,
            &self.conv1_b,
            &self.bn1_gamma,
            &self.bn1_beta,
            &self.conv2_w,
            &self.conv2_b,
            &self.bn2_gamma,
            &self.bn2_beta,
            &self.fc1_w,
            &self.fc1_b,
            &self.fc2_w,
            &self.fc2_b,
            &self.out_w,
            &self.out_b,
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut Vec<f64>; 14] {
        [
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.bn1_gamma,
            &mut self.bn1_beta,
            &mut self.conv2_w,
            &mut self.conv2_b,
            &mut self.bn2_gamma,
            &mut self.bn2_beta,
            &mut self.fc1_w,
            &mut self.fc1_b,
            &mut self.fc2_w,
            &mut self.fc2_b,
            &mut self.out_w,
            &mut self.out_b,
        ]
    }

    pub fn len(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn fill(&mut self, value: f64) {
        for b in self.blocks_mut() {
            b.fill(value);
        }
    }
}

/// Running batch-norm statistics of one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct BnStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl BnStats {
    fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ADModel {
    pub config: ADConfig,
    pub shapes: Shapes,
    pub params: Params,
    pub bn1: BnStats,
    pub bn2: BnStats,
    pub mode: Mode,
}

/// Fresh model with uniform `±1/sqrt(fan_in)` weights and biases, unit batch-norm
/// scales, and identity running statistics.
pub fn init_model(config: &ADConfig) -> Result<ADModel> {
    let shapes = config.validate()?;
    let mut params = Params::zeros(config, &shapes);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (c, k, f) = (config.conv_channels, config.kernel, config.fc_width);
    let mut uniform = |block: &mut Vec<f64>, fan_in: usize| {
        let bound = 1.0 / (fan_in as f64).sqrt();
        for v in block.iter_mut() {
            *v = rng.random_range(-bound..bound);
        }
    };
    uniform(&mut params.conv1_w, config.in_channels * k);
    uniform(&mut params.conv1_b, config.in_channels * k);
    uniform(&mut params.conv2_w, c * k);
    uniform(&mut params.conv2_b, c * k);
    uniform(&mut params.fc1_w, shapes.flat);
    uniform(&mut params.fc1_b, shapes.flat);
    uniform(&mut params.fc2_w, f);
    uniform(&mut params.fc2_b, f);
    uniform(&mut params.out_w, f);
    uniform(&mut params.out_b, f);
    params.bn1_gamma.fill(1.0);
    params.bn2_gamma.fill(1.0);
    Ok(ADModel {
        config: *config,
        shapes,
        params,
        bn1: BnStats::identity(c),
        bn2: BnStats::identity(c),
        mode: Mode::Train,
    })
}

impl ADModel {
    /// Same architecture with every parameter zero.
    pub fn zeroed(config: &ADConfig) -> Result<Self> {
        let mut m = init_model(config)?;
        m.params.fill(0.0);
        Ok(m)
    }

    pub fn check_input(&self, input: &FeatureCurves) -> Result<()> {
        if input.channels() != self.config.in_channels || input.len() != self.config.ensemble_size {
            return Err(Error::Argument(format!(
                "model expects {}x{} curves, got {}x{}",
                self.config.in_channels,
                self.config.ensemble_size,
                input.channels(),
                input.len()
            )));
        }
        Ok(())
    }

    /// Errors unless the model consumes exactly `mask`'s channels.
    pub fn check_mask(&self, mask: ChannelMask) -> Result<()> {
        if mask != self.config.channel_mask || mask.len() != self.config.in_channels {
            return Err(Error::Config(format!(
                "model has {} input channels (mask {:#06b}); requested mask {:#06b}",
                self.config.in_channels,
                self.config.channel_mask.bits(),
                mask.bits()
            )));
        }
        Ok(())
    }

    /// Detection score in `(0, 1)`. Batch norm follows `self.mode`: running
    /// statistics in eval mode, per-sample statistics in train mode.
    pub fn forward(&self, input: &FeatureCurves) -> Result<f64> {
        self.check_input(input)?;
        let bn = match self.mode {
            Mode::Eval => BnMode::Running,
            Mode::Train => BnMode::Batch,
        };
        Ok(network::forward(self, input.data(), bn).score)
    }

    /// Eval-mode detection score, whatever `self.mode` is.
    pub fn score(&self, input: &FeatureCurves) -> Result<f64> {
        self.check_input(input)?;
        Ok(network::forward(self, input.data(), BnMode::Running).score)
    }

    pub fn eval(mut self) -> Self {
        self.mode = Mode::Eval;
        self
    }

    pub fn all_finite(&self) -> bool {
        self.params
            .blocks()
            .iter()
            .all(|b| b.iter().all(|v| v.is_finite()))
            && self.bn1.var.iter().chain(&self.bn2.var).all(|v| *v > 0.0)
    }
}
