//! Supervised and one-class training with early stopping on validation loss.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::network::{self, bce_loss, BnMode};
use super::{adam_step, ADModel, AdamState, Mode};
use crate::featurize::{rescale_row, FeatureCurves};
use crate::fmap_io::Label;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Only 1 is supported.
    pub batch_size: usize,
    /// Stop after this many consecutive epochs without a new best validation loss.
    pub patience_epochs: usize,
    pub val_fraction: f64,
    pub shuffle_each_epoch: bool,
    pub occ_mode: bool,
    pub seed: u64,
    /// Hard cap on the number of epochs; `None` runs until patience is exhausted.
    pub max_epochs: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 1,
            patience_epochs: 200,
            val_fraction: 0.2,
            shuffle_each_epoch: true,
            occ_mode: false,
            seed: 0,
            max_epochs: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Config(format!(
                "val_fraction must be in (0, 1), got {}",
                self.val_fraction
            )));
        }
        if self.patience_epochs == 0 {
            return Err(Error::Config("patience must be at least 1 epoch".into()));
        }
        if self.batch_size != 1 {
            return Err(Error::Config(format!(
                "only batch size 1 is supported, got {}",
                self.batch_size
            )));
        }
        if self.lr.is_nan() || self.lr < 0.0 || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("invalid optimizer hyperparameters".into()));
        }
        if self.max_epochs == Some(0) {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    /// 1-based epoch whose weights were returned.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub train_size: usize,
    pub val_size: usize,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,val_accuracy\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{}\n",
                e.epoch, e.train_loss, e.val_loss, e.val_accuracy
            ));
        }
        out
    }
}

fn evaluate(model: &ADModel, samples: &[&(FeatureCurves, Label)]) -> (f64, f64) {
    let mut loss = 0.0;
    let mut correct = 0;
    for (x, y) in samples {
        let score = network::forward(model, x.data(), BnMode::Running).score;
        loss += bce_loss(score, y.is_attacked());
        if (score >= 0.5) == y.is_attacked() {
            correct += 1;
        }
    }
    let n = samples.len() as f64;
    (loss / n, correct as f64 / n)
}

/// Trains `model` on `dataset`, holding out a seeded random `val_fraction` for
/// early stopping. Returns the weights with the lowest validation loss.
pub fn train(
    model: ADModel,
    dataset: &[(FeatureCurves, Label)],
    config: &TrainConfig,
) -> Result<(ADModel, TrainHistory)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("training dataset is empty".into()));
    }
    let has_clean = dataset.iter().any(|(_, y)| *y == Label::Clean);
    let has_attacked = dataset.iter().any(|(_, y)| *y == Label::Attacked);
    if !config.occ_mode && !(has_clean && has_attacked) {
        return Err(Error::Config(
            "single-class dataset: supervised training needs clean and attacked samples".into(),
        ));
    }
    if dataset.len() < 2 {
        return Err(Error::Config(
            "need at least 2 samples to hold out a validation set".into(),
        ));
    }
    for (x, _) in dataset {
        model.check_input(x)?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((dataset.len() as f64 * config.val_fraction).round() as usize).clamp(1, dataset.len() - 1);
    let val: Vec<&(FeatureCurves, Label)> = order[..n_val].iter().map(|&i| &dataset[i]).collect();
    let mut train_idx: Vec<usize> = order[n_val..].to_vec();

    let mut model = model;
    model.mode = Mode::Train;
    let mut grads = model.params.clone();
    let mut adam = AdamState::new(&model.params);

    let mut best = model.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut epochs = Vec::new();

    loop {
        let epoch = epochs.len() + 1;
        if config.shuffle_each_epoch {
            train_idx.shuffle(&mut rng);
        }
        let mut train_loss = 0.0;
        for &i in &train_idx {
            let (x, y) = &dataset[i];
            let fwd = network::forward(&model, x.data(), BnMode::Batch);
            train_loss += bce_loss(fwd.score, y.is_attacked());
            network::backward(&model, &fwd, y.is_attacked(), BnMode::Batch, &mut grads);
            network::update_running_stats(&mut model, &fwd);
            adam_step(&mut model.params, &grads, &mut adam, config)?;
        }
        train_loss /= train_idx.len() as f64;
        let (val_loss, val_accuracy) = evaluate(&model, &val);
        if !val_loss.is_finite() {
            return Err(Error::Training(format!("validation loss diverged at epoch {epoch}")));
        }
        epochs.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            val_accuracy,
        });

        if val_loss < best_loss {
            best_loss = val_loss;
            best_epoch = epoch;
            best = model.clone();
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best >= config.patience_epochs || config.max_epochs.is_some_and(|m| epoch >= m) {
            break;
        }
    }

    best.mode = Mode::Eval;
    Ok((
        best,
        TrainHistory {
            epochs,
            best_epoch,
            best_val_loss: best_loss,
            train_size: train_idx.len(),
            val_size: n_val,
        },
    ))
}

/// Standard-normal matrix with the given shape, each row rescaled to `[-1, 1]`.
pub fn occ_noise(channels: usize, len: usize, rng: &mut ChaCha8Rng) -> FeatureCurves {
    let data: Vec<f64> = (0..channels * len).map(|_| StandardNormal.sample(rng)).collect();
    let mut curves = FeatureCurves::new(channels, len, data, false).expect("finite normal samples");
    for c in 0..channels {
        rescale_row(curves.row_mut(c));
    }
    FeatureCurves::new(channels, len, curves.data().to_vec(), true).expect("finite")
}

/// One-class training: every clean sample is paired with one noise input
/// labeled attacked, then training proceeds as in [`train`].
pub fn train_occ(
    model: ADModel,
    clean: &[FeatureCurves],
    config: &TrainConfig,
) -> Result<(ADModel, TrainHistory)> {
    if clean.is_empty() {
        return Err(Error::Config("one-class training needs clean samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x6f63_635f_6e6f_6973);
    let mut dataset = Vec::with_capacity(2 * clean.len());
    for x in clean {
        let noise = occ_noise(x.channels(), x.len(), &mut rng);
        dataset.push((x.clone(), Label::Clean));
        dataset.push((noise, Label::Attacked));
    }
    let config = TrainConfig {
        occ_mode: true,
        ..config.clone()
    };
    train(model, &dataset, &config)
}
