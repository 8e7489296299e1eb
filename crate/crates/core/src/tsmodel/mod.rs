//! From-scratch sequence classifiers over fused monthly embeddings, with
//! reverse-mode gradients, the reference training recipe, and a
//! mean-pooling baseline for the temporal ablation.

mod forward;
mod graph;

pub use forward::{build_layout, forward, init_params, patch_count, DropoutState, ParamLayout};
pub use graph::{Mat, Tape};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::MultimodalSequence;
use crate::types::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Architecture {
    #[serde(rename = "itransformer")]
    ITransformer,
    #[serde(rename = "patchtst")]
    PatchTst,
    #[serde(rename = "meanpool")]
    MeanPool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub patch_len: usize,
    pub stride: usize,
    pub dropout: f64,
    pub t_months: usize,
    pub n_variates: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(architecture: Architecture, t_months: usize, n_variates: usize, seed: u64) -> Self {
        ModelConfig {
            architecture,
            d_model: 64,
            n_heads: 4,
            n_layers: 2,
            patch_len: 6,
            stride: 3,
            dropout: 0.1,
            t_months,
            n_variates,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), TsModelError> {
        if self.d_model == 0 || self.d_model % self.n_heads != 0 {
            return Err(TsModelError::Config(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(TsModelError::Config(format!(
                "dropout {} outside [0,1)",
                self.dropout
            )));
        }
        if self.architecture == Architecture::PatchTst {
            if self.patch_len == 0 || self.patch_len > self.t_months {
                return Err(TsModelError::Config(format!(
                    "patch_len {} invalid for t_months {}",
                    self.patch_len, self.t_months
                )));
            }
            if self.stride == 0 {
                return Err(TsModelError::Config("stride must be at least 1".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub warmup_steps: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            warmup_steps: 100,
            batch_size: 8,
            max_epochs: 50,
            patience: 10,
            weight_decay: 0.01,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub parameters: Vec<f64>,
    pub best_epoch: usize,
    pub val_loss_history: Vec<f64>,
    pub curve: Vec<EpochRecord>,
}

#[derive(Debug, Error)]
pub enum TsModelError {
    #[error("model configuration error: {0}")]
    Config(String),
    #[error("input shape mismatch: expected {expected:?}, got {got:?}")]
    Shape {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("training requires non-empty train and validation sets")]
    EmptyData,
}

/// Numerically stable softplus: ln(1 + e^x).
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy from the logit; label 1 is the positive (MCI)
/// class.
pub fn bce_loss(logit: f64, label: u8) -> f64 {
    match label {
        1 => softplus(-logit),
        _ => softplus(logit),
    }
}

/// Linear warmup to `lr`, then cosine annealing to zero over the remaining
/// steps. Continuous at the boundary: both branches give exactly `lr` at
/// step == warmup_steps.
pub fn lr_at(step: usize, config: &TrainConfig, total_steps: usize) -> f64 {
    if step < config.warmup_steps {
        config.lr * (step + 1) as f64 / config.warmup_steps as f64
    } else {
        let span = (total_steps - config.warmup_steps) as f64;
        let progress = (step - config.warmup_steps) as f64 / span;
        (config.lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())).max(0.0)
    }
}

/// Forward pass in eval mode (no dropout) returning the raw logit.
pub fn forward_logit(
    params: &[f64],
    layout: &ParamLayout,
    z: &MultimodalSequence,
    config: &ModelConfig,
) -> Result<f64, TsModelError> {
    let mut tape = Tape::new();
    let root = forward(&mut tape, params, layout, z, config, None)?;
    let logit = tape.value(root).data[0];
    if !logit.is_finite() {
        return Err(TsModelError::Numeric("non-finite logit".into()));
    }
    Ok(logit)
}

/// Mean BCE and its exact reverse-mode gradient over a batch. Dropout masks
/// (when a state is supplied) are drawn per sample in batch order.
pub fn grad(
    params: &[f64],
    batch: &[(&MultimodalSequence, u8)],
    layout: &ParamLayout,
    config: &ModelConfig,
    mut dropout: Option<DropoutState<'_>>,
) -> Result<(f64, Vec<f64>), TsModelError> {
    assert!(!batch.is_empty());
    let mut grads = vec![0.0; params.len()];
    let mut loss = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for (z, label) in batch {
        let mut tape = Tape::new();
        let sample_dropout = dropout.as_mut().map(|d| DropoutState {
            rng: &mut *d.rng,
            rate: d.rate,
        });
        let root = forward(&mut tape, params, layout, z, config, sample_dropout)?;
        let logit = tape.value(root).data[0];
        if !logit.is_finite() {
            return Err(TsModelError::Numeric("non-finite logit".into()));
        }
        loss += bce_loss(logit, *label) * scale;
        let dl_dz = sigmoid(logit) - *label as f64;
        tape.backward(root, dl_dz * scale, &mut grads)?;
    }
    Ok((loss, grads))
}

/// Patience-based early stopping on validation loss; improvement is strict.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            stale: 0,
        }
    }

    /// Records one epoch's validation loss; returns true when training
    /// should halt after this epoch.
    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> bool {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        self.stale >= self.patience
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

struct AdamW {
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
    weight_decay: f64,
}

const ADAM_B1: f64 = 0.9;
const ADAM_B2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl AdamW {
    fn new(n: usize, weight_decay: f64) -> Self {
        AdamW {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            weight_decay,
        }
    }

    /// Decoupled weight decay: the decay term scales with lr but not with
    /// the adaptive moments.
    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - ADAM_B1.powi(self.t as i32);
        let bc2 = 1.0 - ADAM_B2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = ADAM_B1 * self.m[i] + (1.0 - ADAM_B1) * grads[i];
            self.v[i] = ADAM_B2 * self.v[i] + (1.0 - ADAM_B2) * grads[i] * grads[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= lr * (mhat / (vhat.sqrt() + ADAM_EPS) + self.weight_decay * params[i]);
        }
    }
}

pub type LabeledSequence = (MultimodalSequence, u8);

fn mean_val_loss(
    params: &[f64],
    layout: &ParamLayout,
    config: &ModelConfig,
    val: &[LabeledSequence],
) -> Result<f64, TsModelError> {
    let mut loss = 0.0;
    for (z, label) in val {
        loss += bce_loss(forward_logit(params, layout, z, config)?, *label);
    }
    Ok(loss / val.len() as f64)
}

/// Trains with the reference recipe, scoring epochs by a caller-supplied
/// validation loss. The standard entry point passes mean BCE over the
/// validation set; tests may script the sequence.
pub fn train_with_val_loss(
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    train_set: &[LabeledSequence],
    mut val_loss_fn: impl FnMut(usize, &[f64]) -> Result<f64, TsModelError>,
) -> Result<TrainedModel, TsModelError> {
    model_config.validate()?;
    if train_set.is_empty() {
        return Err(TsModelError::EmptyData);
    }
    let layout = build_layout(model_config);
    let mut params = init_params(model_config);
    let mut optimizer = AdamW::new(params.len(), train_config.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(train_config.seed);

    let n = train_set.len();
    let batches_per_epoch = n.div_ceil(train_config.batch_size);
    let total_steps = train_config.max_epochs * batches_per_epoch;

    let mut stopper = EarlyStopping::new(train_config.patience);
    let mut best_params = params.clone();
    let mut history = Vec::new();
    let mut curve = Vec::new();
    let mut step = 0usize;

    for epoch in 1..=train_config.max_epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_lr = 0.0;
        for chunk in order.chunks(train_config.batch_size) {
            let batch: Vec<(&MultimodalSequence, u8)> =
                chunk.iter().map(|&i| (&train_set[i].0, train_set[i].1)).collect();
            let dropout = (model_config.dropout > 0.0).then_some(DropoutState {
                rng: &mut rng,
                rate: model_config.dropout,
            });
            let (loss, grads) = grad(&params, &batch, &layout, model_config, dropout)?;
            let lr = lr_at(step, train_config, total_steps);
            optimizer.step(&mut params, &grads, lr);
            step += 1;
            epoch_loss += loss;
            epoch_lr = lr;
        }
        epoch_loss /= batches_per_epoch as f64;

        let val_loss = val_loss_fn(epoch, &params)?;
        history.push(val_loss);
        let was_best = val_loss < stopper.best_loss();
        let stop = stopper.observe(epoch, val_loss);
        if was_best {
            best_params.copy_from_slice(&params);
        }
        curve.push(EpochRecord {
            epoch,
            train_loss: epoch_loss,
            val_loss,
            lr: epoch_lr,
        });
        if stop {
            break;
        }
    }

    Ok(TrainedModel {
        config: model_config.clone(),
        parameters: best_params,
        best_epoch: stopper.best_epoch(),
        val_loss_history: history,
        curve,
    })
}

pub fn train(
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    train_set: &[LabeledSequence],
    val_set: &[LabeledSequence],
) -> Result<TrainedModel, TsModelError> {
    if val_set.is_empty() {
        return Err(TsModelError::EmptyData);
    }
    let layout = build_layout(model_config);
    train_with_val_loss(model_config, train_config, train_set, |_, params| {
        mean_val_loss(params, &layout, model_config, val_set)
    })
}

/// Probability is the sigmoid of the logit; ties at exactly 0.5 classify
/// as MCI.
pub fn predict(model: &TrainedModel, z: &MultimodalSequence) -> Result<(Label, f64), TsModelError> {
    let layout = build_layout(&model.config);
    let logit = forward_logit(&model.parameters, &layout, z, &model.config)?;
    let p = sigmoid(logit);
    let label = if p >= 0.5 { Label::Mci } else { Label::Hc };
    Ok((label, p))
}
