//! Reference classifier: signed feature hashing over record text, a
//! linear scoring head, sigmoid + binary cross-entropy, and AdamW.

mod checkpoint;
mod featurizer;
mod loss;
mod optim;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use featurizer::{HashedFeaturizer, SparseVector, DEFAULT_DIMENSION};
pub use loss::{bce_from_probability, bce_with_logits, sigmoid};
pub use optim::{AdamW, OptimizerState};

use crate::datapipe::LabeledRecord;

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training set must contain at least 2 records, got {0}")]
    TooFewRecords(usize),
    #[error("training set contains a single class ({0}); both benign and attack records are required")]
    SingleClass(u8),
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Optimizer and loop settings. The learning-rate default (2e-5) is the
/// transformer fine-tuning rate; the linear head usually wants ~1e-2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub hash_dimension: usize,
    pub hash_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 4,
            learning_rate: 2e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
            batch_size: 32,
            seed: 0,
            hash_dimension: DEFAULT_DIMENSION,
            hash_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LearnerError> {
        let bad = |msg: String| Err(LearnerError::InvalidConfig(msg));
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning rate must be > 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must be in [0, 1)".into());
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return bad("epsilon must be > 0".into());
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight decay must be >= 0".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be >= 1".into());
        }
        HashedFeaturizer::new(self.hash_dimension, self.hash_seed)?;
        Ok(())
    }

    pub fn optimizer(&self) -> AdamW {
        AdamW {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            weight_decay: self.weight_decay,
        }
    }
}

/// Loss and accuracy measured after an epoch's last optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub validation_loss: Option<f64>,
    pub validation_accuracy: Option<f64>,
    pub elapsed_seconds: f64,
}

/// Weights over `dimension` inputs followed by one bias term.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub state: OptimizerState,
}

impl LinearModel {
    pub fn zeros(dimension: usize) -> Self {
        Self {
            state: OptimizerState::zeros(dimension + 1),
        }
    }

    pub fn dimension(&self) -> usize {
        self.state.params.len() - 1
    }

    pub fn weights(&self) -> &[f64] {
        &self.state.params[..self.dimension()]
    }

    pub fn bias(&self) -> f64 {
        self.state.params[self.dimension()]
    }

    pub fn logit(&self, x: &SparseVector) -> f64 {
        x.dot(self.weights()) + self.bias()
    }

    pub fn score(&self, x: &SparseVector) -> f64 {
        sigmoid(self.logit(x))
    }
}

fn mean_loss_accuracy(model: &LinearModel, xs: &[SparseVector], ys: &[u8]) -> (f64, f64) {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (x, &y) in xs.iter().zip(ys) {
        let z = model.logit(x);
        loss += bce_with_logits(z, f64::from(y)).0;
        correct += usize::from(u8::from(sigmoid(z) > 0.5) == y);
    }
    let n = xs.len().max(1) as f64;
    (loss / n, correct as f64 / n)
}

fn check_labels(ys: &[u8]) -> Result<(), LearnerError> {
    if ys.len() < 2 {
        return Err(LearnerError::TooFewRecords(ys.len()));
    }
    if ys.iter().all(|&y| y == ys[0]) {
        return Err(LearnerError::SingleClass(ys[0]));
    }
    Ok(())
}

/// Mini-batch training of a linear head on pre-computed sparse inputs.
/// Batch order is reshuffled every epoch from `config.seed`.
pub fn fit_linear(
    xs: &[SparseVector],
    ys: &[u8],
    dimension: usize,
    config: &TrainConfig,
    validation: Option<(&[SparseVector], &[u8])>,
) -> Result<(LinearModel, Vec<EpochLog>), LearnerError> {
    config.validate()?;
    if xs.len() != ys.len() {
        return Err(LearnerError::DimensionMismatch {
            expected: xs.len(),
            found: ys.len(),
        });
    }
    check_labels(ys)?;
    let optimizer = config.optimizer();
    let mut model = LinearModel::zeros(dimension);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut grad = vec![0.0; dimension + 1];
    let mut touched: Vec<usize> = Vec::new();
    let mut log = Vec::with_capacity(config.epochs);
    let started = Instant::now();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let (_, dz) = bce_with_logits(model.logit(&xs[i]), f64::from(ys[i]));
                for &(j, v) in xs[i].entries() {
                    grad[j as usize] += scale * dz * v;
                    touched.push(j as usize);
                }
                grad[dimension] += scale * dz;
            }
            optimizer.step_dense(&mut model.state, &grad)?;
            for j in touched.drain(..) {
                grad[j] = 0.0;
            }
            grad[dimension] = 0.0;
        }
        let (train_loss, train_accuracy) = mean_loss_accuracy(&model, xs, ys);
        let (validation_loss, validation_accuracy) = match validation {
            Some((vx, vy)) if !vx.is_empty() => {
                let (l, a) = mean_loss_accuracy(&model, vx, vy);
                (Some(l), Some(a))
            }
            _ => (None, None),
        };
        log.push(EpochLog {
            epoch,
            train_loss,
            train_accuracy,
            validation_loss,
            validation_accuracy,
            elapsed_seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok((model, log))
}

/// Hashed-text classifier: featurizer settings plus the linear head.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierState {
    pub featurizer: HashedFeaturizer,
    pub model: LinearModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub score: f64,
    pub label: u8,
}

impl ClassifierState {
    /// All-zero parameters: every score is exactly 0.5.
    pub fn untrained(featurizer: HashedFeaturizer) -> Self {
        Self {
            featurizer,
            model: LinearModel::zeros(featurizer.dimension()),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.model.state.step_count
    }

    pub fn logit(&self, text: &str) -> f64 {
        self.model.logit(&self.featurizer.featurize(text))
    }

    /// `σ(w·x + b)`; label 1 only when the score is strictly above 0.5.
    pub fn predict(&self, text: &str) -> Prediction {
        let score = sigmoid(self.logit(text));
        Prediction {
            score,
            label: u8::from(score > 0.5),
        }
    }
}

pub fn predict(state: &ClassifierState, text: &str) -> Prediction {
    state.predict(text)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: ClassifierState,
    pub log: Vec<EpochLog>,
    pub train_seconds: f64,
}

pub fn train(records: &[LabeledRecord], config: &TrainConfig) -> Result<TrainOutcome, LearnerError> {
    train_validated(records, &[], config)
}

/// Trains on `records`, evaluating `validation` (when non-empty) after
/// every epoch.
pub fn train_validated(
    records: &[LabeledRecord],
    validation: &[LabeledRecord],
    config: &TrainConfig,
) -> Result<TrainOutcome, LearnerError> {
    config.validate()?;
    let started = Instant::now();
    let featurizer = HashedFeaturizer::new(config.hash_dimension, config.hash_seed)?;
    let encode = |rs: &[LabeledRecord]| -> (Vec<SparseVector>, Vec<u8>) {
        rs.iter()
            .map(|r| (featurizer.featurize(&r.text), r.binary_label))
            .unzip()
    };
    let (xs, ys) = encode(records);
    let (vx, vy) = encode(validation);
    let (model, log) = fit_linear(&xs, &ys, featurizer.dimension(), config, Some((&vx, &vy)))?;
    Ok(TrainOutcome {
        state: ClassifierState { featurizer, model },
        log,
        train_seconds: started.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub coordinates: usize,
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
}

/// Central finite differences of the record loss against the analytic
/// gradient, over 50 coordinates drawn from the record's active inputs
/// and the bias.
pub fn gradient_check(state: &ClassifierState, record: &LabeledRecord, h: f64, seed: u64) -> GradientCheck {
    const COORDINATES: usize = 50;
    let x = state.featurizer.featurize(&record.text);
    let target = f64::from(record.binary_label);
    let bias = state.model.dimension();
    let mut active: Vec<usize> = x.entries().iter().map(|&(j, _)| j as usize).collect();
    active.push(bias);

    let (_, dz) = bce_with_logits(state.model.logit(&x), target);
    let mut params = state.model.state.params.clone();
    let loss_at = |params: &[f64]| {
        let z = x.dot(&params[..bias]) + params[bias];
        bce_with_logits(z, target).0
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_rel: f64 = 0.0;
    let mut max_abs: f64 = 0.0;
    for _ in 0..COORDINATES {
        let j = active[rng.gen_range(0..active.len())];
        let analytic = if j == bias { dz } else { dz * x.get(j as u32) };
        let original = params[j];
        params[j] = original + h;
        let up = loss_at(&params);
        params[j] = original - h;
        let down = loss_at(&params);
        params[j] = original;
        let numeric = (up - down) / (2.0 * h);
        let abs = (analytic - numeric).abs();
        let scale = analytic.abs().max(numeric.abs()).max(1e-8);
        max_abs = max_abs.max(abs);
        max_rel = max_rel.max(abs / scale);
    }
    GradientCheck {
        coordinates: COORDINATES,
        max_relative_error: max_rel,
        max_absolute_error: max_abs,
    }
}
