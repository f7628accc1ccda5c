//! Mini-batch Adam training with dev-loss early stopping.

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::NeuralError;
use crate::graph::Graph;
use crate::layers::Dropout;
use crate::model::Trainable;
use crate::params::{Adam, AdamConfig, ParamStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub adam: AdamConfig,
    pub learning_rate: f64,
    pub max_updates: u64,
    /// Optional cap on passes over the training data.
    pub max_epochs: Option<usize>,
    pub eval_every: u64,
    pub patience: usize,
    pub beam: usize,
    pub max_decode_len: usize,
    pub label_smoothing: f64,
    /// Inverse-square-root warmup length; 0 keeps the rate constant.
    pub warmup_steps: u64,
    pub batch_size: usize,
    pub clip_norm: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            adam: AdamConfig::default(),
            learning_rate: 1e-3,
            max_updates: 200_000,
            max_epochs: None,
            eval_every: 5_000,
            patience: 30,
            beam: 5,
            max_decode_len: 100,
            label_smoothing: 0.0,
            warmup_steps: 0,
            batch_size: 80,
            clip_norm: 5.0,
        }
    }
}

impl TrainingConfig {
    /// Transformer defaults: label smoothing and warmup.
    pub fn transformer() -> Self {
        TrainingConfig {
            learning_rate: 5e-4,
            label_smoothing: 0.1,
            warmup_steps: 8_000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        let bad = |m: &str| Err(NeuralError::Config(m.into()));
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return bad("learning rate must be finite and non-negative");
        }
        if self.max_updates == 0 || self.eval_every == 0 || self.batch_size == 0 {
            return bad("max_updates, eval_every and batch_size must be positive");
        }
        if self.patience < 1 {
            return bad("patience must be at least 1");
        }
        if self.beam < 1 || self.max_decode_len < 1 {
            return bad("beam and max_decode_len must be positive");
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return bad("label smoothing must be in [0, 1)");
        }
        if self.clip_norm <= 0.0 {
            return bad("clip_norm must be positive");
        }
        if let Some(0) = self.max_epochs {
            return bad("max_epochs must be positive");
        }
        Ok(())
    }

    /// Rate at 1-based `step`.
    pub fn rate(&self, step: u64) -> f64 {
        if self.warmup_steps == 0 {
            return self.learning_rate;
        }
        let s = step.max(1) as f64;
        let w = self.warmup_steps as f64;
        self.learning_rate * (s / w).min((w / s).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub update: u64,
    /// Mean per-token dev loss (lower is better).
    pub dev_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub updates: u64,
    pub epochs: usize,
    pub evaluations: Vec<Evaluation>,
    pub best_update: u64,
    pub best_dev_loss: f64,
    pub stopped_early: bool,
    pub last_train_loss: f64,
}

/// Mean per-token loss of `model` on `data`, without dropout or smoothing.
pub fn mean_loss<M: Trainable>(model: &M, data: &[M::Example]) -> f64 {
    let mut total = 0.0;
    let mut tokens = 0usize;
    for ex in data {
        let mut g = Graph::new(model.params());
        let (l, n) = model.example_loss(&mut g, ex, &mut Dropout::inactive(), 0.0);
        total += g.scalar(l);
        tokens += n;
    }
    if tokens == 0 {
        0.0
    } else {
        total / tokens as f64
    }
}

/// Trains in place and leaves the best-dev parameters in `model`. An empty
/// dev set falls back to the training set for model selection.
pub fn train<M: Trainable>(
    model: &mut M,
    train_set: &[M::Example],
    dev_set: &[M::Example],
    cfg: &TrainingConfig,
    seed: u64,
) -> Result<TrainReport, NeuralError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(NeuralError::EmptyInput("training set".into()));
    }
    let dev = if dev_set.is_empty() { train_set } else { dev_set };
    let mut order_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut adam = Adam::new(cfg.adam, model.params());
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut report = TrainReport {
        updates: 0,
        epochs: 0,
        evaluations: Vec::new(),
        best_update: 0,
        best_dev_loss: f64::INFINITY,
        stopped_early: false,
        last_train_loss: f64::NAN,
    };
    let mut best: Option<ParamStore> = None;
    let mut since_best = 0usize;

    'outer: loop {
        if cfg.max_epochs.is_some_and(|e| report.epochs >= e) {
            break;
        }
        order.shuffle(&mut order_rng);
        report.epochs += 1;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = model.params().zero_grads();
            let mut loss_sum = 0.0;
            let mut tokens = 0usize;
            for &i in batch {
                let mut g = Graph::new(model.params());
                let mut dropout = Dropout::active(&mut dropout_rng);
                let (l, n) = model.example_loss(&mut g, &train_set[i], &mut dropout, cfg.label_smoothing);
                loss_sum += g.scalar(l);
                tokens += n;
                g.backward(l, &mut grads);
            }
            let update = report.updates + 1;
            let mean = loss_sum / tokens.max(1) as f64;
            if !mean.is_finite() || !grads.all_finite() {
                return Err(NeuralError::Diverged { update, loss: mean });
            }
            grads.scale(1.0 / tokens.max(1) as f64);
            grads.clip(cfg.clip_norm);
            adam.update(model.params_mut(), &grads, cfg.rate(update));
            report.updates = update;
            report.last_train_loss = mean;
            debug!("update {update}: loss {mean:.4}");

            if update % cfg.eval_every == 0 {
                if evaluate(model, dev, &mut report, &mut best, &mut since_best) >= cfg.patience {
                    report.stopped_early = true;
                    break 'outer;
                }
            }
            if update >= cfg.max_updates {
                break 'outer;
            }
        }
    }
    if report.evaluations.last().map(|e| e.update) != Some(report.updates) {
        evaluate(model, dev, &mut report, &mut best, &mut since_best);
    }
    if let Some(p) = best {
        *model.params_mut() = p;
    }
    info!(
        "trained {} updates ({} epochs), best dev loss {:.4} at update {}",
        report.updates, report.epochs, report.best_dev_loss, report.best_update
    );
    Ok(report)
}

/// Records one evaluation; returns evaluations since the last improvement.
fn evaluate<M: Trainable>(
    model: &M,
    dev: &[M::Example],
    report: &mut TrainReport,
    best: &mut Option<ParamStore>,
    since_best: &mut usize,
) -> usize {
    let dev_loss = mean_loss(model, dev);
    report.evaluations.push(Evaluation {
        update: report.updates,
        dev_loss,
    });
    if dev_loss < report.best_dev_loss {
        report.best_dev_loss = dev_loss;
        report.best_update = report.updates;
        *best = Some(model.params().clone());
        *since_best = 0;
    } else {
        *since_best += 1;
    }
    info!("update {}: dev loss {dev_loss:.4}", report.updates);
    *since_best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warmup_schedule_peaks_at_warmup() {
        let cfg = TrainingConfig {
            learning_rate: 1.0,
            warmup_steps: 100,
            ..TrainingConfig::default()
        };
        assert!((cfg.rate(50) - 0.5).abs() < 1e-12);
        assert!((cfg.rate(100) - 1.0).abs() < 1e-12);
        assert!((cfg.rate(400) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_zero_patience() {
        let cfg = TrainingConfig {
            patience: 0,
            ..TrainingConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
