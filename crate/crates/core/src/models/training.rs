use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{ModelError, Result};
use crate::metrics::{classify, confusion, precision_recall_f1};
use crate::numerics::{seeded_rng, OptimizerKind, OptimizerState, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub loss: f64,
    pub val_f1: Option<f64>,
}

/// Epoch with the highest validation F1, earliest on ties.
pub fn select_best_epoch(history: &[EpochRecord]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for r in history {
        if let Some(f1) = r.val_f1 {
            if best.is_none_or(|(_, b)| f1 > b) {
                best = Some((r.epoch, f1));
            }
        }
    }
    best.map(|(e, _)| e)
}

pub(crate) fn f1_at_half(probs: &[f64], labels: &[u8]) -> f64 {
    let preds = classify(probs, 0.5);
    confusion(labels, &preds).map_or(0.0, |c| precision_recall_f1(&c).f1)
}

pub(crate) struct LoopSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
}

/// What the shared mini-batch loop needs from a network.
pub(crate) trait Trainable {
    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;
    /// Mean loss over the batch rows and its gradient.
    fn batch_loss_grad(&self, rows: &[usize], labels: &[u8], noise_seed: u64) -> Result<(f64, ParamSet)>;
    fn validation_f1(&self) -> Option<f64>;
}

pub(crate) struct LoopOutcome {
    pub history: Vec<EpochRecord>,
    pub selected_epoch: Option<usize>,
}

/// Seeded per-epoch shuffling, mini-batch updates, and best-by-validation
/// parameter retention.
pub(crate) fn train_loop<M: Trainable>(model: &mut M, labels: &[u8], s: &LoopSettings) -> Result<LoopOutcome> {
    if s.batch_size == 0 {
        return Err(ModelError::Config("batch_size must be positive".into()));
    }
    let mut opt = OptimizerState::new(s.optimizer, s.learning_rate)?;
    let mut order_rng = seeded_rng(s.seed);
    let mut noise_rng = seeded_rng(s.seed ^ 0xD1B5_4A32_D192_ED03);
    let n = labels.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(s.epochs);
    let mut best: Option<(f64, ParamSet)> = None;

    for epoch in 1..=s.epochs {
        order.shuffle(&mut order_rng);
        let mut total = 0.0;
        for (batch, rows) in order.chunks(s.batch_size).enumerate() {
            let (loss, grads) = model.batch_loss_grad(rows, labels, noise_rng.next_u64())?;
            if !loss.is_finite() || !grads.all_finite() {
                return Err(ModelError::Divergence { epoch, batch });
            }
            opt.step(model.params_mut(), &grads)?;
            total += loss * rows.len() as f64;
        }
        if !model.params().all_finite() {
            return Err(ModelError::Divergence { epoch, batch: n.div_ceil(s.batch_size).saturating_sub(1) });
        }
        let val_f1 = model.validation_f1();
        if let Some(f1) = val_f1 {
            if best.as_ref().is_none_or(|(b, _)| f1 > *b) {
                best = Some((f1, model.params().clone()));
            }
        }
        let loss = if n == 0 { 0.0 } else { total / n as f64 };
        log::debug!("epoch {epoch}: loss {loss:.6} val_f1 {val_f1:?}");
        history.push(EpochRecord { epoch, loss, val_f1 });
    }
    if let Some((_, params)) = best {
        *model.params_mut() = params;
    }
    Ok(LoopOutcome { selected_epoch: select_best_epoch(&history), history })
}
