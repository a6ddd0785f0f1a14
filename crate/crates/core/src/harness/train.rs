use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::eval::EvalSet;
use super::metrics::Metrics;
use super::HarnessError;
use crate::corpus::CandidateExample;
use crate::model::{inverse_frequency_weight, AdamState, CarryoverModel, EncodedGroup};
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev: Metrics,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: CarryoverModel,
    /// 1-based epoch whose checkpoint was kept.
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    pub positive_weight: f64,
}

/// Index of the highest score, the earliest one on ties.
pub fn select_best_epoch(scores: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

/// Consecutive groups whose slot counts reach `batch_size` (the last batch may
/// be smaller).
fn batches(order: &[usize], groups: &[EncodedGroup], batch_size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    let mut n = 0;
    for &g in order {
        cur.push(g);
        n += groups[g].slots.len();
        if n >= batch_size {
            out.push(std::mem::take(&mut cur));
            n = 0;
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Trains for `max_epochs` epochs of shuffled mini-batches (candidates that
/// share a turn stay in one batch), scores the dev set after each epoch and
/// returns the parameters of the best dev F1.
pub fn train(
    mut model: CarryoverModel,
    train_set: &[CandidateExample],
    dev: &EvalSet,
) -> Result<TrainOutcome, HarnessError> {
    if train_set.is_empty() || dev.examples.is_empty() {
        return Err(HarnessError::Input("training and dev sets must be non-empty".into()));
    }
    let hyper = model.hyper.clone();
    let positive_weight = hyper.positive_class_weight.unwrap_or_else(|| inverse_frequency_weight(train_set));
    let groups: Vec<EncodedGroup> = model.encode(train_set)?.into_iter().map(|(g, _)| g).collect();
    let dev_groups = model.encode(&dev.examples)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(hyper.seed, "shuffle"));
    let mut order: Vec<usize> = (0..groups.len()).collect();
    let mut state = AdamState::for_params(&model.params);
    let mut grads = model.params.zeros_like();
    let mut history = Vec::with_capacity(hyper.max_epochs);
    let mut best: Option<(usize, f64, CarryoverModel)> = None;

    for epoch in 1..=hyper.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for (bi, batch) in batches(&order, &groups, hyper.batch_size).iter().enumerate() {
            let refs: Vec<&EncodedGroup> = batch.iter().map(|&g| &groups[g]).collect();
            grads.fill_zero();
            let loss = model.loss_and_grad_encoded(&refs, positive_weight, &mut grads)?;
            if !loss.is_finite() {
                return Err(HarnessError::NonFinite { epoch, batch: bi + 1, detail: format!("loss {loss}") });
            }
            model
                .adam_step(&grads, &mut state)
                .map_err(|e| HarnessError::NonFinite { epoch, batch: bi + 1, detail: e.to_string() })?;
            let n: usize = refs.iter().map(|g| g.slots.len()).sum();
            loss_sum += loss * n as f64;
            seen += n;
        }
        let probs = model.predict_groups(&dev_groups, dev.examples.len());
        let dev_metrics = dev.metrics_for(&probs, hyper.threshold);
        let train_loss = loss_sum / seen as f64;
        log::info!(
            "epoch {epoch}/{}: loss {train_loss:.4}, dev P {:.2} R {:.2} F1 {:.2}",
            hyper.max_epochs,
            100.0 * dev_metrics.precision,
            100.0 * dev_metrics.recall,
            100.0 * dev_metrics.f1
        );
        history.push(EpochRecord { epoch, train_loss, dev: dev_metrics });
        if best.as_ref().is_none_or(|(_, f1, _)| dev_metrics.f1 > *f1) {
            best = Some((epoch, dev_metrics.f1, model.clone()));
        }
    }
    let (best_epoch, _, model) = best.ok_or_else(|| HarnessError::Input("max_epochs must be at least 1".into()))?;
    Ok(TrainOutcome { model, best_epoch, history, positive_weight })
}
