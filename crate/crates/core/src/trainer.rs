//! Iterative SGD that rotates over the cue sub-networks, each followed by a small
//! step on the matching block of the fusion layer, plus the lazy update gate.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cnn::{forward_cue, fuse, CnnModel, FullOutput, GradTarget, FEATURES};
use crate::cue::NUM_CUES;
use crate::error::{Result, TrackError};
use crate::loss::{evaluate, gradient_from_outputs, loss_from_outputs, LossConfig, OutputHead, WeightedSample};
use crate::pool::{SamplePool, SamplerConfig, StoredSample};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Target loss; training stops once the minibatch loss is at or below it.
    pub epsilon: f64,
    /// Learning rate of the cue sub-networks.
    pub lr_cue: f64,
    /// Learning rate of the fusion layer.
    pub lr_fuse: f64,
    /// Step budget for updates after the first frame.
    pub online_steps: usize,
    /// Step budget for the first-frame bootstrap.
    pub bootstrap_steps: usize,
    /// Train only when the fresh-minibatch loss exceeds `lazy_multiplier * epsilon`.
    pub lazy_multiplier: f64,
    /// Draw a new minibatch at every step instead of once per call.
    pub resample_per_step: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epsilon: 5e-3,
            lr_cue: 5e-2,
            lr_fuse: 5e-3,
            online_steps: 300,
            bootstrap_steps: 4000,
            lazy_multiplier: 2.0,
            resample_per_step: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_cue > self.lr_fuse && self.lr_fuse > 0.0) {
            return Err(TrackError::Config("learning rates must satisfy lr_cue > lr_fuse > 0".into()));
        }
        if self.online_steps < NUM_CUES || self.bootstrap_steps < NUM_CUES {
            return Err(TrackError::Config("step budgets must cover every cue at least once".into()));
        }
        if !(self.epsilon >= 0.0) {
            return Err(TrackError::Config("epsilon must be non-negative".into()));
        }
        Ok(())
    }
}

/// True iff `l1 > lazy_multiplier * epsilon`.
pub fn should_update(l1: f64, cfg: &TrainConfig) -> bool {
    l1 > cfg.lazy_multiplier * cfg.epsilon
}

/// One row of the optional training trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    /// 1-based cue updated after this loss was measured; `None` on the stopping step.
    pub cue: Option<usize>,
    pub loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    /// Number of update steps performed.
    pub steps_taken: usize,
    /// Minibatch loss `L_m` measured before step `m`.
    pub losses: Vec<f64>,
    /// Index of the returned snapshot, `argmin_m L_m`.
    pub best_step: usize,
    /// 0-based cue updated at each step.
    pub cues: Vec<usize>,
    /// The returned model differs from the input model.
    pub updated: bool,
}

fn weighted<'a, T: Scalar>(batch: &[&'a StoredSample<T>]) -> Vec<WeightedSample<'a, T>> {
    batch
        .iter()
        .map(|s| WeightedSample { patch: &s.patch, label: s.label, importance: s.importance })
        .collect()
}

/// Fused structural loss of `model` on a freshly drawn minibatch.
pub fn minibatch_loss<T: Scalar, R: Rng + ?Sized>(
    model: &CnnModel<T>,
    pool: &SamplePool<T>,
    loss_cfg: &LossConfig,
    sampler: &SamplerConfig,
    rng: &mut R,
) -> Result<f64> {
    let batch = pool.draw_minibatch(sampler, rng)?;
    let ws = weighted(&batch);
    let outputs = evaluate(model, &ws);
    Ok(loss_from_outputs(&outputs, &ws, OutputHead::Fused, loss_cfg).loss.as_f64())
}

/// Recompute cue `k` and the fused output after cue `k`'s weights changed.
fn refresh_cue<T: Scalar>(model: &CnnModel<T>, k: usize, outputs: &mut [FullOutput<T>], ws: &[WeightedSample<'_, T>]) {
    for (out, s) in outputs.iter_mut().zip(ws) {
        let cue = forward_cue(&model.cues[k], s.patch.plane(k));
        out.features[k * FEATURES..(k + 1) * FEATURES].copy_from_slice(&cue.features);
        out.cache.features[k * FEATURES..(k + 1) * FEATURES].copy_from_slice(&cue.features);
        out.per_cue[k] = cue.head;
        out.cache.cues[k] = cue.cache;
        out.fused = fuse(&model.fusion, &out.features);
    }
}

/// Iterative SGD over cues and fusion blocks with a budget of `steps`.
///
/// Step `m` measures the fused loss `L_m`, stops if `L_m <= epsilon`, otherwise
/// updates cue `m mod K` on its own head loss at `lr_cue` and then that cue's
/// fusion columns on the fused loss at `lr_fuse`. The snapshot with the lowest
/// measured loss is returned.
#[allow(clippy::too_many_arguments)]
pub fn it_sgd<T: Scalar, R: Rng + ?Sized>(
    model: &CnnModel<T>,
    pool: &SamplePool<T>,
    loss_cfg: &LossConfig,
    sampler: &SamplerConfig,
    cfg: &TrainConfig,
    steps: usize,
    rng: &mut R,
    mut trace: Option<&mut dyn FnMut(TraceRow)>,
) -> Result<(CnnModel<T>, TrainReport)> {
    let lr_cue = T::lit(cfg.lr_cue);
    let lr_fuse = T::lit(cfg.lr_fuse);
    let mut current = model.clone();
    let mut best = model.clone();
    let mut best_loss = f64::INFINITY;
    let mut report = TrainReport::default();
    let mut batch = pool.draw_minibatch(sampler, rng)?;

    for m in 0..steps {
        if cfg.resample_per_step && m > 0 {
            batch = pool.draw_minibatch(sampler, rng)?;
        }
        let ws = weighted(&batch);
        let mut outputs = evaluate(&current, &ws);
        let loss = loss_from_outputs(&outputs, &ws, OutputHead::Fused, loss_cfg).loss.as_f64();
        if !loss.is_finite() {
            return Err(TrackError::Diverged(m));
        }
        report.losses.push(loss);
        if loss < best_loss {
            best_loss = loss;
            best = current.clone();
            report.best_step = m;
        }
        if loss <= cfg.epsilon {
            if let Some(f) = trace.as_mut() {
                f(TraceRow { step: m, cue: None, loss });
            }
            break;
        }
        let k = m % NUM_CUES;
        if let Some(f) = trace.as_mut() {
            f(TraceRow { step: m, cue: Some(k + 1), loss });
        }

        let g = gradient_from_outputs(&current, &outputs, &ws, OutputHead::Cue(k), GradTarget::CueHead(k), loss_cfg)?;
        current.sgd_step(&g.grads, lr_cue);

        refresh_cue(&current, k, &mut outputs, &ws);
        let g = gradient_from_outputs(&current, &outputs, &ws, OutputHead::Fused, GradTarget::FusionBlock(k), loss_cfg)?;
        current.sgd_step(&g.grads, lr_fuse);

        report.steps_taken += 1;
        report.cues.push(k);
    }
    report.updated = best != *model;
    Ok((best, report))
}
