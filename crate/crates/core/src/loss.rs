//! Overlap-weighted structural loss with label-dependent truncated l2 norm.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cnn::{accumulate_backward, forward_full, CnnModel, FullOutput, GradTarget, ScorePair};
use crate::cue::{PatchTensor, NUM_CUES};
use crate::error::{Result, TrackError};
use crate::geometry::{BBox, MotionState};
use crate::scalar::Scalar;

/// Samples per deterministic gradient-reduction chunk.
const REDUCE_CHUNK: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    /// `[1, 0]`
    Positive,
    /// `[0, 1]`
    Negative,
}

impl Label {
    pub fn vector<T: Scalar>(self) -> [T; 2] {
        match self {
            Label::Positive => [T::one(), T::zero()],
            Label::Negative => [T::zero(), T::one()],
        }
    }

    /// First component of the label vector.
    pub fn scalar<T: Scalar>(self) -> T {
        self.vector::<T>()[0]
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Truncation threshold for negatives.
    pub beta: f64,
    /// Positive threshold is `beta / (1 + u)`.
    pub u: f64,
    /// Samples with overlap strictly above this are positive.
    pub label_overlap_threshold: f64,
    /// Residual norm below which a training step's upstream gradient is `importance * e / radius`
    /// instead of `importance * e / ||e||`. Zero gives the exact loss gradient.
    pub backward_radius: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { beta: 0.0025, u: 3.0, label_overlap_threshold: 0.5, backward_radius: 0.1 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.u >= 0.0) {
            return Err(TrackError::Config("loss beta and u must be non-negative".into()));
        }
        if !(self.backward_radius >= 0.0) {
            return Err(TrackError::Config("backward_radius must be non-negative".into()));
        }
        Ok(())
    }
}

/// Intersection over union of two boxes.
pub fn overlap<T: Scalar>(a: &BBox<T>, b: &BBox<T>) -> T {
    let inter = a.intersection_area(b);
    if inter <= T::zero() {
        return T::zero();
    }
    let union = a.area() + b.area() - inter;
    (inter / union).min(T::one())
}

pub fn state_overlap<T: Scalar>(a: &MotionState<T>, b: &MotionState<T>) -> T {
    overlap(&a.bbox(), &b.bbox())
}

/// Sample importance `|2 / (1 + exp(-(theta - 0.5))) - 1|`, zero at `theta = 0.5`.
pub fn importance_delta<T: Scalar>(theta: T) -> T {
    let two = T::lit(2.0);
    (two / (T::one() + (-(theta - T::lit(0.5))).exp()) - T::one()).abs()
}

pub fn assign_label<T: Scalar>(theta: T, cfg: &LossConfig) -> Label {
    if theta > T::lit(cfg.label_overlap_threshold) {
        Label::Positive
    } else {
        Label::Negative
    }
}

/// Truncation threshold `beta / (1 + u * l)` for a label.
pub fn truncation_threshold<T: Scalar>(label: Label, cfg: &LossConfig) -> T {
    T::lit(cfg.beta) / (T::one() + T::lit(cfg.u) * label.scalar::<T>())
}

/// `||e||_2`, or zero when it does not exceed the label's threshold.
pub fn truncated_norm<T: Scalar>(residual: [T; 2], label: Label, cfg: &LossConfig) -> T {
    let e2 = residual[0].hypot(residual[1]);
    if e2 <= truncation_threshold(label, cfg) {
        T::zero()
    } else {
        e2
    }
}

pub fn residual<T: Scalar>(out: ScorePair<T>, label: Label) -> [T; 2] {
    let l = label.vector::<T>();
    [out.s1 - l[0], out.s2 - l[1]]
}

/// A training patch with its label and structural importance.
#[derive(Clone, Copy, Debug)]
pub struct WeightedSample<'a, T> {
    pub patch: &'a PatchTensor<T>,
    pub label: Label,
    pub importance: T,
}

/// Which network output the residual is taken from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputHead {
    Fused,
    Cue(usize),
}

impl OutputHead {
    fn select<T: Scalar>(self, out: &FullOutput<T>) -> ScorePair<T> {
        match self {
            OutputHead::Fused => out.fused,
            OutputHead::Cue(k) => out.per_cue[k],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossEval<T> {
    pub loss: T,
    /// Indices of samples with a non-zero truncated norm.
    pub active_set: Vec<usize>,
}

/// Forward every sample; order preserved.
pub fn evaluate<T: Scalar>(model: &CnnModel<T>, samples: &[WeightedSample<'_, T>]) -> Vec<FullOutput<T>> {
    samples.par_iter().map(|s| forward_full(model, s.patch)).collect()
}

/// `(1/N) * sum importance_n * ||out_n - l_n||_T` over precomputed outputs.
pub fn loss_from_outputs<T: Scalar>(
    outputs: &[FullOutput<T>],
    samples: &[WeightedSample<'_, T>],
    head: OutputHead,
    cfg: &LossConfig,
) -> LossEval<T> {
    let mut total = T::zero();
    let mut active_set = Vec::new();
    for (i, (out, s)) in outputs.iter().zip(samples).enumerate() {
        let t = truncated_norm(residual(head.select(out), s.label), s.label, cfg);
        if t > T::zero() {
            active_set.push(i);
            total += s.importance * t;
        }
    }
    let n = T::lit(samples.len().max(1) as f64);
    LossEval { loss: total / n, active_set }
}

#[derive(Clone, Debug)]
pub struct LossGradient<T> {
    pub eval: LossEval<T>,
    pub grads: CnnModel<T>,
    /// Samples that went through a backward pass.
    pub backward_visits: usize,
}

/// Loss and gradient of the selected weights; truncated samples are skipped entirely.
/// The gradient is exact when `cfg.backward_radius` is zero.
pub fn gradient_from_outputs<T: Scalar>(
    model: &CnnModel<T>,
    outputs: &[FullOutput<T>],
    samples: &[WeightedSample<'_, T>],
    head: OutputHead,
    target: GradTarget,
    cfg: &LossConfig,
) -> Result<LossGradient<T>> {
    if let OutputHead::Cue(k) = head {
        if k >= NUM_CUES {
            return Err(TrackError::Shape(format!("cue index {k} out of range")));
        }
    }
    let eval = loss_from_outputs(outputs, samples, head, cfg);
    let inv_n = T::one() / T::lit(samples.len().max(1) as f64);
    let radius = T::lit(cfg.backward_radius);
    let partials: Vec<Result<CnnModel<T>>> = eval
        .active_set
        .par_chunks(REDUCE_CHUNK)
        .map(|chunk| {
            let mut g = CnnModel::zeros();
            for &i in chunk {
                let s = &samples[i];
                let e = residual(head.select(&outputs[i]), s.label);
                let scale = s.importance * inv_n / e[0].hypot(e[1]).max(radius);
                accumulate_backward(model, &outputs[i].cache, [e[0] * scale, e[1] * scale], target, &mut g)?;
            }
            Ok(g)
        })
        .collect();
    let mut grads = CnnModel::zeros();
    for p in partials {
        grads.add_scaled(&p?, T::one());
    }
    let backward_visits = eval.active_set.len();
    Ok(LossGradient { eval, grads, backward_visits })
}

/// Structural batch loss of the fused output against labels, with importance taken
/// from each sample's overlap with `y_star`.
pub fn batch_loss<T: Scalar>(
    model: &CnnModel<T>,
    samples: &[(PatchTensor<T>, MotionState<T>, Label)],
    y_star: &MotionState<T>,
    cfg: &LossConfig,
) -> Result<LossEval<T>> {
    if samples.is_empty() {
        return Err(TrackError::Empty("loss batch"));
    }
    let weighted: Vec<WeightedSample<'_, T>> = samples
        .iter()
        .map(|(patch, state, label)| WeightedSample {
            patch,
            label: *label,
            importance: importance_delta(state_overlap(state, y_star)),
        })
        .collect();
    let outputs = evaluate(model, &weighted);
    Ok(loss_from_outputs(&outputs, &weighted, OutputHead::Fused, cfg))
}
