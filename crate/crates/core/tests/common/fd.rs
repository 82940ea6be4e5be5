#![allow(dead_code)]
//! Central finite differences against the analytic backward pass.

use std::collections::BTreeMap;

use cuetrack::cnn::{backward, forward_full, init_model, CnnModel, GradTarget};
use cuetrack::cue::{PatchTensor, NUM_CUES, PATCH_AREA};
use cuetrack::geometry::MotionState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-4;

#[derive(Debug, Default)]
pub struct FdReport {
    pub worst: f64,
    /// Checked entries per layer name (`conv1_w`, `fusion.w`, ...).
    pub checked: BTreeMap<String, usize>,
}

impl FdReport {
    pub fn merge(&mut self, other: FdReport) {
        self.worst = self.worst.max(other.worst);
        for (k, v) in other.checked {
            *self.checked.entry(k).or_default() += v;
        }
    }

    pub fn total(&self) -> usize {
        self.checked.values().sum()
    }
}

fn patch(rng: &mut ChaCha8Rng) -> PatchTensor<f64> {
    PatchTensor {
        data: (0..NUM_CUES * PATCH_AREA).map(|_| rng.random_range(0.0..10.0)).collect(),
        state: MotionState { cx: 0.0, cy: 0.0, scale: 1.0, aspect: 1.0 },
        flipped: false,
    }
}

fn patterns(model: &CnnModel<f64>, p: &PatchTensor<f64>) -> Vec<Vec<u32>> {
    forward_full(model, p).cache.cues.iter().map(|c| c.routing_pattern()).collect()
}

/// Scalar probe `u . output` for the output the target differentiates.
fn probe(model: &CnnModel<f64>, p: &PatchTensor<f64>, target: GradTarget, u: [f64; 2]) -> f64 {
    let out = forward_full(model, p);
    let o = match target {
        GradTarget::CueHead(k) => out.per_cue[k],
        _ => out.fused,
    };
    u[0] * o.s1 + u[1] * o.s2
}

fn blob_ranges(target: GradTarget) -> Vec<usize> {
    // blob indices: 8 per cue, then fusion.w (24), fusion.b (25)
    match target {
        GradTarget::CueHead(k) => (k * 8..k * 8 + 8).collect(),
        GradTarget::CueThroughFusion(k) => (k * 8..k * 8 + 6).collect(),
        GradTarget::FusionBlock(_) => vec![24, 25],
        GradTarget::All => (0..NUM_CUES).flat_map(|k| k * 8..k * 8 + 6).chain([24, 25]).collect(),
    }
}

fn layer_name(blob: &str) -> String {
    blob.split_once('.').filter(|(p, _)| p.starts_with("cue")).map_or(blob, |(_, l)| l).to_string()
}

/// Checks `per_blob` entries of every blob the target touches at one random point
/// (model, patch, upstream vector), skipping perturbations that flip a ReLU or pool.
pub fn check(seed: u64, target: GradTarget, per_blob: usize) -> FdReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = init_model::<f64>(seed);
    // larger fusion weights so every path carries signal
    for v in model.fusion.w.iter_mut() {
        *v *= 10.0;
    }
    let p = patch(&mut rng);
    let u = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
    let base = forward_full(&model, &p);
    let grads = backward(&model, &base.cache, u, target).unwrap();
    let base_pattern = patterns(&model, &p);
    let names: Vec<String> = model.blobs().iter().map(|b| layer_name(&b.name)).collect();
    let mut report = FdReport::default();
    for b in blob_ranges(target) {
        let len = model.blobs()[b].values.len();
        let mut checked = 0;
        let mut tries = 0;
        while checked < per_blob.min(len) && tries < 50 * per_blob {
            tries += 1;
            let i = rng.random_range(0..len);
            if let (GradTarget::FusionBlock(k), 24) = (target, b) {
                if (i % 24) / 8 != k {
                    continue;
                }
            }
            let analytic = grads.blobs()[b].values[i];
            let mut plus = model.clone();
            plus.blobs_mut()[b][i] += H;
            let mut minus = model.clone();
            minus.blobs_mut()[b][i] -= H;
            if patterns(&plus, &p) != base_pattern || patterns(&minus, &p) != base_pattern {
                continue;
            }
            let numeric = (probe(&plus, &p, target, u) - probe(&minus, &p, target, u)) / (2.0 * H);
            let scale = analytic.abs().max(numeric.abs()).max(1e-6);
            report.worst = report.worst.max((analytic - numeric).abs() / scale);
            *report.checked.entry(names[b].clone()).or_default() += 1;
            checked += 1;
        }
    }
    report
}
