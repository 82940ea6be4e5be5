#![allow(dead_code)]

pub mod fd;

use cuetrack::config::TrackerConfig;
use cuetrack::cue::{PatchTensor, NUM_CUES, PATCH_AREA};
use cuetrack::geometry::MotionState;
use cuetrack::loss::Label;
use cuetrack::pool::{FrameQuality, SamplePool, StoredSample};
use cuetrack::scalar::Scalar;
use cuetrack::synth::SynthConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn unit_state<T: Scalar>() -> MotionState<T> {
    MotionState { cx: T::lit(16.0), cy: T::lit(16.0), scale: T::one(), aspect: T::one() }
}

/// Noise patch, with a bright centered square when `bright` is set.
pub fn square_patch<T: Scalar>(rng: &mut ChaCha8Rng, bright: bool) -> PatchTensor<T> {
    let mut data = vec![T::zero(); NUM_CUES * PATCH_AREA];
    for (i, v) in data.iter_mut().enumerate() {
        let (x, y) = (i % 32, (i % PATCH_AREA) / 32);
        let inside = (8..24).contains(&x) && (8..24).contains(&y);
        *v = T::lit(if bright && inside { rng.random_range(8.0..10.0) } else { rng.random_range(0.0..2.0) });
    }
    PatchTensor { data, state: unit_state(), flipped: false }
}

pub fn stored<T: Scalar>(patch: PatchTensor<T>, label: Label, frame: usize, importance: f64) -> StoredSample<T> {
    StoredSample { state: patch.state, patch, label, frame_index: frame, importance: T::lit(importance) }
}

/// One-frame pool of bright-square positives and noise negatives.
pub fn separable_pool<T: Scalar>(seed: u64, per_side: usize) -> SamplePool<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pos = (0..per_side).map(|_| stored(square_patch(&mut rng, true), Label::Positive, 1, 0.24)).collect();
    let neg = (0..per_side).map(|_| stored(square_patch(&mut rng, false), Label::Negative, 1, 0.24)).collect();
    let mut pool = SamplePool::new();
    pool.add_frame(pos, neg, FrameQuality::new(1, 1.0)).unwrap();
    pool
}

/// Reduced budgets for tests that only need a plausible tracker.
pub fn light_config() -> TrackerConfig {
    let mut cfg = TrackerConfig::default();
    cfg.motion.n_particles = 300;
    cfg.train.bootstrap_steps = 300;
    cfg.train.online_steps = 40;
    cfg.harvest.bootstrap_rounds = 4;
    cfg.record_timing = false;
    cfg
}

pub fn small_synth(frames: usize, speed: f64) -> SynthConfig {
    SynthConfig { width: 160, height: 120, frames, speed, clutter: 20, ..SynthConfig::default() }
}
