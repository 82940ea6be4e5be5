//! Per-frame workflow: particle proposal, inference, quality estimation, sample
//! harvest and lazily gated training.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::cnn::{cnn_score, predict, CnnModel, ScorePair};
use crate::config::{MotionConfig, TrackerConfig};
use crate::cue::{build_cue_stack, extract_patch, CueKind, CueStack, RawFrame, NUM_CUES};
use crate::error::{Result, TrackError};
use crate::geometry::{BBox, MotionState, PATCH_SIDE};
use crate::loss::{assign_label, importance_delta, residual, state_overlap, truncated_norm};
use crate::pool::{prediction_quality, FrameQuality, QualityTerm, SamplePool, StoredSample};
use crate::scalar::Scalar;
use crate::trainer::{it_sgd, minibatch_loss, should_update, TraceRow};

/// Redraw rounds for wide harvest proposals that landed on the positive side.
const WIDE_REDRAW_ROUNDS: usize = 20;

/// Outcome of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackResult {
    pub frame_index: usize,
    /// Predicted box, clipped to the frame.
    pub bbox: BBox<f64>,
    /// CNN score of the selected particle.
    pub score: f64,
    pub quality: f64,
    pub updated: bool,
    /// Fresh-minibatch loss that fed the update gate; `None` on the first frame.
    pub gate_loss: Option<f64>,
    pub elapsed_ms: f64,
}

/// Training trace row tagged with its frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRecord {
    pub frame: usize,
    pub row: TraceRow,
}

/// `n_particles` Gaussian perturbations of `prev`, centers clamped into the frame.
pub fn sample_particles<T: Scalar, R: Rng + ?Sized>(
    prev: &MotionState<T>,
    cfg: &MotionConfig,
    std_multiplier: f64,
    frame_size: (usize, usize),
    count: usize,
    rng: &mut R,
) -> Vec<MotionState<T>> {
    let h = prev.height().as_f64();
    let (sx, sy, ss) = cfg.stds(h);
    let min_scale = cfg.min_height / PATCH_SIDE as f64;
    let (w, hgt) = (frame_size.0 as f64, frame_size.1 as f64);
    (0..count)
        .map(|_| {
            let nx: f64 = rng.sample(StandardNormal);
            let ny: f64 = rng.sample(StandardNormal);
            let ns: f64 = rng.sample(StandardNormal);
            let cx = (prev.cx.as_f64() + std_multiplier * sx * nx).clamp(0.0, w);
            let cy = (prev.cy.as_f64() + std_multiplier * sy * ny).clamp(0.0, hgt);
            let scale = (prev.scale.as_f64() + std_multiplier * ss * ns).max(min_scale);
            prev.with(T::lit(cx), T::lit(cy), T::lit(scale))
        })
        .collect()
}

/// Particle scores and the selected state.
#[derive(Clone, Debug)]
pub struct Inference<T> {
    pub best: usize,
    pub y_star: MotionState<T>,
    pub outputs: Vec<ScorePair<T>>,
    pub scores: Vec<T>,
}

/// Highest-scoring particle; ties go to the lowest index.
pub fn infer<T: Scalar>(
    model: &CnnModel<T>,
    stack: &CueStack<T>,
    particles: &[MotionState<T>],
) -> Result<Inference<T>> {
    if particles.is_empty() {
        return Err(TrackError::Empty("particle set"));
    }
    let outputs: Vec<ScorePair<T>> = particles
        .par_iter()
        .map(|p| extract_patch(stack, p, false).map(|patch| predict(model, &patch)))
        .collect::<Result<_>>()?;
    let scores: Vec<T> = outputs.iter().map(|&o| cnn_score(o)).collect();
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(Inference { best, y_star: particles[best], outputs, scores })
}

pub struct Tracker<T: Scalar> {
    model: CnnModel<T>,
    pool: SamplePool<T>,
    last_state: MotionState<T>,
    frame_index: usize,
    frame_size: (usize, usize),
    kinds: [CueKind; NUM_CUES],
    rng: ChaCha8Rng,
    cfg: TrackerConfig,
    updates: usize,
    trace: Option<Vec<TraceRecord>>,
}

impl<T: Scalar> Tracker<T> {
    /// Build the model from the first frame and its annotation.
    pub fn init(
        first_frame: &RawFrame<T>,
        gt_box: &BBox<T>,
        seed: u64,
        cfg: TrackerConfig,
    ) -> Result<(Self, TrackResult)> {
        Self::init_with_trace(first_frame, gt_box, seed, cfg, false)
    }

    pub fn init_with_trace(
        first_frame: &RawFrame<T>,
        gt_box: &BBox<T>,
        seed: u64,
        cfg: TrackerConfig,
        trace: bool,
    ) -> Result<(Self, TrackResult)> {
        let start = Instant::now();
        cfg.validate()?;
        let state = MotionState::from_bbox(gt_box)?;
        let stack = build_cue_stack(first_frame, &cfg.cue)?;
        if gt_box.clip_to(stack.width(), stack.height()).is_none() {
            return Err(TrackError::BoxOutsideFrame { width: stack.width(), height: stack.height() });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model_seed: u64 = rng.random();
        let mut model = CnnModel::init_with(model_seed, cfg.init);
        if cfg.tie_fusion_init {
            model.tie_fusion_to_heads();
        }
        let mut tracker = Self {
            model,
            pool: SamplePool::new(),
            last_state: state,
            frame_index: first_frame.index,
            frame_size: (stack.width(), stack.height()),
            kinds: stack.kinds,
            rng,
            cfg,
            updates: 0,
            trace: trace.then(Vec::new),
        };
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        for _ in 0..tracker.cfg.harvest.bootstrap_rounds {
            let (p, n) = tracker.harvest(&stack, &state, first_frame.index)?;
            pos.extend(p);
            neg.extend(n);
        }
        tracker.pool.add_frame(pos, neg, FrameQuality::new(first_frame.index, 1.0))?;
        let steps = tracker.cfg.train.bootstrap_steps;
        tracker.train(steps)?;

        let patch = extract_patch(&stack, &state, false)?;
        let score = cnn_score(predict(&tracker.model, &patch)).as_f64();
        let result = TrackResult {
            frame_index: first_frame.index,
            bbox: gt_box.cast(),
            score,
            quality: 1.0,
            updated: true,
            gate_loss: None,
            elapsed_ms: tracker.elapsed(start),
        };
        Ok((tracker, result))
    }

    fn elapsed(&self, start: Instant) -> f64 {
        if self.cfg.record_timing {
            start.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        }
    }

    fn train(&mut self, steps: usize) -> Result<bool> {
        let frame = self.frame_index;
        let mut rows = Vec::new();
        let mut sink = |row: TraceRow| rows.push(TraceRecord { frame, row });
        let trace: Option<&mut dyn FnMut(TraceRow)> =
            if self.trace.is_some() { Some(&mut sink) } else { None };
        let (model, report) = it_sgd(
            &self.model,
            &self.pool,
            &self.cfg.loss,
            &self.cfg.sampler,
            &self.cfg.train,
            steps,
            &mut self.rng,
            trace,
        )?;
        if let Some(t) = self.trace.as_mut() {
            t.extend(rows);
        }
        self.model = model;
        Ok(report.updated)
    }

    /// Labeled training samples around `center`, split into positives and negatives.
    pub fn harvest(
        &mut self,
        stack: &CueStack<T>,
        center: &MotionState<T>,
        frame_index: usize,
    ) -> Result<(Vec<StoredSample<T>>, Vec<StoredSample<T>>)> {
        let hc = &self.cfg.harvest;
        let mut proposals = Vec::with_capacity(hc.proposals);
        if hc.include_detection {
            proposals.push(*center);
        }
        proposals.extend(sample_particles(
            center,
            &self.cfg.motion,
            hc.near_std_multiplier,
            self.frame_size,
            hc.near_proposals,
            &mut self.rng,
        ));
        let wide = hc.proposals - proposals.len();
        if hc.wide_negatives_only {
            // Bounded redraws; any shortfall is filled with whatever the last batch gave.
            let mut kept = Vec::with_capacity(wide);
            for _ in 0..WIDE_REDRAW_ROUNDS {
                let need = wide - kept.len();
                if need == 0 {
                    break;
                }
                let batch = sample_particles(center, &self.cfg.motion, hc.std_multiplier, self.frame_size, need, &mut self.rng);
                kept.extend(batch.into_iter().filter(|p| !assign_label(state_overlap(p, center), &self.cfg.loss).is_positive()));
            }
            let need = wide - kept.len();
            kept.extend(sample_particles(center, &self.cfg.motion, hc.std_multiplier, self.frame_size, need, &mut self.rng));
            proposals.extend(kept);
        } else {
            proposals.extend(sample_particles(
                center,
                &self.cfg.motion,
                hc.std_multiplier,
                self.frame_size,
                wide,
                &mut self.rng,
            ));
        }
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for state in proposals {
            let theta = state_overlap(&state, center);
            let label = assign_label(theta, &self.cfg.loss);
            let importance = importance_delta(theta);
            let patch = extract_patch(stack, &state, false)?;
            let mut variants = vec![patch];
            if hc.flip {
                let f = variants[0].flipped();
                variants.push(f);
            }
            for patch in variants {
                let s = StoredSample { patch, state, label, frame_index, importance };
                if label.is_positive() {
                    pos.push(s);
                } else {
                    neg.push(s);
                }
            }
        }
        Ok((pos, neg))
    }

    /// Quality of a frame from the particles' fused outputs relative to the detection.
    fn quality(&self, particles: &[MotionState<T>], inf: &Inference<T>) -> Result<f64> {
        let terms: Vec<QualityTerm<T>> = particles
            .iter()
            .zip(inf.outputs.iter().zip(&inf.scores))
            .map(|(p, (&out, &score))| {
                let theta = state_overlap(p, &inf.y_star);
                let label = assign_label(theta, &self.cfg.loss);
                QualityTerm {
                    score,
                    importance: importance_delta(theta),
                    truncated_norm: truncated_norm(residual(out, label), label, &self.cfg.loss),
                }
            })
            .collect();
        prediction_quality(&terms, self.cfg.sampler.v)
    }

    /// Track one frame; `frame.index` must be the next frame number.
    pub fn step(&mut self, frame: &RawFrame<T>) -> Result<TrackResult> {
        let start = Instant::now();
        if frame.index != self.frame_index + 1 {
            return Err(TrackError::FrameOrder { last: self.frame_index, got: frame.index });
        }
        let stack = build_cue_stack(frame, &self.cfg.cue)?;
        if (stack.width(), stack.height()) != self.frame_size {
            return Err(TrackError::InvalidFrame("frame size changed within the sequence".into()));
        }
        self.frame_index = frame.index;

        let particles = sample_particles(
            &self.last_state,
            &self.cfg.motion,
            1.0,
            self.frame_size,
            self.cfg.motion.n_particles,
            &mut self.rng,
        );
        let inf = infer(&self.model, &stack, &particles)?;
        let quality = self.quality(&particles, &inf)?;
        let y_star = inf.y_star;

        let (pos, neg) = self.harvest(&stack, &y_star, frame.index)?;
        self.pool.add_frame(pos, neg, FrameQuality::new(frame.index, quality))?;

        let gate_loss = minibatch_loss(&self.model, &self.pool, &self.cfg.loss, &self.cfg.sampler, &mut self.rng)?;
        let updated = if should_update(gate_loss, &self.cfg.train) {
            let steps = self.cfg.train.online_steps;
            self.train(steps)?
        } else {
            false
        };
        if updated {
            self.updates += 1;
        }
        self.last_state = y_star;

        let bbox = y_star
            .bbox()
            .clip_to(self.frame_size.0, self.frame_size.1)
            .unwrap_or_else(|| y_star.bbox())
            .cast();
        Ok(TrackResult {
            frame_index: frame.index,
            bbox,
            score: inf.scores[inf.best].as_f64(),
            quality,
            updated,
            gate_loss: Some(gate_loss),
            elapsed_ms: self.elapsed(start),
        })
    }

    pub fn model(&self) -> &CnnModel<T> {
        &self.model
    }

    pub fn pool(&self) -> &SamplePool<T> {
        &self.pool
    }

    pub fn last_state(&self) -> &MotionState<T> {
        &self.last_state
    }

    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn cue_kinds(&self) -> [CueKind; NUM_CUES] {
        self.kinds
    }

    /// Model updates performed after the first frame.
    pub fn update_count(&self) -> usize {
        self.updates
    }

    /// Drain recorded training trace rows (empty unless tracing was enabled).
    pub fn take_trace(&mut self) -> Vec<TraceRecord> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }
}
