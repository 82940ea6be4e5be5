//! Append-only positive/negative sample history with per-frame prediction quality,
//! and minibatch draws under the temporal/label-noise joint distribution.
//!
//! Positives are drawn uniformly over the whole history, negatives with weight
//! `exp(-sigma * (t - t')^2)`; both are multiplied by the quality `Q_t'` of the
//! frame they came from.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cue::PatchTensor;
use crate::error::{Result, TrackError};
use crate::geometry::MotionState;
use crate::loss::Label;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct StoredSample<T> {
    pub patch: PatchTensor<T>,
    pub state: MotionState<T>,
    pub label: Label,
    pub frame_index: usize,
    /// Structural importance against the frame's detection, in `[0, 1]`.
    pub importance: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameQuality {
    pub frame_index: usize,
    pub q: f64,
}

impl FrameQuality {
    /// Quality clamped into `[0, 1]`.
    pub fn new(frame_index: usize, q: f64) -> Self {
        Self { frame_index, q: if q.is_nan() { 0.0 } else { q.clamp(0.0, 1.0) } }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Temporal decay of the negative sampling weight.
    pub sigma: f64,
    /// Peak-set ratio: samples scoring above `v * S*` count as peaks.
    pub v: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { sigma: 10.0, v: 0.5, n_pos: 32, n_neg: 32 }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(TrackError::Config("sampler sigma must be positive".into()));
        }
        if !(self.v > 0.0 && self.v < 1.0) {
            return Err(TrackError::Config("peak ratio v must lie in (0, 1)".into()));
        }
        if self.n_pos == 0 || self.n_neg == 0 {
            return Err(TrackError::Config("minibatch needs positives and negatives".into()));
        }
        Ok(())
    }
}

/// Indices scoring strictly above `v * star_score`, always including the first argmax.
pub fn peak_set<T: Scalar>(scores: &[T], star_score: T, v: f64) -> Result<Vec<usize>> {
    if scores.is_empty() {
        return Err(TrackError::Empty("peak-set scores"));
    }
    let argmax = scores
        .iter()
        .enumerate()
        .fold(0, |best, (i, &s)| if s > scores[best] { i } else { best });
    let bar = T::lit(v) * star_score;
    Ok(scores
        .iter()
        .enumerate()
        .filter(|&(i, &s)| s > bar || i == argmax)
        .map(|(i, _)| i)
        .collect())
}

/// Per-sample terms entering the prediction-quality estimate of a frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QualityTerm<T> {
    pub score: T,
    pub importance: T,
    pub truncated_norm: T,
}

/// `q = 1 - mean over the peak set of importance * truncated residual`, clamped to `[0, 1]`.
pub fn prediction_quality<T: Scalar>(terms: &[QualityTerm<T>], v: f64) -> Result<f64> {
    let scores: Vec<T> = terms.iter().map(|t| t.score).collect();
    let star = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let peaks = peak_set(&scores, star, v)?;
    let sum: f64 = peaks
        .iter()
        .map(|&i| (terms[i].importance * terms[i].truncated_norm).as_f64())
        .sum();
    let q = 1.0 - sum / peaks.len() as f64;
    Ok(FrameQuality::new(0, q).q)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Positive,
    Negative,
}

#[derive(Clone, Debug, Default)]
pub struct SamplePool<T> {
    positives: Vec<StoredSample<T>>,
    negatives: Vec<StoredSample<T>>,
    frames: Vec<FrameQuality>,
}

impl<T: Scalar> SamplePool<T> {
    pub fn new() -> Self {
        Self { positives: Vec::new(), negatives: Vec::new(), frames: Vec::new() }
    }

    pub fn positives(&self) -> &[StoredSample<T>] {
        &self.positives
    }

    pub fn negatives(&self) -> &[StoredSample<T>] {
        &self.negatives
    }

    pub fn frames(&self) -> &[FrameQuality] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn latest_frame(&self) -> Option<usize> {
        self.frames.last().map(|f| f.frame_index)
    }

    pub fn quality(&self, frame_index: usize) -> Option<f64> {
        self.frames
            .binary_search_by_key(&frame_index, |f| f.frame_index)
            .ok()
            .map(|i| self.frames[i].q)
    }

    /// Append one frame's harvest. Frame indices must strictly increase and every
    /// sample must belong to `quality.frame_index`.
    pub fn add_frame(
        &mut self,
        positives: Vec<StoredSample<T>>,
        negatives: Vec<StoredSample<T>>,
        quality: FrameQuality,
    ) -> Result<()> {
        if let Some(last) = self.latest_frame() {
            if quality.frame_index <= last {
                return Err(TrackError::FrameOrder { last, got: quality.frame_index });
            }
        }
        let foreign = positives
            .iter()
            .chain(&negatives)
            .find(|s| s.frame_index != quality.frame_index);
        if let Some(s) = foreign {
            return Err(TrackError::FrameOrder { last: quality.frame_index, got: s.frame_index });
        }
        if positives.iter().any(|s| !s.label.is_positive())
            || negatives.iter().any(|s| s.label.is_positive())
        {
            return Err(TrackError::Config("sample stored on the wrong side of the pool".into()));
        }
        self.positives.extend(positives);
        self.negatives.extend(negatives);
        self.frames.push(FrameQuality::new(quality.frame_index, quality.q));
        Ok(())
    }

    fn side(&self, side: Side) -> &[StoredSample<T>] {
        match side {
            Side::Positive => &self.positives,
            Side::Negative => &self.negatives,
        }
    }

    /// Normalized per-sample draw probabilities for one side of the pool.
    ///
    /// Weights are formed in the log domain so very old negatives do not underflow
    /// the whole distribution. When every sample has zero weight, the draw falls
    /// back to the samples of the first (annotated) frame.
    pub fn sample_weights(&self, side: Side, cfg: &SamplerConfig) -> Result<Vec<f64>> {
        let samples = self.side(side);
        if samples.is_empty() {
            return Err(TrackError::EmptyPool(match side {
                Side::Positive => "positive",
                Side::Negative => "negative",
            }));
        }
        let now = self.latest_frame().unwrap_or(0) as f64;
        let log_w: Vec<f64> = samples
            .iter()
            .map(|s| {
                let q = self.quality(s.frame_index).unwrap_or(0.0);
                let temporal = match side {
                    Side::Positive => 0.0,
                    Side::Negative => {
                        let dt = now - s.frame_index as f64;
                        -cfg.sigma * dt * dt
                    }
                };
                if q > 0.0 {
                    temporal + q.ln()
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        let peak = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut w: Vec<f64> = if peak.is_finite() {
            log_w.iter().map(|&l| (l - peak).exp()).collect()
        } else {
            let first = samples.iter().map(|s| s.frame_index).min().unwrap_or(0);
            samples
                .iter()
                .map(|s| if s.frame_index == first { 1.0 } else { 0.0 })
                .collect()
        };
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        Ok(w)
    }

    fn draw_side<'a, R: Rng + ?Sized>(
        &'a self,
        side: Side,
        count: usize,
        cfg: &SamplerConfig,
        rng: &mut R,
        out: &mut Vec<&'a StoredSample<T>>,
    ) -> Result<()> {
        let w = self.sample_weights(side, cfg)?;
        let dist = WeightedIndex::new(&w)
            .map_err(|e| TrackError::Config(format!("sampling weights: {e}")))?;
        let samples = self.side(side);
        for _ in 0..count {
            out.push(&samples[dist.sample(rng)]);
        }
        Ok(())
    }

    /// `n_pos` positives then `n_neg` negatives, drawn with replacement.
    pub fn draw_minibatch<R: Rng + ?Sized>(
        &self,
        cfg: &SamplerConfig,
        rng: &mut R,
    ) -> Result<Vec<&StoredSample<T>>> {
        let mut out = Vec::with_capacity(cfg.n_pos + cfg.n_neg);
        self.draw_side(Side::Positive, cfg.n_pos, cfg, rng, &mut out)?;
        self.draw_side(Side::Negative, cfg.n_neg, cfg, rng, &mut out)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cue::{NUM_CUES, PATCH_AREA};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(frame: usize, label: Label) -> StoredSample<f64> {
        let state = MotionState { cx: 0.0, cy: 0.0, scale: 1.0, aspect: 1.0 };
        StoredSample {
            patch: PatchTensor { data: vec![frame as f64 % 10.0; NUM_CUES * PATCH_AREA], state, flipped: false },
            state,
            label,
            frame_index: frame,
            importance: 0.2,
        }
    }

    fn frame(pool: &mut SamplePool<f64>, t: usize, pos: usize, neg: usize, q: f64) {
        pool.add_frame(
            (0..pos).map(|_| sample(t, Label::Positive)).collect(),
            (0..neg).map(|_| sample(t, Label::Negative)).collect(),
            FrameQuality::new(t, q),
        )
        .unwrap();
    }

    #[test]
    fn peak_set_examples() {
        assert_eq!(peak_set(&[10.0f64, 6.0, 1.0], 10.0, 0.5).unwrap(), vec![0, 1]);
        assert_eq!(peak_set(&[3.0f64, 3.0, 3.0], 3.0, 0.5).unwrap(), vec![0, 1, 2]);
        // v = 1: nothing is strictly above the max, the argmax is kept
        assert_eq!(peak_set(&[1.0f64, 4.0, 2.0], 4.0, 1.0).unwrap(), vec![1]);
        assert!(peak_set::<f64>(&[], 0.0, 0.5).is_err());
        // negative top score still yields the argmax
        assert_eq!(peak_set(&[-3.0f64, -1.0], -1.0, 0.5).unwrap(), vec![1]);
    }

    #[test]
    fn quality_examples() {
        let clean = [QualityTerm { score: 5.0f64, importance: 0.24, truncated_norm: 0.0 }; 3];
        assert_eq!(prediction_quality(&clean, 0.5).unwrap(), 1.0);
        let single = [
            QualityTerm { score: 5.0f64, importance: 0.244918662403709, truncated_norm: 0.1 },
            QualityTerm { score: 1.0, importance: 0.2, truncated_norm: 0.9 },
        ];
        let q = prediction_quality(&single, 0.5).unwrap();
        assert!((q - 0.9755081337596291).abs() < 1e-12);
        // many strong off-target peaks with large residuals lower the quality
        let mut occluded = vec![QualityTerm { score: 5.0f64, importance: 0.24, truncated_norm: 0.0 }];
        occluded.extend([QualityTerm { score: 4.5, importance: 0.24, truncated_norm: 1.2 }; 5]);
        assert!(prediction_quality(&occluded, 0.5).unwrap() < q);
        let huge = [QualityTerm { score: 1.0f64, importance: 1.0, truncated_norm: 50.0 }];
        assert_eq!(prediction_quality(&huge, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn add_frame_contract() {
        let mut pool = SamplePool::new();
        frame(&mut pool, 1, 3, 5, 1.0);
        assert_eq!(pool.len(), 8);
        frame(&mut pool, 2, 2, 2, 0.7);
        assert_eq!(pool.len(), 12);
        let dup = pool.add_frame(vec![sample(2, Label::Positive)], vec![], FrameQuality::new(2, 1.0));
        assert!(matches!(dup, Err(TrackError::FrameOrder { .. })));
        let wrong = pool.add_frame(vec![sample(3, Label::Negative)], vec![], FrameQuality::new(3, 1.0));
        assert!(wrong.is_err());
        assert_eq!(pool.len(), 12);
        assert_eq!(pool.quality(2), Some(0.7));
    }

    #[test]
    fn uniform_positives_and_recent_negatives() {
        let mut pool = SamplePool::new();
        for t in 1..=4 {
            frame(&mut pool, t, 2, 2, 1.0);
        }
        let cfg = SamplerConfig::default();
        let wp = pool.sample_weights(Side::Positive, &cfg).unwrap();
        assert!(wp.iter().all(|&w| (w - 1.0 / 8.0).abs() < 1e-15));
        let wn = pool.sample_weights(Side::Negative, &cfg).unwrap();
        let ratio = wn[6] / wn[4];
        assert!((ratio - 10f64.exp()).abs() / 10f64.exp() < 1e-12);
    }

    #[test]
    fn zero_quality_frames_get_no_mass() {
        let mut pool = SamplePool::new();
        frame(&mut pool, 1, 2, 2, 1.0);
        frame(&mut pool, 2, 2, 2, 0.0);
        let cfg = SamplerConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let batch = pool.draw_minibatch(&cfg, &mut rng).unwrap();
            assert!(batch.iter().all(|s| s.frame_index == 1));
        }
    }

    #[test]
    fn all_distrusted_falls_back_to_first_frame() {
        let mut pool = SamplePool::new();
        frame(&mut pool, 1, 1, 1, 0.0);
        frame(&mut pool, 2, 1, 1, 0.0);
        let w = pool.sample_weights(Side::Negative, &SamplerConfig::default()).unwrap();
        assert_eq!(w, vec![1.0, 0.0]);
    }

    #[test]
    fn old_negatives_do_not_underflow() {
        let mut pool = SamplePool::new();
        frame(&mut pool, 1, 1, 1, 1.0);
        frame(&mut pool, 40, 1, 1, 0.0);
        let w = pool.sample_weights(Side::Negative, &SamplerConfig::default()).unwrap();
        assert_eq!(w, vec![1.0, 0.0]);
    }

    #[test]
    fn empty_side_is_error_and_draws_are_seeded() {
        let mut pool = SamplePool::new();
        frame(&mut pool, 1, 0, 3, 1.0);
        let cfg = SamplerConfig::default();
        assert!(pool.draw_minibatch(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
        frame(&mut pool, 2, 3, 3, 0.5);
        let a: Vec<_> = pool.draw_minibatch(&cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap().iter().map(|s| s.frame_index).collect();
        let b: Vec<_> = pool.draw_minibatch(&cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap().iter().map(|s| s.frame_index).collect();
        assert_eq!(a, b);
        assert_eq!(a.len(), 64);
    }
}
