//! Synthetic gray sequences: a textured square over a cluttered background.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::cue::RawFrame;
use crate::geometry::BBox;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    /// Side of the square target in pixels.
    pub target_size: usize,
    /// Pixels per frame; zero keeps the target static.
    pub speed: f64,
    /// Unit-free direction of motion; reflected at the frame borders.
    pub direction: (f64, f64),
    /// Number of background clutter rectangles.
    pub clutter: usize,
    /// Per-frame pixel noise standard deviation.
    pub noise: f64,
    /// 1-based frames on which the target is painted over.
    pub occluded: Vec<usize>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 240,
            height: 180,
            frames: 100,
            target_size: 40,
            speed: 3.0,
            direction: (0.8, 0.6),
            clutter: 40,
            noise: 0.02,
            occluded: Vec::new(),
            seed: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticSequence {
    pub frames: Vec<RawFrame<f32>>,
    pub truth: Vec<BBox<f64>>,
}

fn target_texture(size: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let cells = 5;
    let cell = size.div_ceil(cells);
    let levels: Vec<f32> = (0..cells * cells).map(|_| rng.random_range(0.05..0.95)).collect();
    let mut tex = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let border = x < 2 || y < 2 || x + 2 >= size || y + 2 >= size;
            tex.push(if border { 1.0 } else { levels[(y / cell) * cells + x / cell] });
        }
    }
    tex
}

fn background(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let (w, h) = (cfg.width, cfg.height);
    let mut bg: Vec<f32> = (0..w * h).map(|_| 0.35 + 0.1 * rng.random::<f32>()).collect();
    for _ in 0..cfg.clutter {
        let rw = rng.random_range(4..24usize);
        let rh = rng.random_range(4..24usize);
        let x0 = rng.random_range(0..w - rw);
        let y0 = rng.random_range(0..h - rh);
        let level: f32 = rng.random_range(0.1..0.7);
        for y in y0..y0 + rh {
            for x in x0..x0 + rw {
                bg[y * w + x] = level;
            }
        }
    }
    bg
}

/// Position of the target's top-left corner at 0-based frame `t`, reflected at the borders.
fn position(cfg: &SynthConfig, t: usize) -> (f64, f64) {
    let span_x = (cfg.width - cfg.target_size) as f64;
    let span_y = (cfg.height - cfg.target_size) as f64;
    let norm = cfg.direction.0.hypot(cfg.direction.1).max(1e-12);
    let start = (span_x * 0.25, span_y * 0.3);
    let reflect = |p: f64, span: f64| {
        let period = 2.0 * span;
        let m = p.rem_euclid(period);
        if m <= span {
            m
        } else {
            period - m
        }
    };
    let d = cfg.speed * t as f64;
    (
        reflect(start.0 + d * cfg.direction.0 / norm, span_x).round(),
        reflect(start.1 + d * cfg.direction.1 / norm, span_y).round(),
    )
}

pub fn generate(cfg: &SynthConfig) -> SyntheticSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let texture = target_texture(cfg.target_size, &mut rng);
    let bg = background(cfg, &mut rng);
    let mut frames = Vec::with_capacity(cfg.frames);
    let mut truth = Vec::with_capacity(cfg.frames);
    let s = cfg.target_size;
    for t in 0..cfg.frames {
        let (px, py) = position(cfg, t);
        let (ox, oy) = (px as usize, py as usize);
        let mut data = bg.clone();
        let occluded = cfg.occluded.contains(&(t + 1));
        for y in 0..s {
            for x in 0..s {
                let i = (oy + y) * cfg.width + ox + x;
                data[i] = if occluded { bg[(y % 24) * cfg.width + (x % 24)] } else { texture[y * s + x] };
            }
        }
        for v in data.iter_mut() {
            let n: f64 = rng.sample(StandardNormal);
            *v = (*v + (cfg.noise * n) as f32).clamp(0.0, 1.0);
        }
        frames.push(RawFrame::gray(cfg.width, cfg.height, data, t + 1));
        truth.push(BBox::new(px, py, s as f64, s as f64));
    }
    SyntheticSequence { frames, truth }
}
