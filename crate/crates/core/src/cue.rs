//! Frame preprocessing: the three cue planes and normalized 32x32 patch extraction.
//!
//! Gray frames yield two local-contrast-normalized planes (radii 8 and 12) and a
//! gradient-magnitude plane. Color frames yield the HSV hue and value planes and
//! the gradient magnitude of the value plane.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TrackError};
use crate::geometry::{MotionState, PATCH_SIDE};
use crate::scalar::Scalar;

/// Number of cue planes fed to the network.
pub const NUM_CUES: usize = 3;
/// Pixels per patch plane.
pub const PATCH_AREA: usize = PATCH_SIDE * PATCH_SIDE;
/// Upper end of the patch value range `[0, PATCH_MAX]`.
pub const PATCH_MAX: f64 = 10.0;

/// Single-channel image, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Plane<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height, "plane data length");
        Self { width, height, data }
    }

    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    /// Pixel lookup with replicated borders.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> T {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.data[yc * self.width + xc]
    }

    /// Bilinear sample at continuous pixel-index coordinates, borders replicated.
    pub fn sample_bilinear(&self, sx: T, sy: T) -> T {
        let x0 = sx.floor();
        let y0 = sy.floor();
        let fx = sx - x0;
        let fy = sy - y0;
        let xi = x0.to_isize().unwrap_or(isize::MIN / 2);
        let yi = y0.to_isize().unwrap_or(isize::MIN / 2);
        let one = T::one();
        let top = self.get_clamped(xi, yi) * (one - fx) + self.get_clamped(xi + 1, yi) * fx;
        let bottom =
            self.get_clamped(xi, yi + 1) * (one - fx) + self.get_clamped(xi + 1, yi + 1) * fx;
        top * (one - fy) + bottom * fy
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channels {
    Gray,
    Color,
}

/// Decoded video frame with intensities in `[0, 1]`; color data is interleaved RGB.
#[derive(Clone, Debug)]
pub struct RawFrame<T> {
    pub width: usize,
    pub height: usize,
    pub channels: Channels,
    pub data: Vec<T>,
    /// 1-based frame number.
    pub index: usize,
}

impl<T: Scalar> RawFrame<T> {
    pub fn gray(width: usize, height: usize, data: Vec<T>, index: usize) -> Self {
        Self { width, height, channels: Channels::Gray, data, index }
    }

    pub fn color(width: usize, height: usize, data: Vec<T>, index: usize) -> Self {
        Self { width, height, channels: Channels::Color, data, index }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < PATCH_SIDE || self.height < PATCH_SIDE {
            return Err(TrackError::FrameTooSmall { width: self.width, height: self.height });
        }
        let per_pixel = match self.channels {
            Channels::Gray => 1,
            Channels::Color => 3,
        };
        if self.data.len() != self.width * self.height * per_pixel {
            return Err(TrackError::InvalidFrame(format!(
                "expected {} values, got {}",
                self.width * self.height * per_pixel,
                self.data.len()
            )));
        }
        if self
            .data
            .iter()
            .any(|v| !v.is_finite() || *v < T::zero() || *v > T::one())
        {
            return Err(TrackError::InvalidFrame("pixel outside [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CueKind {
    Lcn { r_mu: usize, r_sigma: usize },
    Hue,
    Value,
    Gradient,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CueConfig {
    /// `(r_mu, r_sigma)` of the two contrast-normalized gray cues.
    pub lcn_radii: [(usize, usize); 2],
    /// Added to the local standard deviation before dividing.
    pub kappa: f64,
}

impl Default for CueConfig {
    fn default() -> Self {
        Self { lcn_radii: [(8, 8), (12, 12)], kappa: 1e-4 }
    }
}

#[derive(Clone, Debug)]
pub struct CueStack<T> {
    pub planes: [Plane<T>; NUM_CUES],
    pub kinds: [CueKind; NUM_CUES],
}

impl<T: Scalar> CueStack<T> {
    pub fn width(&self) -> usize {
        self.planes[0].width
    }

    pub fn height(&self) -> usize {
        self.planes[0].height
    }
}

/// Per-pixel mean and variance over a `(2r+1)^2` window with replicated borders.
///
/// Values are shifted by the first pixel before accumulation so constant images
/// give exactly zero deviation.
fn window_stats<T: Scalar>(image: &Plane<T>, r: usize) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (image.width, image.height);
    let offset = image.data[0].as_f64();
    let (pw, ph) = (w + 2 * r, h + 2 * r);
    // summed-area tables with a leading zero row/column
    let stride = pw + 1;
    let mut s1 = vec![0.0f64; stride * (ph + 1)];
    let mut s2 = vec![0.0f64; stride * (ph + 1)];
    for py in 0..ph {
        let mut row1 = 0.0;
        let mut row2 = 0.0;
        for px in 0..pw {
            let v = image.get_clamped(px as isize - r as isize, py as isize - r as isize).as_f64()
                - offset;
            row1 += v;
            row2 += v * v;
            let i = (py + 1) * stride + px + 1;
            s1[i] = s1[i - stride] + row1;
            s2[i] = s2[i - stride] + row2;
        }
    }
    let n = ((2 * r + 1) * (2 * r + 1)) as f64;
    let side = 2 * r + 1;
    let mut mean = Vec::with_capacity(w * h);
    let mut var = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            // padded window spans [x, x + side) x [y, y + side)
            let a = y * stride + x;
            let b = y * stride + x + side;
            let c = (y + side) * stride + x;
            let d = (y + side) * stride + x + side;
            let m1 = (s1[d] - s1[b] - s1[c] + s1[a]) / n;
            let m2 = (s2[d] - s2[b] - s2[c] + s2[a]) / n;
            mean.push(m1 + offset);
            var.push((m2 - m1 * m1).max(0.0));
        }
    }
    (mean, var)
}

/// `(I - mean_{r_mu}) / (std_{r_sigma} + kappa)` with replicated borders.
pub fn local_contrast_normalize<T: Scalar>(
    image: &Plane<T>,
    r_mu: usize,
    r_sigma: usize,
    kappa: f64,
) -> Plane<T> {
    let (mean, _) = window_stats(image, r_mu);
    let (_, var) = window_stats(image, r_sigma);
    let data = image
        .data
        .iter()
        .zip(mean.iter().zip(var.iter()))
        .map(|(&v, (&m, &s2))| T::lit((v.as_f64() - m) / (s2.sqrt() + kappa)))
        .collect();
    Plane::new(image.width, image.height, data)
}

/// Central-difference gradient magnitude with replicated borders.
pub fn gradient_magnitude<T: Scalar>(image: &Plane<T>) -> Plane<T> {
    let half = T::lit(0.5);
    Plane::from_fn(image.width, image.height, |x, y| {
        let (xi, yi) = (x as isize, y as isize);
        let gx = (image.get_clamped(xi + 1, yi) - image.get_clamped(xi - 1, yi)) * half;
        let gy = (image.get_clamped(xi, yi + 1) - image.get_clamped(xi, yi - 1)) * half;
        (gx * gx + gy * gy).sqrt()
    })
}

/// Hue in `[0, 1)` and value (max channel) of an RGB pixel.
fn hue_value<T: Scalar>(r: T, g: T, b: T) -> (T, T) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let chroma = max - min;
    if chroma <= T::zero() {
        return (T::zero(), max);
    }
    let six = T::lit(6.0);
    let sector = if max == r {
        let h = (g - b) / chroma;
        if h < T::zero() {
            h + six
        } else {
            h
        }
    } else if max == g {
        (b - r) / chroma + T::lit(2.0)
    } else {
        (r - g) / chroma + T::lit(4.0)
    };
    (sector / six, max)
}

pub fn build_cue_stack<T: Scalar>(frame: &RawFrame<T>, cfg: &CueConfig) -> Result<CueStack<T>> {
    frame.validate()?;
    let (w, h) = (frame.width, frame.height);
    match frame.channels {
        Channels::Gray => {
            let gray = Plane::new(w, h, frame.data.clone());
            let [(m1, s1), (m2, s2)] = cfg.lcn_radii;
            Ok(CueStack {
                planes: [
                    local_contrast_normalize(&gray, m1, s1, cfg.kappa),
                    local_contrast_normalize(&gray, m2, s2, cfg.kappa),
                    gradient_magnitude(&gray),
                ],
                kinds: [
                    CueKind::Lcn { r_mu: m1, r_sigma: s1 },
                    CueKind::Lcn { r_mu: m2, r_sigma: s2 },
                    CueKind::Gradient,
                ],
            })
        }
        Channels::Color => {
            let mut hue = Vec::with_capacity(w * h);
            let mut value = Vec::with_capacity(w * h);
            for px in frame.data.chunks_exact(3) {
                let (hh, vv) = hue_value(px[0], px[1], px[2]);
                hue.push(hh);
                value.push(vv);
            }
            let value = Plane::new(w, h, value);
            let grad = gradient_magnitude(&value);
            Ok(CueStack {
                planes: [Plane::new(w, h, hue), value, grad],
                kinds: [CueKind::Hue, CueKind::Value, CueKind::Gradient],
            })
        }
    }
}

/// `NUM_CUES` planes of 32x32 values in `[0, 10]`, cue-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchTensor<T> {
    pub data: Vec<T>,
    pub state: MotionState<T>,
    pub flipped: bool,
}

impl<T: Scalar> PatchTensor<T> {
    pub fn plane(&self, cue: usize) -> &[T] {
        &self.data[cue * PATCH_AREA..(cue + 1) * PATCH_AREA]
    }

    /// Horizontal mirror image.
    pub fn flipped(&self) -> Self {
        let mut data = self.data.clone();
        for row in data.chunks_exact_mut(PATCH_SIDE) {
            row.reverse();
        }
        Self { data, state: self.state, flipped: !self.flipped }
    }
}

/// Min-max rescale into `[0, PATCH_MAX]`; a constant plane maps to the midpoint.
fn rescale_in_place<T: Scalar>(values: &mut [T]) {
    let (lo, hi) = values
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let top = T::lit(PATCH_MAX);
    if !(hi > lo) {
        values.iter_mut().for_each(|v| *v = top * T::lit(0.5));
        return;
    }
    let gain = top / (hi - lo);
    for v in values.iter_mut() {
        *v = ((*v - lo) * gain).max(T::zero()).min(top);
    }
}

/// Crop every cue at the state's box, resample to 32x32 bilinearly and rescale each
/// plane to `[0, 10]`.
pub fn extract_patch<T: Scalar>(
    stack: &CueStack<T>,
    state: &MotionState<T>,
    flipped: bool,
) -> Result<PatchTensor<T>> {
    let bbox = state.bbox();
    if !bbox.is_valid() {
        return Err(TrackError::DegenerateBox(format!("{bbox:?}")));
    }
    if bbox.clip_to(stack.width(), stack.height()).is_none() {
        return Err(TrackError::BoxOutsideFrame { width: stack.width(), height: stack.height() });
    }
    let side = T::lit(PATCH_SIDE as f64);
    let half = T::lit(0.5);
    let step_x = bbox.w / side;
    let step_y = bbox.h / side;
    let xs: Vec<T> = (0..PATCH_SIDE)
        .map(|i| bbox.x + (T::lit(i as f64) + half) * step_x - half)
        .collect();
    let ys: Vec<T> = (0..PATCH_SIDE)
        .map(|j| bbox.y + (T::lit(j as f64) + half) * step_y - half)
        .collect();
    let mut data = Vec::with_capacity(NUM_CUES * PATCH_AREA);
    for plane in &stack.planes {
        let start = data.len();
        for &sy in &ys {
            for &sx in &xs {
                data.push(plane.sample_bilinear(sx, sy));
            }
        }
        rescale_in_place(&mut data[start..]);
    }
    let patch = PatchTensor { data, state: *state, flipped: false };
    Ok(if flipped { patch.flipped() } else { patch })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_plane(w: usize, h: usize, seed: u64) -> Plane<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Plane::from_fn(w, h, |_, _| rng.random::<f64>())
    }

    // Windowed statistics evaluated directly from clamped pixel lookups.
    fn lcn_oracle(p: &Plane<f64>, x: usize, y: usize, rm: usize, rs: usize, kappa: f64) -> f64 {
        let win = |r: usize| -> Vec<f64> {
            let mut v = Vec::new();
            for dy in -(r as isize)..=(r as isize) {
                for dx in -(r as isize)..=(r as isize) {
                    v.push(p.get_clamped(x as isize + dx, y as isize + dy));
                }
            }
            v
        };
        let wm = win(rm);
        let mu = wm.iter().sum::<f64>() / wm.len() as f64;
        let ws = win(rs);
        let ms = ws.iter().sum::<f64>() / ws.len() as f64;
        let var = ws.iter().map(|v| (v - ms) * (v - ms)).sum::<f64>() / ws.len() as f64;
        (p.get(x, y) - mu) / (var.sqrt() + kappa)
    }

    #[test]
    fn lcn_constant_is_zero() {
        let p = Plane::filled(40, 40, 0.37f64);
        let out = local_contrast_normalize(&p, 8, 8, 1e-4);
        assert!(out.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lcn_offset_invariant() {
        let p = random_plane(50, 45, 3);
        let shifted = Plane::new(50, 45, p.data.iter().map(|v| v + 3.5).collect());
        let a = local_contrast_normalize(&p, 8, 8, 1e-4);
        let b = local_contrast_normalize(&shifted, 8, 8, 1e-4);
        for (x, y) in a.data.iter().zip(&b.data) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn lcn_checkerboard_matches_window_oracle() {
        let p = Plane::from_fn(5, 5, |x, y| if (x + y) % 2 == 0 { 0.9 } else { 0.1 });
        let out = local_contrast_normalize(&p, 1, 1, 1e-4);
        let expect = lcn_oracle(&p, 2, 2, 1, 1, 1e-4);
        assert!((out.get(2, 2) - expect).abs() < 1e-12);
        // 3x3 window at the center: five 0.9s and four 0.1s
        let mu = (5.0 * 0.9 + 4.0 * 0.1) / 9.0;
        assert!((expect - (0.9 - mu) / (0.4 * (80.0f64).sqrt() / 9.0 + 1e-4)).abs() < 1e-12);
        for y in 0..5 {
            for x in 0..5 {
                assert!((out.get(x, y) - lcn_oracle(&p, x, y, 1, 1, 1e-4)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lcn_random_matches_oracle_with_distinct_radii() {
        let p = random_plane(33, 37, 9);
        let out = local_contrast_normalize(&p, 3, 5, 1e-4);
        for y in 0..37 {
            for x in 0..33 {
                assert!((out.get(x, y) - lcn_oracle(&p, x, y, 3, 5, 1e-4)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn gradient_constant_and_ramp() {
        let c = gradient_magnitude(&Plane::filled(40, 40, 0.5f64));
        assert!(c.data.iter().all(|&v| v == 0.0));
        let w = 40usize;
        let ramp = gradient_magnitude(&Plane::from_fn(w, 40, |x, _| x as f64 / w as f64));
        for y in 0..40 {
            for x in 1..w - 1 {
                assert!((ramp.get(x, y) - 1.0 / w as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradient_matches_pointwise_oracle() {
        let p = random_plane(8, 8, 21);
        let g = gradient_magnitude(&p);
        for y in 0..8 {
            for x in 0..8usize {
                let l = p.get(x.saturating_sub(1), y);
                let r = p.get((x + 1).min(7), y);
                let u = p.get(x, y.saturating_sub(1));
                let d = p.get(x, (y + 1).min(7));
                let expect = (((r - l) / 2.0).powi(2) + ((d - u) / 2.0).powi(2)).sqrt();
                assert!((g.get(x, y) - expect).abs() < 1e-14);
                assert!(g.get(x, y) >= 0.0);
            }
        }
    }

    #[test]
    fn gray_and_color_stacks() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gray: Vec<f32> = (0..48 * 40).map(|_| rng.random()).collect();
        let stack = build_cue_stack(&RawFrame::gray(48, 40, gray, 1), &CueConfig::default()).unwrap();
        assert_eq!(
            stack.kinds,
            [
                CueKind::Lcn { r_mu: 8, r_sigma: 8 },
                CueKind::Lcn { r_mu: 12, r_sigma: 12 },
                CueKind::Gradient
            ]
        );
        assert!(stack.planes.iter().all(|p| p.data.iter().all(|v| v.is_finite())));

        let rgb: Vec<f32> = (0..48 * 40 * 3).map(|_| rng.random()).collect();
        let frame = RawFrame::color(48, 40, rgb.clone(), 1);
        let stack = build_cue_stack(&frame, &CueConfig::default()).unwrap();
        assert_eq!(stack.kinds, [CueKind::Hue, CueKind::Value, CueKind::Gradient]);
        for (i, px) in rgb.chunks_exact(3).enumerate() {
            let v = px[0].max(px[1]).max(px[2]);
            assert_eq!(stack.planes[1].data[i], v);
            assert!((0.0..1.0).contains(&stack.planes[0].data[i]));
        }
        assert_eq!(stack.planes[2], gradient_magnitude(&stack.planes[1]));
    }

    #[test]
    fn hue_of_primaries() {
        assert_eq!(hue_value(1.0f64, 0.0, 0.0), (0.0, 1.0));
        assert!((hue_value(0.0f64, 1.0, 0.0).0 - 1.0 / 3.0).abs() < 1e-12);
        assert!((hue_value(0.0f64, 0.0, 1.0).0 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn black_frame_has_zero_gradient() {
        let stack =
            build_cue_stack(&RawFrame::gray(32, 32, vec![0.0f64; 1024], 1), &CueConfig::default())
                .unwrap();
        assert!(stack.planes[2].data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn small_or_invalid_frames_rejected() {
        let err = build_cue_stack(&RawFrame::gray(31, 40, vec![0.0f64; 31 * 40], 1), &CueConfig::default());
        assert!(matches!(err, Err(TrackError::FrameTooSmall { .. })));
        let err = build_cue_stack(&RawFrame::gray(32, 32, vec![1.5f64; 1024], 1), &CueConfig::default());
        assert!(matches!(err, Err(TrackError::InvalidFrame(_))));
    }

    fn stack_of(plane: Plane<f64>) -> CueStack<f64> {
        CueStack {
            planes: [plane.clone(), plane.clone(), plane],
            kinds: [CueKind::Gradient; NUM_CUES],
        }
    }

    #[test]
    fn constant_cue_gives_constant_patch() {
        let stack = stack_of(Plane::filled(64, 64, 0.3));
        let state = MotionState::from_bbox(&crate::geometry::BBox::new(10.0, 12.0, 32.0, 32.0)).unwrap();
        let p = extract_patch(&stack, &state, false).unwrap();
        assert!(p.data.iter().all(|&v| v == 5.0));
    }

    #[test]
    fn aligned_crop_copies_pixels() {
        let plane = random_plane(64, 64, 5);
        let stack = stack_of(plane.clone());
        let state = MotionState::from_bbox(&crate::geometry::BBox::new(7.0, 9.0, 32.0, 32.0)).unwrap();
        let p = extract_patch(&stack, &state, false).unwrap();
        let crop: Vec<f64> = (0..32).flat_map(|j| (0..32).map(move |i| (i, j))).map(|(i, j)| plane.get(7 + i, 9 + j)).collect();
        let lo = crop.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = crop.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (a, b) in p.plane(0).iter().zip(&crop) {
            assert!((a - (b - lo) / (hi - lo) * 10.0).abs() < 1e-9);
        }
    }

    // Reference bilinear resampler: explicit 4-neighbour weights, no shared helpers.
    fn bilinear_oracle(p: &Plane<f64>, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let mut acc = 0.0;
        for (dx, wx) in [(0.0, 1.0 - (x - x0)), (1.0, x - x0)] {
            for (dy, wy) in [(0.0, 1.0 - (y - y0)), (1.0, y - y0)] {
                let xi = ((x0 + dx) as isize).clamp(0, p.width as isize - 1) as usize;
                let yi = ((y0 + dy) as isize).clamp(0, p.height as isize - 1) as usize;
                acc += wx * wy * p.data[yi * p.width + xi];
            }
        }
        acc
    }

    #[test]
    fn downscale_matches_oracle() {
        let ramp = Plane::from_fn(64, 64, |x, y| (x as f64 + 0.5 * y as f64) / 96.0);
        let stack = stack_of(ramp.clone());
        let state = MotionState::from_bbox(&crate::geometry::BBox::new(0.0, 0.0, 64.0, 64.0)).unwrap();
        let p = extract_patch(&stack, &state, false).unwrap();
        let raw: Vec<f64> = (0..32)
            .flat_map(|j| (0..32).map(move |i| (i, j)))
            .map(|(i, j)| bilinear_oracle(&ramp, 2.0 * i as f64 + 0.5, 2.0 * j as f64 + 0.5))
            .collect();
        let lo = raw.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (a, b) in p.plane(0).iter().zip(&raw) {
            assert!((a - (b - lo) / (hi - lo) * 10.0).abs() < 1e-9);
        }
    }

    #[test]
    fn flip_is_involution() {
        let stack = stack_of(random_plane(64, 64, 8));
        let state = MotionState::from_bbox(&crate::geometry::BBox::new(3.3, 4.1, 40.0, 30.0)).unwrap();
        let p = extract_patch(&stack, &state, false).unwrap();
        let f = extract_patch(&stack, &state, true).unwrap();
        assert!(f.flipped);
        assert_eq!(f.plane(0)[0], p.plane(0)[31]);
        assert_eq!(f.flipped(), p);
        assert_eq!(p.flipped().flipped(), p);
    }

    #[test]
    fn outside_box_is_error_partial_is_replicated() {
        let stack = stack_of(random_plane(64, 64, 2));
        let far = MotionState::from_bbox(&crate::geometry::BBox::new(100.0, 0.0, 32.0, 32.0)).unwrap();
        assert!(matches!(extract_patch(&stack, &far, false), Err(TrackError::BoxOutsideFrame { .. })));
        let edge = MotionState::from_bbox(&crate::geometry::BBox::new(50.0, -10.0, 32.0, 32.0)).unwrap();
        let p = extract_patch(&stack, &edge, false).unwrap();
        assert!(p.data.iter().all(|v| (0.0..=10.0).contains(v)));
    }

    proptest::proptest! {
        #[test]
        fn patch_values_in_range(seed in 0u64..1000, x in -20.0f64..60.0, y in -20.0f64..60.0,
                                 h in 8.0f64..90.0, aspect in 0.3f64..3.0, flip: bool) {
            let stack = stack_of(random_plane(64, 64, seed));
            let state = MotionState { cx: x, cy: y, scale: h / 32.0, aspect };
            if let Ok(p) = extract_patch(&stack, &state, flip) {
                proptest::prop_assert_eq!(p.data.len(), NUM_CUES * PATCH_AREA);
                proptest::prop_assert!(p.data.iter().all(|v| (0.0..=10.0).contains(v)));
            }
        }
    }
}
