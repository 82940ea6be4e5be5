//! Axis-aligned boxes and the three-degree-of-freedom motion state.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TrackError};
use crate::scalar::Scalar;

/// Side length of the network input patch; the motion scale is `h / PATCH_SIDE`.
pub const PATCH_SIDE: usize = 32;

/// Axis-aligned box given by its top-left corner, width and height in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox<T> {
    pub x: T,
    pub y: T,
    pub w: T,
    pub h: T,
}

impl<T: Scalar> BBox<T> {
    pub fn new(x: T, y: T, w: T, h: T) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> T {
        self.w * self.h
    }

    pub fn right(&self) -> T {
        self.x + self.w
    }

    pub fn bottom(&self) -> T {
        self.y + self.h
    }

    pub fn center(&self) -> (T, T) {
        let half = T::lit(0.5);
        (self.x + half * self.w, self.y + half * self.h)
    }

    pub fn is_valid(&self) -> bool {
        [self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite())
            && self.w > T::zero()
            && self.h > T::zero()
    }

    /// Area of the intersection with `other` (zero when disjoint).
    pub fn intersection_area(&self, other: &Self) -> T {
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if iw <= T::zero() || ih <= T::zero() {
            T::zero()
        } else {
            iw * ih
        }
    }

    /// Clip to `[0, width] x [0, height]`. Returns `None` when nothing is left.
    pub fn clip_to(&self, width: usize, height: usize) -> Option<Self> {
        let (fw, fh) = (T::lit(width as f64), T::lit(height as f64));
        let x0 = self.x.max(T::zero());
        let y0 = self.y.max(T::zero());
        let x1 = self.right().min(fw);
        let y1 = self.bottom().min(fh);
        if x1 <= x0 || y1 <= y0 {
            None
        } else {
            Some(Self::new(x0, y0, x1 - x0, y1 - y0))
        }
    }

    pub fn cast<U: Scalar>(&self) -> BBox<U> {
        BBox {
            x: U::lit(self.x.as_f64()),
            y: U::lit(self.y.as_f64()),
            w: U::lit(self.w.as_f64()),
            h: U::lit(self.h.as_f64()),
        }
    }
}

/// Object hypothesis: center, relative scale `s = h / 32`, and a fixed aspect ratio `w / h`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionState<T> {
    pub cx: T,
    pub cy: T,
    pub scale: T,
    pub aspect: T,
}

impl<T: Scalar> MotionState<T> {
    /// State whose box equals `bbox`; the aspect ratio is taken from it and then stays fixed.
    pub fn from_bbox(bbox: &BBox<T>) -> Result<Self> {
        if !bbox.is_valid() {
            return Err(TrackError::DegenerateBox(format!("{bbox:?}")));
        }
        let (cx, cy) = bbox.center();
        Ok(Self {
            cx,
            cy,
            scale: bbox.h / T::lit(PATCH_SIDE as f64),
            aspect: bbox.w / bbox.h,
        })
    }

    pub fn height(&self) -> T {
        self.scale * T::lit(PATCH_SIDE as f64)
    }

    pub fn width(&self) -> T {
        self.aspect * self.height()
    }

    pub fn bbox(&self) -> BBox<T> {
        let (w, h) = (self.width(), self.height());
        let half = T::lit(0.5);
        BBox::new(self.cx - half * w, self.cy - half * h, w, h)
    }

    /// Same aspect, different center/scale.
    pub fn with(&self, cx: T, cy: T, scale: T) -> Self {
        Self { cx, cy, scale, aspect: self.aspect }
    }
}
