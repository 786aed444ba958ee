//! Axis-aligned box arithmetic.
//!
//! Boxes use the top-left corner convention `[x, y, w, h]` with real-valued
//! coordinates. A [`BBox`] can only be built with finite coordinates and a
//! strictly positive width and height, so the overlap functions below never
//! have to deal with degenerate input.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "box [{x}, {y}, {w}, {h}] has non-finite coordinates"
            )));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "box [{x}, {y}, {w}, {h}] has non-positive width or height"
            )));
        }
        Ok(Self { x, y, w, h })
    }

    /// Builds a box from its corners `(x1, y1)` / `(x2, y2)`.
    pub fn from_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        Self::new(x1, y1, x2 - x1, y2 - y1)
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn width(&self) -> f64 {
        self.w
    }

    pub fn height(&self) -> f64 {
        self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let iw = overlap(self.x, self.w, other.x, other.w);
        let ih = overlap(self.y, self.h, other.y, other.h);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    /// Smallest box containing both `self` and `other`.
    pub fn hull(&self, other: &BBox) -> BBox {
        BBox {
            x: self.x.min(other.x),
            y: self.y.min(other.y),
            w: self.right().max(other.right()) - self.x.min(other.x),
            h: self.bottom().max(other.bottom()) - self.y.min(other.y),
        }
    }

    /// Clips the box to `[0, width] x [0, height]`. Returns `None` when
    /// nothing with positive area is left.
    pub fn clip_to(&self, width: f64, height: f64) -> Option<BBox> {
        let x1 = self.x.clamp(0.0, width);
        let y1 = self.y.clamp(0.0, height);
        let x2 = self.right().clamp(0.0, width);
        let y2 = self.bottom().clamp(0.0, height);
        BBox::from_corners(x1, y1, x2, y2).ok()
    }

    /// Translates the box so that it lies inside `[0, width] x [0, height]`,
    /// keeping its size. Dimensions larger than the frame are clipped.
    pub fn shift_into(&self, width: f64, height: f64) -> Option<BBox> {
        let w = self.w.min(width);
        let h = self.h.min(height);
        let x = self.x.clamp(0.0, width - w);
        let y = self.y.clamp(0.0, height - h);
        BBox::new(x, y, w, h).ok()
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

/// Length of the overlap of `[a, a + a_len]` and `[b, b + b_len]`. A nested
/// interval contributes its own length, so identical boxes overlap exactly.
fn overlap(a: f64, a_len: f64, b: f64, b_len: f64) -> f64 {
    let (a_end, b_end) = (a + a_len, b + b_len);
    if a >= b && a_end <= b_end {
        a_len
    } else if b >= a && b_end <= a_end {
        b_len
    } else {
        a_end.min(b_end) - a.max(b)
    }
}

/// Intersection over union. Touching boxes (zero-area overlap) give exactly 0.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Clustering distance `1 - iou(a, b)`.
pub fn box_distance(a: &BBox, b: &BBox) -> f64 {
    1.0 - iou(a, b)
}
