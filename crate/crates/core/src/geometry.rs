//! Axis-aligned boxes and overlap metrics.
//!
//! Boxes are stored in corner form `(x1, y1, x2, y2)` in absolute pixel
//! coordinates. COCO's `[x, y, w, h]` form is converted at the I/O boundary
//! (see [`crate::data`]).

use ndarray::Array2;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("box coordinates must be finite, got ({0}, {1}, {2}, {3})")]
    NonFinite(f64, f64, f64, f64),
    #[error("box has negative extent: ({0}, {1}, {2}, {3})")]
    NegativeExtent(f64, f64, f64, f64),
    #[error("GIoU is undefined for two zero-area boxes")]
    BothDegenerate,
}

/// Image dimensions in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageSize {
    pub width: f64,
    pub height: f64,
}

impl ImageSize {
    pub fn new(width: f64, height: f64) -> Self {
        Self { width, height }
    }
}

/// An axis-aligned rectangle in corner form.
///
/// Construction validates that all coordinates are finite and that
/// `x1 <= x2`, `y1 <= y2`. Zero-area boxes are allowed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, GeometryError> {
        if !(x1.is_finite() && y1.is_finite() && x2.is_finite() && y2.is_finite()) {
            return Err(GeometryError::NonFinite(x1, y1, x2, y2));
        }
        if x2 < x1 || y2 < y1 {
            return Err(GeometryError::NegativeExtent(x1, y1, x2, y2));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    /// Builds a box from COCO's `[x, y, w, h]`.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        Self::new(x, y, x + w, y + h)
    }

    /// Builds a box of size `w × h` centered at `(cx, cy)`.
    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        Self::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    }

    #[inline]
    pub fn x1(&self) -> f64 {
        self.x1
    }

    #[inline]
    pub fn y1(&self) -> f64 {
        self.y1
    }

    #[inline]
    pub fn x2(&self) -> f64 {
        self.x2
    }

    #[inline]
    pub fn y2(&self) -> f64 {
        self.y2
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    #[inline]
    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    #[inline]
    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    #[inline]
    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    /// `[x, y, w, h]` as used by COCO files.
    pub fn to_xywh(&self) -> [f64; 4] {
        [self.x1, self.y1, self.width(), self.height()]
    }

    /// Center form normalized by the image size: `[cx, cy, w, h]`.
    pub fn to_normalized_cxcywh(&self, image: ImageSize) -> [f64; 4] {
        let (cx, cy) = self.center();
        [
            cx / image.width,
            cy / image.height,
            self.width() / image.width,
            self.height() / image.height,
        ]
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Result<Self, GeometryError> {
        Self::new(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)
    }

    /// Clips the box to `[0, width] × [0, height]`.
    pub fn clip(&self, image: ImageSize) -> Self {
        let cx = |v: f64| v.clamp(0.0, image.width);
        let cy = |v: f64| v.clamp(0.0, image.height);
        Self {
            x1: cx(self.x1),
            y1: cy(self.y1),
            x2: cx(self.x2),
            y2: cy(self.y2),
        }
    }

    /// Area of the intersection with `other` (0 when disjoint).
    #[inline]
    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let h = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        w * h
    }

    /// Smallest box enclosing both.
    pub fn hull(&self, other: &BBox) -> BBox {
        BBox {
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
            x2: self.x2.max(other.x2),
            y2: self.y2.max(other.y2),
        }
    }
}

/// Intersection over union. Returns 0 when the union is empty.
#[inline]
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Generalized IoU: `iou - (hull - union) / hull`.
///
/// Fails only when both boxes have zero area.
pub fn giou(a: &BBox, b: &BBox) -> Result<f64, GeometryError> {
    if a.area() <= 0.0 && b.area() <= 0.0 {
        return Err(GeometryError::BothDegenerate);
    }
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    let hull = a.hull(b).area();
    Ok(inter / union - (hull - union) / hull)
}

/// `|a| × |b|` matrix of IoU values.
pub fn pairwise_iou(a: &[BBox], b: &[BBox]) -> Array2<f64> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| iou(&a[i], &b[j]))
}
