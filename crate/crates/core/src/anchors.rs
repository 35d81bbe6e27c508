//! Fixed multi-scale initial boxes on feature grids.
//!
//! Every grid cell of every level carries one box whose size depends only on
//! the level and the image size: `w = 0.1 · 2^(-level) · W`,
//! `h = 0.1 · 2^(-level) · H`. Level 0 is the coarsest grid, so the largest
//! boxes sit on the fewest locations.

use thiserror::Error;

use crate::geometry::{BBox, ImageSize};

/// Relative size of a level-0 initial box with respect to the image.
pub const BASE_BOX_FRACTION: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnchorError {
    #[error("image size must be positive and finite, got {0}×{1}")]
    InvalidImage(f64, f64),
    #[error("stride must be positive")]
    ZeroStride,
    #[error("level {0} appears more than once")]
    DuplicateLevel(u32),
    #[error("stride {0} appears more than once")]
    DuplicateStride(u32),
    #[error("at least one level is required")]
    NoLevels,
}

/// One feature level: its index in the size formula and its grid stride.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Level {
    pub index: u32,
    pub stride: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorGridSpec {
    image: ImageSize,
    levels: Vec<Level>,
}

impl AnchorGridSpec {
    pub fn new(image: ImageSize, levels: Vec<Level>) -> Result<Self, AnchorError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(image.width) || !ok(image.height) {
            return Err(AnchorError::InvalidImage(image.width, image.height));
        }
        if levels.is_empty() {
            return Err(AnchorError::NoLevels);
        }
        for (i, l) in levels.iter().enumerate() {
            if l.stride == 0 {
                return Err(AnchorError::ZeroStride);
            }
            for other in &levels[..i] {
                if other.index == l.index {
                    return Err(AnchorError::DuplicateLevel(l.index));
                }
                if other.stride == l.stride {
                    return Err(AnchorError::DuplicateStride(l.stride));
                }
            }
        }
        Ok(Self { image, levels })
    }

    /// Levels 0..n paired with strides in the given order.
    ///
    /// `from_strides(image, &[64, 32, 16, 8])` gives the default
    /// four-level layout.
    pub fn from_strides(image: ImageSize, strides: &[u32]) -> Result<Self, AnchorError> {
        let levels = strides
            .iter()
            .enumerate()
            .map(|(i, &stride)| Level {
                index: i as u32,
                stride,
            })
            .collect();
        Self::new(image, levels)
    }

    /// Four levels, level 0 on stride 64 down to level 3 on stride 8.
    pub fn standard(image: ImageSize) -> Result<Self, AnchorError> {
        Self::from_strides(image, &DEFAULT_STRIDES)
    }

    /// Same as [`standard`](Self::standard) but with strides given finest
    /// first, which is how they are usually written on the command line.
    /// The coarsest stride always maps to level 0.
    pub fn from_strides_any_order(image: ImageSize, strides: &[u32]) -> Result<Self, AnchorError> {
        let mut sorted = strides.to_vec();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        Self::from_strides(image, &sorted)
    }

    pub fn image(&self) -> ImageSize {
        self.image
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    /// `(rows, cols)` of the grid at `stride`.
    pub fn grid_dims(&self, stride: u32) -> (usize, usize) {
        let s = f64::from(stride);
        (
            (self.image.height / s).ceil() as usize,
            (self.image.width / s).ceil() as usize,
        )
    }

    pub fn anchor_count(&self) -> usize {
        self.levels
            .iter()
            .map(|l| {
                let (r, c) = self.grid_dims(l.stride);
                r * c
            })
            .sum()
    }

    /// `(w, h)` of every box at `level`.
    pub fn box_size(&self, level: u32) -> (f64, f64) {
        let scale = BASE_BOX_FRACTION * 2f64.powi(-(level as i32));
        (scale * self.image.width, scale * self.image.height)
    }
}

/// Default strides, level 0 first.
pub const DEFAULT_STRIDES: [u32; 4] = [64, 32, 16, 8];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub bbox: BBox,
    pub level: u32,
    pub row: usize,
    pub col: usize,
    pub center: (f64, f64),
}

/// One anchor per grid cell per level, levels in spec order, cells
/// row-major. Boxes are not clipped to the image.
pub fn generate_initial_boxes(spec: &AnchorGridSpec) -> Vec<Anchor> {
    let mut out = Vec::with_capacity(spec.anchor_count());
    for level in spec.levels() {
        let (rows, cols) = spec.grid_dims(level.stride);
        let (w, h) = spec.box_size(level.index);
        let s = f64::from(level.stride);
        for row in 0..rows {
            let cy = (row as f64 + 0.5) * s;
            for col in 0..cols {
                let cx = (col as f64 + 0.5) * s;
                let bbox = BBox::from_center(cx, cy, w, h).expect("anchor sizes are positive and finite");
                out.push(Anchor {
                    bbox,
                    level: level.index,
                    row,
                    col,
                    center: (cx, cy),
                });
            }
        }
    }
    out
}
