//! Matching cost and the supervised detection loss.
//!
//! The classification term uses sigmoid focal loss per class. For a
//! prediction with class probabilities `p_c`:
//!
//! * background target: `Σ_c neg(p_c)`
//! * target class `k`: `Σ_{c≠k} neg(p_c) + pos(p_k)`
//!
//! with `pos(p) = α(1-p)^γ · (-ln p)` and `neg(p) = (1-α)p^γ · (-ln(1-p))`.
//! The matching cost `pos(p_k) - neg(p_k)` is exactly the change in loss
//! when a prediction moves from background to class `k`, so for any
//! one-to-one assignment
//!
//! ```text
//! loss(σ) = loss(all background) + Σ_{σ_i = k} cost(i, k)
//! ```
//!
//! and the matching minimizing the summed cost also minimizes the loss.
//! [`DetectionLoss::matched_objective`] exposes the right-hand sum.

use ndarray::Array2;
use thiserror::Error;

use crate::geometry::{giou, BBox, GeometryError, ImageSize};
use crate::matching::{Assignment, AssignmentError, Label};

/// Probabilities are clamped to `[SCORE_EPS, 1 - SCORE_EPS]` before logs.
pub const SCORE_EPS: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("prediction {index} has {actual} class scores, expected {expected}")]
    ClassCountMismatch {
        index: usize,
        expected: usize,
        actual: usize,
    },
    #[error("ground truth {index} has class {class_id} but predictions only score {num_classes} classes")]
    ClassOutOfRange {
        index: usize,
        class_id: usize,
        num_classes: usize,
    },
    #[error("invalid cost weights: {0}")]
    InvalidWeights(&'static str),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Assignment(#[from] AssignmentError),
}

/// A candidate detection: a box plus per-class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub bbox: BBox,
    pub scores: Vec<f64>,
    pub objectness: Option<f64>,
}

impl Prediction {
    pub fn new(bbox: BBox, scores: Vec<f64>) -> Self {
        Self {
            bbox,
            scores,
            objectness: None,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.scores.len()
    }

    /// Highest class probability and its class.
    pub fn top_class(&self) -> Option<(usize, f64)> {
        self.scores
            .iter()
            .copied()
            .enumerate()
            .fold(None, |best, (c, s)| match best {
                Some((_, bs)) if bs >= s => best,
                _ => Some((c, s)),
            })
    }

    /// Collapses the class scores into a single foreground probability
    /// (the maximum), for class-agnostic first-stage losses.
    pub fn class_agnostic(&self) -> Self {
        let fg = self
            .objectness
            .or_else(|| self.top_class().map(|(_, s)| s))
            .unwrap_or(0.0);
        Self {
            bbox: self.bbox,
            scores: vec![fg],
            objectness: self.objectness,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    pub bbox: BBox,
    pub class_id: usize,
    pub is_crowd: bool,
}

impl GroundTruth {
    pub fn new(bbox: BBox, class_id: usize) -> Self {
        Self {
            bbox,
            class_id,
            is_crowd: false,
        }
    }

    pub fn crowd(bbox: BBox, class_id: usize) -> Self {
        Self {
            bbox,
            class_id,
            is_crowd: true,
        }
    }

    /// Same box with class 0, for class-agnostic losses.
    pub fn class_agnostic(&self) -> Self {
        Self { class_id: 0, ..*self }
    }
}

/// Weights of the three cost terms and the focal-loss shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights {
    pub w_cls: f64,
    pub w_l1: f64,
    pub w_giou: f64,
    pub focal_alpha: f64,
    pub focal_gamma: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            w_cls: 2.0,
            w_l1: 5.0,
            w_giou: 2.0,
            focal_alpha: 0.25,
            focal_gamma: 2.0,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<(), CostError> {
        let ws = [self.w_cls, self.w_l1, self.w_giou];
        if ws.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(CostError::InvalidWeights(
                "weights must be finite and non-negative",
            ));
        }
        if ws.iter().all(|w| *w == 0.0) {
            return Err(CostError::InvalidWeights("at least one weight must be positive"));
        }
        if !(self.focal_alpha > 0.0 && self.focal_alpha < 1.0) {
            return Err(CostError::InvalidWeights("focal alpha must lie in (0, 1)"));
        }
        if !(self.focal_gamma.is_finite() && self.focal_gamma >= 0.0) {
            return Err(CostError::InvalidWeights("focal gamma must be non-negative"));
        }
        Ok(())
    }

    fn clamp(p: f64) -> f64 {
        p.clamp(SCORE_EPS, 1.0 - SCORE_EPS)
    }

    /// Focal loss of `p` against a positive target.
    pub fn focal_pos(&self, p: f64) -> f64 {
        let p = Self::clamp(p);
        self.focal_alpha * (1.0 - p).powf(self.focal_gamma) * -p.ln()
    }

    /// Focal loss of `p` against a negative target.
    pub fn focal_neg(&self, p: f64) -> f64 {
        let p = Self::clamp(p);
        (1.0 - self.focal_alpha) * p.powf(self.focal_gamma) * -(1.0 - p).ln()
    }

    /// Unweighted classification matching cost at probability `p`.
    pub fn class_cost(&self, p: f64) -> f64 {
        self.focal_pos(p) - self.focal_neg(p)
    }
}

/// L1 distance between two boxes in normalized `(cx, cy, w, h)` form.
pub fn normalized_l1(a: &BBox, b: &BBox, image: ImageSize) -> f64 {
    let x = a.to_normalized_cxcywh(image);
    let y = b.to_normalized_cxcywh(image);
    x.iter().zip(&y).map(|(p, q)| (p - q).abs()).sum()
}

fn check_classes(preds: &[Prediction], gts: &[GroundTruth]) -> Result<(), CostError> {
    let Some(first) = preds.first() else {
        return Ok(());
    };
    let c = first.num_classes();
    for (index, p) in preds.iter().enumerate() {
        if p.num_classes() != c || c == 0 {
            return Err(CostError::ClassCountMismatch {
                index,
                expected: c.max(1),
                actual: p.num_classes(),
            });
        }
    }
    for (index, g) in gts.iter().enumerate() {
        if g.class_id >= c {
            return Err(CostError::ClassOutOfRange {
                index,
                class_id: g.class_id,
                num_classes: c,
            });
        }
    }
    Ok(())
}

fn pair_terms(
    pred: &Prediction,
    gt: &GroundTruth,
    image: ImageSize,
    w: &CostWeights,
) -> Result<[f64; 3], CostError> {
    let cls = w.class_cost(pred.scores[gt.class_id]);
    let l1 = normalized_l1(&pred.bbox, &gt.bbox, image);
    let g = 1.0 - giou(&pred.bbox, &gt.bbox)?;
    Ok([w.w_cls * cls, w.w_l1 * l1, w.w_giou * g])
}

/// `M × K` matrix of matching costs between predictions and ground truths.
pub fn build_cost_matrix(
    preds: &[Prediction],
    gts: &[GroundTruth],
    image: ImageSize,
    w: &CostWeights,
) -> Result<Array2<f64>, CostError> {
    w.validate()?;
    check_classes(preds, gts)?;
    let mut out = Array2::zeros((preds.len(), gts.len()));
    for (i, p) in preds.iter().enumerate() {
        for (k, g) in gts.iter().enumerate() {
            let [a, b, c] = pair_terms(p, g, image, w)?;
            out[[i, k]] = a + b + c;
        }
    }
    Ok(out)
}

/// Weighted loss components of one image under an assignment.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DetectionLoss {
    /// Focal classification loss over all non-ignored predictions.
    pub cls: f64,
    /// Normalized L1 box loss over positives.
    pub l1: f64,
    /// `1 - GIoU` box loss over positives.
    pub giou: f64,
    /// Classification loss if every non-ignored prediction were background.
    pub background_cls: f64,
}

impl DetectionLoss {
    pub fn total(&self) -> f64 {
        self.cls + self.l1 + self.giou
    }

    /// Loss in excess of the all-background baseline; equals the summed
    /// matching cost of the assignment.
    pub fn matched_objective(&self) -> f64 {
        (self.cls - self.background_cls) + self.l1 + self.giou
    }
}

/// Evaluates the detection loss for a fixed assignment.
///
/// Background predictions pay only classification loss; positives pay
/// classification and box loss; ignored predictions pay nothing.
pub fn detection_loss(
    preds: &[Prediction],
    gts: &[GroundTruth],
    assignment: &Assignment,
    image: ImageSize,
    w: &CostWeights,
) -> Result<DetectionLoss, CostError> {
    w.validate()?;
    check_classes(preds, gts)?;
    assignment.validate(preds.len(), gts.len())?;
    let mut loss = DetectionLoss::default();
    for (pred, label) in preds.iter().zip(assignment.labels()) {
        if *label == Label::Ignore {
            continue;
        }
        let background: f64 = pred.scores.iter().map(|&p| w.focal_neg(p)).sum();
        loss.background_cls += w.w_cls * background;
        match label {
            Label::Object(k) => {
                let gt = &gts[*k];
                let [cls, l1, g] = pair_terms(pred, gt, image, w)?;
                loss.cls += w.w_cls * background + cls;
                loss.l1 += l1;
                loss.giou += g;
            }
            _ => loss.cls += w.w_cls * background,
        }
    }
    Ok(loss)
}
