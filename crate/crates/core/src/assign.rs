//! IoU-threshold label assignment.
//!
//! Each box is compared against every (non-crowd) ground truth and labelled
//! with its highest-overlap ground truth `k̂` when
//!
//! * `IoU(box, k̂) ≥ τ_k̂`, or
//! * the box is the closest box to `k̂`: no other box overlaps `k̂` more.
//!
//! Without balancing `τ_k = τ` for every ground truth. With a per-object cap
//! `n`, `τ_k = max(τ, μ_k)` where `μ_k` is the `n`-th highest IoU any box
//! reaches against `k`. Ties at `μ_k` go to the lower box index so a ground
//! truth never receives more than `n` positives.
//!
//! Several boxes may share one ground truth. The closest-box rule is what
//! keeps a ground truth with no box above threshold from going unmatched;
//! it only fires for a strictly positive overlap and, among boxes tied for
//! the maximum, only for the lowest index.

use std::cmp::Ordering;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cost::GroundTruth;
use crate::geometry::{iou, BBox};
use crate::matching::{Assignment, Label};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssignError {
    #[error("IoU threshold must lie in (0, 1], got {0}")]
    Threshold(f64),
    #[error("balance limit must be at least 1")]
    ZeroBalance,
    #[error("foreground ratio must lie in (0, 1], got {0}")]
    FgRatio(f64),
}

/// Maximum number of positives per ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BalanceLimit {
    Unbounded,
    AtMost(usize),
}

impl BalanceLimit {
    fn cap(self) -> Option<usize> {
        match self {
            BalanceLimit::Unbounded => None,
            BalanceLimit::AtMost(n) => Some(n),
        }
    }
}

impl std::fmt::Display for BalanceLimit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BalanceLimit::Unbounded => f.write_str("inf"),
            BalanceLimit::AtMost(n) => write!(f, "{n}"),
        }
    }
}

/// Whether the object cap is applied before or after foreground sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StageOrder {
    #[default]
    BalanceThenSample,
    SampleThenBalance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssignConfig {
    pub tau: f64,
    pub balance_k: BalanceLimit,
    /// Cap on the fraction of positive boxes; `None` disables sampling.
    pub fg_ratio: Option<f64>,
    pub fallback_enabled: bool,
    pub seed: u64,
    pub order: StageOrder,
}

impl AssignConfig {
    /// First-stage defaults: `τ = 0.7`, `γ = 0.5`, no balancing.
    pub fn first_stage() -> Self {
        Self {
            tau: 0.7,
            balance_k: BalanceLimit::Unbounded,
            fg_ratio: Some(0.5),
            fallback_enabled: true,
            seed: 0,
            order: StageOrder::BalanceThenSample,
        }
    }

    /// Second-stage defaults: `τ = 0.6`, `γ = 0.25`, at most 4 positives
    /// per object.
    pub fn second_stage() -> Self {
        Self {
            tau: 0.6,
            balance_k: BalanceLimit::AtMost(4),
            fg_ratio: Some(0.25),
            fallback_enabled: true,
            seed: 0,
            order: StageOrder::BalanceThenSample,
        }
    }

    /// Plain thresholding: no cap, no sampling.
    pub fn naive(tau: f64) -> Self {
        Self {
            tau,
            balance_k: BalanceLimit::Unbounded,
            fg_ratio: None,
            fallback_enabled: true,
            seed: 0,
            order: StageOrder::BalanceThenSample,
        }
    }

    pub fn validate(&self) -> Result<(), AssignError> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(AssignError::Threshold(self.tau));
        }
        if self.balance_k == BalanceLimit::AtMost(0) {
            return Err(AssignError::ZeroBalance);
        }
        if let Some(g) = self.fg_ratio {
            if !(g > 0.0 && g <= 1.0) {
                return Err(AssignError::FgRatio(g));
            }
        }
        Ok(())
    }
}

/// IoU of every box against every ground truth, row-major by box.
struct Overlaps {
    values: Vec<f64>,
    num_gts: usize,
}

impl Overlaps {
    fn new(boxes: &[BBox], gts: &[BBox]) -> Self {
        let mut values = Vec::with_capacity(boxes.len() * gts.len());
        for b in boxes {
            values.extend(gts.iter().map(|g| iou(b, g)));
        }
        Self {
            values,
            num_gts: gts.len(),
        }
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.num_gts..(i + 1) * self.num_gts]
    }

    #[inline]
    fn get(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.num_gts + k]
    }

    fn num_boxes(&self) -> usize {
        self.values.len().checked_div(self.num_gts).unwrap_or(0)
    }
}

/// Rank order used for balancing: higher IoU first, then lower index.
#[inline]
fn rank_cmp(a: (f64, usize), b: (f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// Labels each box per the threshold rule, applying the per-object cap in
/// `cfg.balance_k`. Sampling is not applied; see [`assign_stage`].
pub fn balanced_iou_assign(boxes: &[BBox], gts: &[GroundTruth], cfg: &AssignConfig) -> Assignment {
    let targets: Vec<usize> = (0..gts.len()).filter(|&k| !gts[k].is_crowd).collect();
    let crowd: Vec<BBox> = gts.iter().filter(|g| g.is_crowd).map(|g| g.bbox).collect();
    let target_boxes: Vec<BBox> = targets.iter().map(|&k| gts[k].bbox).collect();
    let overlaps = Overlaps::new(boxes, &target_boxes);
    let t = targets.len();

    // argmax ground truth per box, lowest index on ties
    let best: Vec<Option<(usize, f64)>> = (0..boxes.len())
        .map(|i| {
            overlaps
                .row(i)
                .iter()
                .copied()
                .enumerate()
                .fold(None, |acc, (k, v)| match acc {
                    Some((_, bv)) if bv >= v => acc,
                    _ => Some((k, v)),
                })
        })
        .collect();

    // closest box per ground truth
    let closest: Vec<Option<usize>> = (0..t)
        .map(|k| {
            let mut arg: Option<(usize, f64)> = None;
            for i in 0..overlaps.num_boxes() {
                let v = overlaps.get(i, k);
                if arg.is_none_or(|(_, bv)| v > bv) {
                    arg = Some((i, v));
                }
            }
            arg.filter(|&(_, v)| v > 0.0).map(|(i, _)| i)
        })
        .collect();

    // n-th ranked (IoU, index) per ground truth; boxes ranked at or above it
    // pass the dynamic threshold
    let cutoff: Vec<Option<(f64, usize)>> = match cfg.balance_k.cap() {
        Some(n) if n < boxes.len() => {
            let mut scratch: Vec<(f64, usize)> = Vec::with_capacity(boxes.len());
            (0..t)
                .map(|k| {
                    scratch.clear();
                    scratch.extend((0..boxes.len()).map(|i| (overlaps.get(i, k), i)));
                    let (_, nth, _) = scratch.select_nth_unstable_by(n - 1, |a, b| rank_cmp(*a, *b));
                    Some(*nth)
                })
                .collect()
        }
        _ => vec![None; t],
    };

    let labels = (0..boxes.len())
        .map(|i| {
            if let Some((k, v)) = best[i] {
                let within_cap = cutoff[k].is_none_or(|c| rank_cmp((v, i), c) != Ordering::Greater);
                let above = v >= cfg.tau && within_cap;
                let fallback = cfg.fallback_enabled && closest[k] == Some(i);
                if above || fallback {
                    return Label::Object(targets[k]);
                }
            }
            if crowd.iter().any(|c| iou(&boxes[i], c) >= cfg.tau) {
                Label::Ignore
            } else {
                Label::Background
            }
        })
        .collect();
    Assignment::new(labels)
}

/// Threshold assignment without a per-object cap.
pub fn iou_assign(boxes: &[BBox], gts: &[GroundTruth], cfg: &AssignConfig) -> Assignment {
    let cfg = AssignConfig {
        balance_k: BalanceLimit::Unbounded,
        ..*cfg
    };
    balanced_iou_assign(boxes, gts, &cfg)
}

/// Keeps at most `⌊total · γ⌋` positives, chosen uniformly at random.
///
/// `total` is the number of queries the ratio refers to, normally
/// `assignment.len()`. Dropped positives become background; ignored labels
/// are left alone.
pub fn sample_foreground(assignment: &Assignment, total: usize, gamma: f64, seed: u64) -> Assignment {
    let cap = (total as f64 * gamma).floor() as usize;
    let positives: Vec<usize> = assignment.positives().map(|(i, _)| i).collect();
    if positives.len() <= cap {
        return assignment.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; positives.len()];
    for j in index::sample(&mut rng, positives.len(), cap) {
        keep[j] = true;
    }
    let mut out = assignment.clone();
    let labels = out.labels_mut();
    for (j, &i) in positives.iter().enumerate() {
        if !keep[j] {
            labels[i] = Label::Background;
        }
    }
    out
}

/// Drops positives beyond the `n` highest-overlap boxes of each ground truth.
fn cap_positives(assignment: &Assignment, boxes: &[BBox], gts: &[GroundTruth], n: usize) -> Assignment {
    let mut per_gt: Vec<Vec<(f64, usize)>> = vec![Vec::new(); gts.len()];
    for (i, k) in assignment.positives() {
        per_gt[k].push((iou(&boxes[i], &gts[k].bbox), i));
    }
    let mut out = assignment.clone();
    let labels = out.labels_mut();
    for list in &mut per_gt {
        list.sort_by(|a, b| rank_cmp(*a, *b));
        for &(_, i) in list.iter().skip(n) {
            labels[i] = Label::Background;
        }
    }
    out
}

/// Full stage assignment: thresholding, the per-object cap and foreground
/// sampling in the configured order.
pub fn assign_stage(
    boxes: &[BBox],
    gts: &[GroundTruth],
    cfg: &AssignConfig,
) -> Result<Assignment, AssignError> {
    cfg.validate()?;
    let sample = |a: Assignment| match cfg.fg_ratio {
        Some(g) => sample_foreground(&a, boxes.len(), g, cfg.seed),
        None => a,
    };
    Ok(match cfg.order {
        StageOrder::BalanceThenSample => sample(balanced_iou_assign(boxes, gts, cfg)),
        StageOrder::SampleThenBalance => {
            let sampled = sample(iou_assign(boxes, gts, cfg));
            match cfg.balance_k.cap() {
                Some(n) => cap_positives(&sampled, boxes, gts, n),
                None => sampled,
            }
        }
    })
}
