//! Reference implementations and scene generators shared by the
//! integration and acceptance tests. Everything here is written for
//! clarity, not speed, and deliberately avoids the library's own helpers
//! except for the plain `iou` primitive.
#![allow(dead_code)]

use assignkit::cost::{GroundTruth, Prediction};
use assignkit::geometry::{iou, BBox, ImageSize};
use assignkit::nms::ScoredBox;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_box(rng: &mut ChaCha8Rng, extent: f64, max_side: f64) -> BBox {
    let w = rng.random_range(1.0..max_side);
    let h = rng.random_range(1.0..max_side);
    let x = rng.random_range(0.0..extent);
    let y = rng.random_range(0.0..extent);
    BBox::new(x, y, x + w, y + h).unwrap()
}

/// Box on an integer lattice, so exact IoU ties actually occur.
pub fn lattice_box(rng: &mut ChaCha8Rng, extent: i32, max_side: i32) -> BBox {
    let x = rng.random_range(0..extent) as f64;
    let y = rng.random_range(0..extent) as f64;
    let w = rng.random_range(1..=max_side) as f64;
    let h = rng.random_range(1..=max_side) as f64;
    BBox::new(x, y, x + w, y + h).unwrap()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, m: usize, k: usize, integer: bool) -> Array2<f64> {
    Array2::from_shape_fn((m, k), |_| {
        if integer {
            rng.random_range(0..10) as f64
        } else {
            rng.random_range(-1.0..1.0)
        }
    })
}

// ---------------------------------------------------------------- matching

/// Minimum over all injective gt -> prediction maps, summing in gt order.
pub fn brute_force_min_cost(cost: &Array2<f64>) -> f64 {
    let (m, k) = cost.dim();
    fn go(cost: &Array2<f64>, k: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        let gt = used.iter().filter(|&&u| u).count();
        if gt == k {
            *best = best.min(acc);
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                go(cost, k, used, acc + cost[[i, gt]], best);
                used[i] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(cost, k, &mut vec![false; m], 0.0, &mut best);
    best
}

/// Minimum cost when each gt takes exactly `b` distinct predictions.
/// Predictions of one gt are chosen as an increasing index set.
pub fn brute_force_b_matching(cost: &Array2<f64>, b: usize) -> f64 {
    let (m, k) = cost.dim();
    #[allow(clippy::too_many_arguments)]
    fn go(
        cost: &Array2<f64>,
        b: usize,
        k: usize,
        gt: usize,
        taken: usize,
        start: usize,
        used: &mut Vec<bool>,
        acc: f64,
        best: &mut f64,
    ) {
        if gt == k {
            *best = best.min(acc);
            return;
        }
        if taken == b {
            go(cost, b, k, gt + 1, 0, 0, used, acc, best);
            return;
        }
        for i in start..used.len() {
            if !used[i] {
                used[i] = true;
                go(cost, b, k, gt, taken + 1, i + 1, used, acc + cost[[i, gt]], best);
                used[i] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(cost, b, k, 0, 0, 0, &mut vec![false; m], 0.0, &mut best);
    best
}

// ------------------------------------------------------------------ assign

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefLabel {
    Background,
    Ignore,
    Object(usize),
}

/// Direct transcription of the threshold rule with the closest-box
/// fallback and the optional per-object cap. Every ground truth's overlaps
/// are fully sorted, the n-th entry is the dynamic threshold, and a box
/// passes when it sorts at or before that entry.
pub fn reference_assign(
    boxes: &[BBox],
    gts: &[GroundTruth],
    tau: f64,
    cap: Option<usize>,
    fallback: bool,
) -> Vec<RefLabel> {
    let targets: Vec<usize> = (0..gts.len()).filter(|&k| !gts[k].is_crowd).collect();
    let ov: Vec<Vec<f64>> = boxes
        .iter()
        .map(|b| targets.iter().map(|&k| iou(b, &gts[k].bbox)).collect())
        .collect();

    // position[t][i]: place of box i when all boxes are sorted by overlap
    // with target t (descending, then by index)
    let position: Vec<Vec<usize>> = (0..targets.len())
        .map(|t| {
            let mut ranked: Vec<(f64, usize)> = (0..boxes.len()).map(|j| (ov[j][t], j)).collect();
            ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            let mut pos = vec![0; boxes.len()];
            for (p, &(_, j)) in ranked.iter().enumerate() {
                pos[j] = p;
            }
            pos
        })
        .collect();

    let mut labels = Vec::with_capacity(boxes.len());
    for i in 0..boxes.len() {
        let mut label = RefLabel::Background;
        if !targets.is_empty() {
            let mut kh = 0;
            for t in 1..targets.len() {
                if ov[i][t] > ov[i][kh] {
                    kh = t;
                }
            }
            let within_cap = cap.is_none_or(|n| position[kh][i] < n);
            let closest = position[kh][i] == 0 && ov[i][kh] > 0.0;
            if (ov[i][kh] >= tau && within_cap) || (fallback && closest) {
                label = RefLabel::Object(targets[kh]);
            }
        }
        if label == RefLabel::Background && gts.iter().any(|g| g.is_crowd && iou(&boxes[i], &g.bbox) >= tau) {
            label = RefLabel::Ignore;
        }
        labels.push(label);
    }
    labels
}

pub fn as_ref_labels(a: &assignkit::matching::Assignment) -> Vec<RefLabel> {
    use assignkit::matching::Label;
    a.labels()
        .iter()
        .map(|l| match l {
            Label::Background => RefLabel::Background,
            Label::Ignore => RefLabel::Ignore,
            Label::Object(k) => RefLabel::Object(*k),
        })
        .collect()
}

/// A scene of up to `max_gts` objects with `num_boxes` boxes, a share of
/// which are perturbed copies of the objects so that every branch of the
/// rule is exercised. Occasionally marks an object as crowd.
pub fn random_assign_scene(
    rng: &mut ChaCha8Rng,
    max_gts: usize,
    num_boxes: usize,
    lattice: bool,
) -> (Vec<BBox>, Vec<GroundTruth>) {
    let k = rng.random_range(1..=max_gts);
    let gts: Vec<GroundTruth> = (0..k)
        .map(|_| {
            let b = if lattice {
                lattice_box(rng, 100, 40)
            } else {
                random_box(rng, 400.0, 150.0)
            };
            let mut g = GroundTruth::new(b, 0);
            g.is_crowd = rng.random_bool(0.05);
            g
        })
        .collect();
    let boxes = (0..num_boxes)
        .map(|_| {
            if rng.random_bool(0.5) {
                let g = &gts[rng.random_range(0..k)].bbox;
                if lattice {
                    let d = |rng: &mut ChaCha8Rng| rng.random_range(-3..=3) as f64;
                    let (x1, y1) = (g.x1() + d(rng), g.y1() + d(rng));
                    let (w, h) = ((g.width() + d(rng)).max(1.0), (g.height() + d(rng)).max(1.0));
                    BBox::new(x1, y1, x1 + w, y1 + h).unwrap()
                } else {
                    let s = 0.15 * g.width().max(g.height());
                    let d = |rng: &mut ChaCha8Rng| rng.random_range(-s..=s);
                    let (x1, y1) = (g.x1() + d(rng), g.y1() + d(rng));
                    let (w, h) = ((g.width() + d(rng)).max(0.5), (g.height() + d(rng)).max(0.5));
                    BBox::new(x1, y1, x1 + w, y1 + h).unwrap()
                }
            } else if lattice {
                lattice_box(rng, 100, 40)
            } else {
                random_box(rng, 400.0, 150.0)
            }
        })
        .collect();
    (boxes, gts)
}

// --------------------------------------------------------------------- nms

/// Textbook greedy suppression: sort, then mark everything that overlaps a
/// kept box too much.
pub fn reference_nms(dets: &[ScoredBox], thr: f64, class_aware: bool) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.partial_cmp(&dets[a].score).unwrap().then(a.cmp(&b)));
    let mut removed = vec![false; dets.len()];
    let mut keep = Vec::new();
    for (p, &i) in order.iter().enumerate() {
        if removed[i] {
            continue;
        }
        keep.push(i);
        for &j in &order[p + 1..] {
            if class_aware && dets[j].class_id != dets[i].class_id {
                continue;
            }
            if iou(&dets[i].bbox, &dets[j].bbox) > thr {
                removed[j] = true;
            }
        }
    }
    keep
}

pub fn random_dets(rng: &mut ChaCha8Rng, n: usize, classes: usize) -> Vec<ScoredBox> {
    let mut dets: Vec<ScoredBox> = Vec::with_capacity(n);
    for _ in 0..n {
        let b = if !dets.is_empty() && rng.random_bool(0.4) {
            let src = dets[rng.random_range(0..dets.len())].bbox;
            let d = |rng: &mut ChaCha8Rng| rng.random_range(-4.0..4.0);
            let (x1, y1) = (src.x1() + d(rng), src.y1() + d(rng));
            BBox::new(x1, y1, x1 + src.width().max(1.0), y1 + src.height().max(1.0)).unwrap()
        } else {
            random_box(rng, 300.0, 80.0)
        };
        // coarse scores so ties happen
        let score = (rng.random_range(0..50) as f64) / 50.0;
        dets.push(ScoredBox::new(b, score, rng.random_range(0..classes)));
    }
    dets
}

// -------------------------------------------------------------------- cost

pub const EPS: f64 = 1e-8;

fn clamp(p: f64) -> f64 {
    p.clamp(EPS, 1.0 - EPS)
}

pub fn oracle_focal_pos(p: f64, alpha: f64, gamma: f64) -> f64 {
    let p = clamp(p);
    -alpha * (1.0 - p).powf(gamma) * p.ln()
}

pub fn oracle_focal_neg(p: f64, alpha: f64, gamma: f64) -> f64 {
    let p = clamp(p);
    -(1.0 - alpha) * p.powf(gamma) * (1.0 - p).ln()
}

pub fn oracle_giou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x2().min(b.x2()) - a.x1().max(b.x1())).max(0.0);
    let ih = (a.y2().min(b.y2()) - a.y1().max(b.y1())).max(0.0);
    let inter = iw * ih;
    let union = a.width() * a.height() + b.width() * b.height() - inter;
    let hull = (a.x2().max(b.x2()) - a.x1().min(b.x1())) * (a.y2().max(b.y2()) - a.y1().min(b.y1()));
    inter / union - (hull - union) / hull
}

pub fn oracle_l1(a: &BBox, b: &BBox, img: ImageSize) -> f64 {
    let f = |x: &BBox| {
        [
            (x.x1() + x.x2()) / 2.0 / img.width,
            (x.y1() + x.y2()) / 2.0 / img.height,
            (x.x2() - x.x1()) / img.width,
            (x.y2() - x.y1()) / img.height,
        ]
    };
    let (p, q) = (f(a), f(b));
    (0..4).map(|i| (p[i] - q[i]).abs()).sum()
}

pub struct Weights {
    pub cls: f64,
    pub l1: f64,
    pub giou: f64,
    pub alpha: f64,
    pub gamma: f64,
}

pub fn oracle_cost(p: &Prediction, g: &GroundTruth, img: ImageSize, w: &Weights) -> f64 {
    let s = p.scores[g.class_id];
    let cls = oracle_focal_pos(s, w.alpha, w.gamma) - oracle_focal_neg(s, w.alpha, w.gamma);
    w.cls * cls + w.l1 * oracle_l1(&p.bbox, &g.bbox, img) + w.giou * (1.0 - oracle_giou(&p.bbox, &g.bbox))
}

pub fn random_predictions(rng: &mut ChaCha8Rng, n: usize, classes: usize, extent: f64) -> Vec<Prediction> {
    (0..n)
        .map(|_| {
            let b = random_box(rng, extent * 0.8, extent * 0.4);
            let scores = (0..classes).map(|_| rng.random_range(0.0..1.0)).collect();
            Prediction::new(b, scores)
        })
        .collect()
}

pub fn random_gts(rng: &mut ChaCha8Rng, n: usize, classes: usize, extent: f64) -> Vec<GroundTruth> {
    (0..n)
        .map(|_| {
            GroundTruth::new(
                random_box(rng, extent * 0.8, extent * 0.4),
                rng.random_range(0..classes),
            )
        })
        .collect()
}
