//! Greedy non-maximum suppression and top-k prefiltering.

use crate::geometry::{iou, BBox};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredBox {
    pub bbox: BBox,
    pub score: f64,
    pub class_id: usize,
    pub level: Option<u32>,
}

impl ScoredBox {
    pub fn new(bbox: BBox, score: f64, class_id: usize) -> Self {
        Self {
            bbox,
            score,
            class_id,
            level: None,
        }
    }
}

/// Descending score, then ascending input index.
fn score_order(dets: &[ScoredBox]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
    order
}

/// Uniform bucket grid over kept boxes. A kept box is registered in every
/// cell it touches, so any box that intersects it shares at least one cell.
struct KeptIndex {
    x0: f64,
    y0: f64,
    cell: f64,
    cols: usize,
    rows: usize,
    cells: Vec<Vec<u32>>,
}

impl KeptIndex {
    const MAX_CELLS_PER_AXIS: usize = 128;

    fn new(dets: &[ScoredBox]) -> Self {
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        let mut extent = 0.0;
        for d in dets {
            x0 = x0.min(d.bbox.x1());
            y0 = y0.min(d.bbox.y1());
            x1 = x1.max(d.bbox.x2());
            y1 = y1.max(d.bbox.y2());
            extent += d.bbox.width().max(d.bbox.height());
        }
        let span = (x1 - x0).max(y1 - y0).max(f64::MIN_POSITIVE);
        let mean = extent / dets.len().max(1) as f64;
        let cell = mean
            .max(span / Self::MAX_CELLS_PER_AXIS as f64)
            .max(f64::MIN_POSITIVE);
        let cols = (((x1 - x0) / cell).floor() as usize + 1).min(Self::MAX_CELLS_PER_AXIS + 1);
        let rows = (((y1 - y0) / cell).floor() as usize + 1).min(Self::MAX_CELLS_PER_AXIS + 1);
        Self {
            x0,
            y0,
            cell,
            cols,
            rows,
            cells: vec![Vec::new(); cols * rows],
        }
    }

    fn span(&self, b: &BBox) -> (usize, usize, usize, usize) {
        let cx = |v: f64| (((v - self.x0) / self.cell).floor().max(0.0) as usize).min(self.cols - 1);
        let cy = |v: f64| (((v - self.y0) / self.cell).floor().max(0.0) as usize).min(self.rows - 1);
        (cx(b.x1()), cy(b.y1()), cx(b.x2()), cy(b.y2()))
    }
}

/// Greedy NMS. Returns kept indices in descending score order.
///
/// A box is suppressed when its IoU with an already kept box is strictly
/// greater than `iou_threshold`. With `class_aware`, only boxes of the same
/// class suppress each other.
pub fn nms(dets: &[ScoredBox], iou_threshold: f64, class_aware: bool) -> Vec<usize> {
    if dets.is_empty() {
        return Vec::new();
    }
    let order = score_order(dets);
    let mut index = KeptIndex::new(dets);
    let mut kept: Vec<usize> = Vec::new();
    // last candidate that visited each kept box, to skip repeats across cells
    let mut stamp: Vec<usize> = Vec::new();

    for (step, &i) in order.iter().enumerate() {
        let cand = &dets[i];
        let (cx0, cy0, cx1, cy1) = index.span(&cand.bbox);
        let mut suppressed = false;
        'cells: for row in cy0..=cy1 {
            for col in cx0..=cx1 {
                for &slot in &index.cells[row * index.cols + col] {
                    let slot = slot as usize;
                    if stamp[slot] == step + 1 {
                        continue;
                    }
                    stamp[slot] = step + 1;
                    let other = &dets[kept[slot]];
                    if class_aware && other.class_id != cand.class_id {
                        continue;
                    }
                    if iou(&cand.bbox, &other.bbox) > iou_threshold {
                        suppressed = true;
                        break 'cells;
                    }
                }
            }
        }
        if suppressed {
            continue;
        }
        let slot = kept.len() as u32;
        kept.push(i);
        stamp.push(0);
        for row in cy0..=cy1 {
            for col in cx0..=cx1 {
                index.cells[row * index.cols + col].push(slot);
            }
        }
    }
    kept
}

/// Keeps the `k` highest-scoring boxes, either overall or per level.
///
/// The result is sorted by descending score (ties by input order). With
/// `per_level`, boxes without a level form their own group.
pub fn topk_prefilter(dets: &[ScoredBox], k: usize, per_level: bool) -> Vec<ScoredBox> {
    let order = score_order(dets);
    let selected: Vec<usize> = if per_level {
        let mut taken: std::collections::HashMap<Option<u32>, usize> = Default::default();
        order
            .into_iter()
            .filter(|&i| {
                let n = taken.entry(dets[i].level).or_insert(0);
                *n += 1;
                *n <= k
            })
            .collect()
    } else {
        order.into_iter().take(k).collect()
    };
    selected.into_iter().map(|i| dets[i]).collect()
}
