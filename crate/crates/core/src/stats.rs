//! Positive-sample statistics per ground truth and per object size.
//!
//! Objects are bucketed by pixel area with the usual COCO cut-offs:
//! small `< 32²`, medium `< 96²`, large otherwise. Reports over many scenes
//! pool raw counts, so bucket means are `total positives / total objects`
//! rather than averages of per-scene means.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::anchors::{generate_initial_boxes, AnchorGridSpec};
use crate::assign::{assign_stage, AssignConfig, BalanceLimit};
use crate::cost::{build_cost_matrix, CostWeights, GroundTruth, Prediction};
use crate::data::{derive_seed, synthesize_dense_proposals, synthesize_predictions, JitterSpec, Scene};
use crate::geometry::BBox;
use crate::matching::{solve_b_matching, Assignment, Label};
use crate::Error;

pub const SMALL_AREA: f64 = 32.0 * 32.0;
pub const MEDIUM_AREA: f64 = 96.0 * 96.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SizeBucket {
    Small,
    Medium,
    Large,
}

impl SizeBucket {
    pub const ALL: [SizeBucket; 3] = [SizeBucket::Small, SizeBucket::Medium, SizeBucket::Large];

    pub fn of(bbox: &BBox) -> Self {
        let a = bbox.area();
        if a < SMALL_AREA {
            SizeBucket::Small
        } else if a < MEDIUM_AREA {
            SizeBucket::Medium
        } else {
            SizeBucket::Large
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SizeBucket::Small => "small",
            SizeBucket::Medium => "medium",
            SizeBucket::Large => "large",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BucketStats {
    pub num_gts: usize,
    pub positives: usize,
    pub unmatched: usize,
}

impl BucketStats {
    pub fn mean(&self) -> f64 {
        if self.num_gts == 0 {
            0.0
        } else {
            self.positives as f64 / self.num_gts as f64
        }
    }

    fn add(&mut self, other: &BucketStats) {
        self.num_gts += other.num_gts;
        self.positives += other.positives;
        self.unmatched += other.unmatched;
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AssignReport {
    pub strategy: String,
    pub config: String,
    /// One entry per non-crowd ground truth, in scene then object order.
    pub per_gt_positive_counts: Vec<usize>,
    /// Indexed by `SizeBucket as usize`.
    pub buckets: [BucketStats; 3],
}

impl AssignReport {
    pub fn bucket(&self, b: SizeBucket) -> &BucketStats {
        &self.buckets[b as usize]
    }

    pub fn total_positives(&self) -> usize {
        self.per_gt_positive_counts.iter().sum()
    }

    pub fn max_per_gt(&self) -> usize {
        self.per_gt_positive_counts.iter().copied().max().unwrap_or(0)
    }

    /// Pools another report into this one.
    pub fn merge(&mut self, other: &AssignReport) {
        self.per_gt_positive_counts
            .extend_from_slice(&other.per_gt_positive_counts);
        for (a, b) in self.buckets.iter_mut().zip(&other.buckets) {
            a.add(b);
        }
    }
}

/// Counts positives per ground truth and per size bucket. Crowd objects are
/// not assignment targets and are left out.
pub fn assignment_stats(assignment: &Assignment, gts: &[GroundTruth]) -> AssignReport {
    let counts = assignment.counts_per_gt(gts.len());
    let mut report = AssignReport::default();
    for (g, &n) in gts.iter().zip(&counts) {
        if g.is_crowd {
            continue;
        }
        report.per_gt_positive_counts.push(n);
        let b = &mut report.buckets[SizeBucket::of(&g.bbox) as usize];
        b.num_gts += 1;
        b.positives += n;
        b.unmatched += usize::from(n == 0);
    }
    report
}

/// An assignment rule to evaluate.
#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    /// Optimal one-to-one matching on the detection cost.
    Hungarian { weights: CostWeights },
    /// Every object matched to exactly `b` predictions.
    BMatch { b: usize, weights: CostWeights },
    /// Threshold assignment; any balance limit in the config is ignored.
    Iou(AssignConfig),
    /// Threshold assignment with the config's per-object cap.
    IouBalanced(AssignConfig),
}

impl Strategy {
    pub fn describe(&self) -> String {
        let w = |w: &CostWeights| {
            format!(
                "w_cls={} w_l1={} w_giou={} alpha={} gamma={}",
                w.w_cls, w.w_l1, w.w_giou, w.focal_alpha, w.focal_gamma
            )
        };
        let c = |c: &AssignConfig, k: BalanceLimit| {
            let g = c.fg_ratio.map_or("none".to_string(), |g| g.to_string());
            format!(
                "tau={} balance_k={} fg_ratio={} fallback={} seed={} order={:?}",
                c.tau, k, g, c.fallback_enabled, c.seed, c.order
            )
        };
        match self {
            Strategy::Hungarian { weights } => format!("hungarian {}", w(weights)),
            Strategy::BMatch { b, weights } => format!("bmatch b={b} {}", w(weights)),
            Strategy::Iou(cfg) => format!("iou {}", c(cfg, BalanceLimit::Unbounded)),
            Strategy::IouBalanced(cfg) => format!("iou-balanced {}", c(cfg, cfg.balance_k)),
        }
    }

    /// Assigns `preds` to the scene's objects. `seed` drives any sampling.
    pub fn run(&self, preds: &[Prediction], scene: &Scene, seed: u64) -> Result<Assignment, Error> {
        match self {
            Strategy::Hungarian { weights } => matched_assignment(preds, scene, weights, 1),
            Strategy::BMatch { b, weights } => matched_assignment(preds, scene, weights, *b),
            Strategy::Iou(cfg) | Strategy::IouBalanced(cfg) => {
                let balance_k = match self {
                    Strategy::Iou(_) => BalanceLimit::Unbounded,
                    _ => cfg.balance_k,
                };
                let cfg = AssignConfig {
                    balance_k,
                    seed: derive_seed(cfg.seed, seed),
                    ..*cfg
                };
                let boxes: Vec<BBox> = preds.iter().map(|p| p.bbox).collect();
                Ok(assign_stage(&boxes, &scene.gts, &cfg)?)
            }
        }
    }
}

fn matched_assignment(
    preds: &[Prediction],
    scene: &Scene,
    weights: &CostWeights,
    b: usize,
) -> Result<Assignment, Error> {
    let target_idx: Vec<usize> = (0..scene.gts.len()).filter(|&k| !scene.gts[k].is_crowd).collect();
    let targets: Vec<GroundTruth> = target_idx.iter().map(|&k| scene.gts[k]).collect();
    let cost = build_cost_matrix(preds, &targets, scene.image_size(), weights)?;
    let m = solve_b_matching(&cost, b)?;
    let labels = m
        .assignment
        .into_labels()
        .into_iter()
        .map(|l| match l {
            Label::Object(t) => Label::Object(target_idx[t]),
            other => other,
        })
        .collect();
    Ok(Assignment::new(labels))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledStrategy {
    pub label: String,
    pub strategy: Strategy,
}

impl LabeledStrategy {
    pub fn new(label: impl Into<String>, strategy: Strategy) -> Self {
        Self {
            label: label.into(),
            strategy,
        }
    }
}

/// Where per-scene predictions come from.
#[derive(Debug, Clone, PartialEq)]
pub enum PredictionSource<'a> {
    /// The fixed initial boxes of a dense anchor grid with the given
    /// strides (coarsest = level 0). Class scores are uniform.
    Anchors { strides: Vec<u32> },
    /// Jittered copies of the ground truth plus false positives.
    Synthetic { jitter: JitterSpec, seed: u64 },
    /// One proposal per anchor, regressed toward the object containing it.
    DenseProposals {
        strides: Vec<u32>,
        jitter: JitterSpec,
        seed: u64,
    },
    /// Predictions read from a results file, keyed by image id.
    Loaded(&'a BTreeMap<u64, Vec<Prediction>>),
}

impl PredictionSource<'_> {
    pub fn predictions(&self, scene: &Scene, num_classes: usize) -> Result<Vec<Prediction>, Error> {
        let grid = |strides: &[u32]| AnchorGridSpec::from_strides_any_order(scene.image_size(), strides);
        Ok(match self {
            PredictionSource::Anchors { strides } => generate_initial_boxes(&grid(strides)?)
                .into_iter()
                .map(|a| Prediction::new(a.bbox, vec![0.5; num_classes.max(1)]))
                .collect(),
            PredictionSource::Synthetic { jitter, seed } => {
                synthesize_predictions(scene, jitter, num_classes, derive_seed(*seed, scene.image_id))?
            }
            PredictionSource::DenseProposals {
                strides,
                jitter,
                seed,
            } => synthesize_dense_proposals(
                scene,
                &grid(strides)?,
                jitter,
                num_classes,
                derive_seed(*seed, scene.image_id),
            )?,
            PredictionSource::Loaded(map) => map.get(&scene.image_id).cloned().unwrap_or_default(),
        })
    }
}

/// Pooled reports, one per strategy, in the order the strategies were given.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Comparison {
    pub reports: Vec<AssignReport>,
    pub num_scenes: usize,
}

/// Runs every strategy on every scene and pools the counts per strategy.
///
/// Scenes are processed in parallel on the current rayon pool and merged in
/// ascending `image_id` order, so the result does not depend on the number
/// of workers.
pub fn compare_strategies(
    scenes: &[Scene],
    strategies: &[LabeledStrategy],
    source: &PredictionSource<'_>,
    num_classes: usize,
) -> Result<Comparison, Error> {
    let mut order: Vec<&Scene> = scenes.iter().collect();
    order.sort_by_key(|s| s.image_id);

    let per_scene: Vec<Vec<AssignReport>> = order
        .par_iter()
        .map(|scene| {
            let preds = source.predictions(scene, num_classes)?;
            strategies
                .iter()
                .map(|s| {
                    let a = s.strategy.run(&preds, scene, scene.image_id)?;
                    Ok(assignment_stats(&a, &scene.gts))
                })
                .collect::<Result<Vec<_>, Error>>()
        })
        .collect::<Result<_, Error>>()?;

    let mut reports: Vec<AssignReport> = strategies
        .iter()
        .map(|s| AssignReport {
            strategy: s.label.clone(),
            config: s.strategy.describe(),
            ..AssignReport::default()
        })
        .collect();
    for scene_reports in &per_scene {
        for (acc, r) in reports.iter_mut().zip(scene_reports) {
            acc.merge(r);
        }
    }
    Ok(Comparison {
        reports,
        num_scenes: scenes.len(),
    })
}

pub const CSV_COLUMNS: [&str; 6] = ["strategy", "bucket", "num_gts", "positives", "mean", "unmatched"];

impl Comparison {
    /// Fixed-width text table, one row per strategy and bucket.
    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "pooled counts over {} scenes", self.num_scenes);
        let _ = writeln!(
            out,
            "{:<20} {:<7} {:>8} {:>10} {:>9} {:>9} {:>7}",
            "strategy", "bucket", "num_gts", "positives", "mean", "unmatched", "max"
        );
        for r in &self.reports {
            for b in SizeBucket::ALL {
                let s = r.bucket(b);
                let _ = writeln!(
                    out,
                    "{:<20} {:<7} {:>8} {:>10} {:>9.3} {:>9} {:>7}",
                    r.strategy,
                    b.name(),
                    s.num_gts,
                    s.positives,
                    s.mean(),
                    s.unmatched,
                    r.max_per_gt()
                );
            }
        }
        out
    }

    /// CSV with `# ` comment lines for `header` followed by the fixed
    /// columns of [`CSV_COLUMNS`].
    pub fn to_csv(&self, header: &[(String, String)]) -> String {
        let mut out = String::new();
        for (k, v) in header {
            let _ = writeln!(out, "# {k}: {v}");
        }
        let _ = writeln!(
            out,
            "# aggregation: pooled counts over {} scenes",
            self.num_scenes
        );
        for r in &self.reports {
            let _ = writeln!(out, "# {}: {}", r.strategy, r.config);
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_COLUMNS).expect("in-memory write");
        for r in &self.reports {
            for b in SizeBucket::ALL {
                let s = r.bucket(b);
                w.write_record([
                    r.strategy.clone(),
                    b.name().to_string(),
                    s.num_gts.to_string(),
                    s.positives.to_string(),
                    format!("{:.6}", s.mean()),
                    s.unmatched.to_string(),
                ])
                .expect("in-memory write");
            }
        }
        let body = w.into_inner().expect("in-memory write");
        out.push_str(std::str::from_utf8(&body).expect("utf-8 fields"));
        out
    }

    /// Static SVG with one histogram of per-object positive counts per
    /// strategy. Counts above 30 share the last bin.
    pub fn histogram_svg(&self) -> String {
        const BINS: usize = 31;
        const PANEL_W: f64 = 640.0;
        const PANEL_H: f64 = 160.0;
        const MARGIN: f64 = 30.0;
        let height = MARGIN + self.reports.len() as f64 * (PANEL_H + MARGIN);
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="11">"#,
            PANEL_W + 2.0 * MARGIN,
            height
        );
        let bar_w = PANEL_W / BINS as f64;
        for (p, r) in self.reports.iter().enumerate() {
            let mut hist = [0usize; BINS];
            for &c in &r.per_gt_positive_counts {
                hist[c.min(BINS - 1)] += 1;
            }
            let peak = hist.iter().copied().max().unwrap_or(0).max(1) as f64;
            let top = MARGIN + p as f64 * (PANEL_H + MARGIN);
            let base = top + PANEL_H;
            let _ = writeln!(
                svg,
                r#"<text x="{MARGIN}" y="{:.1}">{} (objects: {}, max per object: {})</text>"#,
                top - 6.0,
                escape(&r.strategy),
                r.per_gt_positive_counts.len(),
                r.max_per_gt()
            );
            let _ = writeln!(
                svg,
                r##"<line x1="{MARGIN}" y1="{base:.1}" x2="{:.1}" y2="{base:.1}" stroke="#333"/>"##,
                MARGIN + PANEL_W
            );
            for (bin, &n) in hist.iter().enumerate() {
                if n == 0 {
                    continue;
                }
                let h = PANEL_H * n as f64 / peak;
                let _ = writeln!(
                    svg,
                    r##"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="#4a78b5"><title>{}{}: {}</title></rect>"##,
                    MARGIN + bin as f64 * bar_w,
                    base - h,
                    bar_w - 1.0,
                    h,
                    bin,
                    if bin == BINS - 1 { "+" } else { "" },
                    n
                );
            }
            for tick in (0..BINS).step_by(5) {
                let _ = writeln!(
                    svg,
                    r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{tick}</text>"#,
                    MARGIN + (tick as f64 + 0.5) * bar_w,
                    base + 12.0
                );
            }
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
