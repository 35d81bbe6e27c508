//! Synthetic scenes and predictions standing in for a trained network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use super::{DataError, Scene};
use crate::anchors::{generate_initial_boxes, AnchorGridSpec};
use crate::cost::{GroundTruth, Prediction};
use crate::geometry::{iou, BBox};

/// Noise model for synthesized predictions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterSpec {
    /// Std of the center shift, as a fraction of the source box size.
    pub center_sigma: f64,
    /// Std of the log-size perturbation.
    pub scale_sigma: f64,
    /// Jittered copies per ground truth.
    pub dup_count: usize,
    /// Expected false positives per ground truth.
    pub fp_rate: f64,
    /// Std of the additive score noise.
    pub score_noise: f64,
}

impl Default for JitterSpec {
    fn default() -> Self {
        Self {
            center_sigma: 0.1,
            scale_sigma: 0.1,
            dup_count: 10,
            fp_rate: 0.5,
            score_noise: 0.05,
        }
    }
}

impl JitterSpec {
    pub fn exact(dup_count: usize) -> Self {
        Self {
            center_sigma: 0.0,
            scale_sigma: 0.0,
            dup_count,
            fp_rate: 0.0,
            score_noise: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let vals = [self.center_sigma, self.scale_sigma, self.score_noise];
        if vals.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(DataError::InvalidJitter("sigmas must be finite and non-negative"));
        }
        if self.dup_count == 0 {
            return Err(DataError::InvalidJitter("dup_count must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.fp_rate) {
            return Err(DataError::InvalidJitter("fp_rate must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Mixes a base seed with a stream id (e.g. an image id) so every scene gets
/// an independent, reproducible generator.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn normal(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        0.0
    } else {
        Normal::new(0.0, sigma).expect("validated sigma").sample(rng)
    }
}

fn jitter_box(rng: &mut ChaCha8Rng, src: &BBox, spec: &JitterSpec) -> BBox {
    if spec.center_sigma == 0.0 && spec.scale_sigma == 0.0 {
        // the center/size round trip is not exact in floating point
        return *src;
    }
    let (cx, cy) = src.center();
    let (w, h) = (src.width(), src.height());
    let cx = cx + normal(rng, spec.center_sigma * w);
    let cy = cy + normal(rng, spec.center_sigma * h);
    let w = w * normal(rng, spec.scale_sigma).exp();
    let h = h * normal(rng, spec.scale_sigma).exp();
    BBox::from_center(cx, cy, w, h).expect("jittered box stays finite")
}

fn one_hot(num_classes: usize, class_id: usize, score: f64) -> Vec<f64> {
    let mut s = vec![0.0; num_classes.max(class_id + 1)];
    s[class_id] = score;
    s
}

fn random_box(rng: &mut ChaCha8Rng, scene: &Scene) -> BBox {
    let (w, h) = (f64::from(scene.width), f64::from(scene.height));
    let bw = w * rng.random_range(0.02..0.3);
    let bh = h * rng.random_range(0.02..0.3);
    let cx = rng.random_range(0.0..w);
    let cy = rng.random_range(0.0..h);
    BBox::from_center(cx, cy, bw, bh).expect("finite")
}

/// `dup_count` jittered copies of every non-crowd ground truth, scored by
/// their IoU with the source plus noise, followed by a Poisson number of
/// uniformly placed false positives. Deterministic in `seed`.
pub fn synthesize_predictions(
    scene: &Scene,
    spec: &JitterSpec,
    num_classes: usize,
    seed: u64,
) -> Result<Vec<Prediction>, DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let targets: Vec<&GroundTruth> = scene.targets().collect();
    let mut out = Vec::with_capacity(targets.len() * spec.dup_count);
    for g in &targets {
        for _ in 0..spec.dup_count {
            let b = jitter_box(&mut rng, &g.bbox, spec);
            let score = (iou(&b, &g.bbox) + normal(&mut rng, spec.score_noise)).clamp(0.0, 1.0);
            out.push(Prediction::new(b, one_hot(num_classes, g.class_id, score)));
        }
    }
    let lambda = spec.fp_rate * targets.len() as f64;
    if lambda > 0.0 {
        let n = Poisson::new(lambda).expect("positive rate").sample(&mut rng) as usize;
        let classes = num_classes.max(1);
        for _ in 0..n {
            let b = random_box(&mut rng, scene);
            let class = rng.random_range(0..classes);
            let score = rng.random_range(0.0..0.3);
            out.push(Prediction::new(b, one_hot(num_classes, class, score)));
        }
    }
    Ok(out)
}

/// Proposals as a dense detector would emit them: one per anchor of `grid`.
///
/// An anchor whose center falls inside a ground truth regresses toward it
/// (the smallest containing object wins) and becomes a jittered copy of that
/// object; any other anchor keeps its initial box with a low score. Large
/// objects therefore collect many more proposals than small ones.
pub fn synthesize_dense_proposals(
    scene: &Scene,
    grid: &AnchorGridSpec,
    spec: &JitterSpec,
    num_classes: usize,
    seed: u64,
) -> Result<Vec<Prediction>, DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let targets: Vec<&GroundTruth> = scene.targets().collect();
    let classes = num_classes.max(1);
    let proposals = generate_initial_boxes(grid)
        .into_iter()
        .map(|a| {
            let (x, y) = a.center;
            let owner = targets
                .iter()
                .filter(|g| g.bbox.x1() <= x && x < g.bbox.x2() && g.bbox.y1() <= y && y < g.bbox.y2())
                .min_by(|p, q| p.bbox.area().total_cmp(&q.bbox.area()));
            match owner {
                Some(g) => {
                    let b = jitter_box(&mut rng, &g.bbox, spec);
                    let score = (iou(&b, &g.bbox) + normal(&mut rng, spec.score_noise)).clamp(0.0, 1.0);
                    Prediction::new(b, one_hot(num_classes, g.class_id, score))
                }
                None => {
                    let class = rng.random_range(0..classes);
                    let score = rng.random_range(0.0..0.1);
                    Prediction::new(a.bbox, one_hot(num_classes, class, score))
                }
            }
        })
        .collect();
    Ok(proposals)
}

/// Shape of randomly generated scenes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneSpec {
    pub width: u32,
    pub height: u32,
    pub max_objects: usize,
    pub num_classes: usize,
    /// Range of `sqrt(area)` for objects, in pixels; sampled log-uniformly.
    pub min_side: f64,
    pub max_side: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            max_objects: 12,
            num_classes: 10,
            min_side: 8.0,
            max_side: 300.0,
        }
    }
}

/// A random COCO-like scene: `1..=max_objects` objects with log-uniform
/// size and aspect ratio in `[1/2, 2]`, fully inside the image.
pub fn random_scene(image_id: u64, spec: &SceneSpec, seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (f64::from(spec.width), f64::from(spec.height));
    let n = rng.random_range(1..=spec.max_objects.max(1));
    let (lo, hi) = (spec.min_side.ln(), spec.max_side.ln());
    let gts = (0..n)
        .map(|_| {
            let side = rng.random_range(lo..=hi).exp();
            let aspect = rng.random_range((0.5f64).ln()..=(2.0f64).ln()).exp();
            let bw = (side * aspect.sqrt()).min(w);
            let bh = (side / aspect.sqrt()).min(h);
            let x = rng.random_range(0.0..=(w - bw));
            let y = rng.random_range(0.0..=(h - bh));
            let class_id = rng.random_range(0..spec.num_classes.max(1));
            GroundTruth::new(BBox::from_xywh(x, y, bw, bh).expect("finite"), class_id)
        })
        .collect();
    Scene {
        image_id,
        width: spec.width,
        height: spec.height,
        gts,
    }
}
