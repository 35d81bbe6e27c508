//! Wall-clock timing of the core operations on seeded synthetic inputs.

use std::fmt::Write as _;
use std::time::Instant;

use assignkit::assign::{iou_assign, AssignConfig};
use assignkit::cost::GroundTruth;
use assignkit::geometry::BBox;
use assignkit::matching::solve_assignment;
use assignkit::nms::{nms, ScoredBox};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::args::{BenchOp, BenchSize};

/// Benchmark image, roughly a COCO test resolution.
const IMAGE: (f64, f64) = (1333.0, 800.0);

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub op: BenchOp,
    pub size: BenchSize,
    pub median_ms: f64,
    pub runs: usize,
}

fn random_box(rng: &mut ChaCha8Rng) -> BBox {
    let w = rng.random_range(8.0..200.0);
    let h = rng.random_range(8.0..200.0);
    let x = rng.random_range(0.0..IMAGE.0 - w);
    let y = rng.random_range(0.0..IMAGE.1 - h);
    BBox::new(x, y, x + w, y + h).expect("finite")
}

/// Detections clustered around a few hundred objects, like raw detector
/// output before suppression.
fn nms_input(rng: &mut ChaCha8Rng, n: usize) -> Vec<ScoredBox> {
    let centers: Vec<BBox> = (0..(n / 30).max(1)).map(|_| random_box(rng)).collect();
    (0..n)
        .map(|_| {
            let c = centers[rng.random_range(0..centers.len())];
            let s = 0.1 * c.width().max(c.height());
            let (dx, dy) = (rng.random_range(-s..=s), rng.random_range(-s..=s));
            let b = BBox::new(c.x1() + dx, c.y1() + dy, c.x2() + dx, c.y2() + dy).expect("finite");
            ScoredBox::new(b, rng.random_range(0.0..1.0), 0)
        })
        .collect()
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        (xs[m - 1] + xs[m]) / 2.0
    }
}

fn time_runs(runs: usize, mut f: impl FnMut()) -> f64 {
    // one untimed warm-up
    f();
    let samples = (0..runs)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64() * 1e3
        })
        .collect();
    median(samples)
}

/// Times every op at every size, `runs` times each, on inputs drawn from
/// `seed`. Rows come out op-major in the order given.
pub fn run_bench(ops: &[BenchOp], sizes: &[BenchSize], runs: usize, seed: u64) -> Vec<BenchRow> {
    let mut rows = Vec::with_capacity(ops.len() * sizes.len());
    for &op in ops {
        for &size in sizes {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ size.n as u64);
            let median_ms = match op {
                BenchOp::Nms => {
                    let dets = nms_input(&mut rng, size.n);
                    time_runs(runs, || {
                        std::hint::black_box(nms(&dets, 0.7, false));
                    })
                }
                BenchOp::Hungarian => {
                    let k = size.k.min(size.n);
                    let cost = Array2::from_shape_fn((size.n, k), |_| rng.random_range(0.0..10.0));
                    time_runs(runs, || {
                        std::hint::black_box(solve_assignment(&cost).expect("m >= k"));
                    })
                }
                BenchOp::IouAssign => {
                    let boxes: Vec<BBox> = (0..size.n).map(|_| random_box(&mut rng)).collect();
                    let gts: Vec<GroundTruth> = (0..size.k)
                        .map(|_| GroundTruth::new(random_box(&mut rng), 0))
                        .collect();
                    let cfg = AssignConfig::naive(0.6);
                    time_runs(runs, || {
                        std::hint::black_box(iou_assign(&boxes, &gts, &cfg));
                    })
                }
            };
            rows.push(BenchRow {
                op,
                size,
                median_ms,
                runs,
            });
        }
    }
    rows
}

pub fn to_csv(rows: &[BenchRow], seed: u64) -> String {
    let mut out = format!(
        "# seed: {seed}\n# image: {}x{}\nop,size,median_ms,runs\n",
        IMAGE.0, IMAGE.1
    );
    for r in rows {
        let _ = writeln!(out, "{},{},{:.4},{}", r.op.name(), r.size, r.median_ms, r.runs);
    }
    out
}
