//! Acceptance checks. Runs without the libtest harness so each criterion
//! prints exactly one PASS/FAIL line; the process fails if any check does.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::time::{Duration, Instant};

use assignkit::anchors::{generate_initial_boxes, AnchorGridSpec};
use assignkit::assign::{balanced_iou_assign, iou_assign, AssignConfig, BalanceLimit};
use assignkit::cost::{build_cost_matrix, detection_loss, CostWeights};
use assignkit::data::{random_scene, synthesize_predictions, JitterSpec, SceneSpec};
use assignkit::geometry::ImageSize;
use assignkit::matching::{solve_assignment, solve_b_matching};
use assignkit::nms::nms;
use assignkit::stats::{
    assignment_stats, compare_strategies, LabeledStrategy, PredictionSource, SizeBucket, Strategy,
};
use assignkit_cli::args::{BenchArgs, BenchOp, BenchSize};
use assignkit_cli::cmd_bench;
use rand::Rng;
use support::*;

/// Wall-clock limit for the 1000 exhaustive matching checks.
const MATCHING_TIME_LIMIT: Duration = Duration::from_secs(10);
/// Loss versus solver objective.
const LOSS_TOLERANCE: f64 = 1e-9;
/// Median NMS time on 10,000 boxes.
const NMS_BUDGET_MS: f64 = 50.0;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn c1_matching_optimality() -> Outcome {
    let mut r = rng(1001);
    let start = Instant::now();
    for case in 0..1000 {
        let k = r.random_range(1..=7);
        let m = r.random_range(k..=7);
        let cost = random_matrix(&mut r, m, k, case % 2 == 1);
        let got = solve_assignment(&cost).map_err(|e| e.to_string())?;
        let best = brute_force_min_cost(&cost);
        check(
            got.total_cost == best,
            format!("case {case}: solver {} vs exhaustive {best}", got.total_cost),
        )?;
    }
    let elapsed = start.elapsed();
    check(elapsed < MATCHING_TIME_LIMIT, format!("took {elapsed:?}"))?;
    Ok(format!(
        "1000 matrices, exact totals, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn c2_b_matching() -> Outcome {
    let mut r = rng(1002);
    for case in 0..200 {
        let k = r.random_range(1..=8);
        let m = r.random_range(k..=40);
        let cost = random_matrix(&mut r, m, k, case % 4 == 0);
        check(
            solve_b_matching(&cost, 1) == solve_assignment(&cost),
            format!("B=1 differs on case {case}"),
        )?;
    }
    for b in [1, 2, 4, 8] {
        for case in 0..50 {
            let k = r.random_range(1..=5);
            let m = b * k + r.random_range(0..20);
            let cost = random_matrix(&mut r, m, k, false);
            let got = solve_b_matching(&cost, b).map_err(|e| e.to_string())?;
            check(
                got.assignment.counts_per_gt(k) == vec![b; k],
                format!("B={b} case {case}: counts {:?}", got.assignment.counts_per_gt(k)),
            )?;
        }
    }
    Ok("B=1 identical on 200 instances; multiplicity exact for B in {1,2,4,8}".into())
}

fn c3_oracle_equivalence() -> Outcome {
    let mut r = rng(1003);
    let mut max_boxes = 0;
    for case in 0..500 {
        let n = r.random_range(1..=5000);
        max_boxes = max_boxes.max(n);
        let (boxes, gts) = random_assign_scene(&mut r, 50, n, case % 2 == 0);
        let tau = [0.5, 0.6, 0.7][case % 3];
        let cap = [1, 4, 8, 16][case % 4];
        let naive = AssignConfig::naive(tau);
        check(
            as_ref_labels(&iou_assign(&boxes, &gts, &naive))
                == reference_assign(&boxes, &gts, tau, None, true),
            format!("iou_assign differs on scene {case}"),
        )?;
        let balanced = AssignConfig {
            balance_k: BalanceLimit::AtMost(cap),
            ..naive
        };
        check(
            as_ref_labels(&balanced_iou_assign(&boxes, &gts, &balanced))
                == reference_assign(&boxes, &gts, tau, Some(cap), true),
            format!("balanced_iou_assign (n={cap}) differs on scene {case}"),
        )?;
    }
    Ok(format!(
        "500 scenes up to 50 objects / {max_boxes} boxes, labels identical"
    ))
}

fn c4_balancing_bound() -> Outcome {
    let mut r = rng(1004);
    for case in 0..300 {
        let n = r.random_range(1..=2000);
        let (boxes, gts) = random_assign_scene(&mut r, 30, n, case % 2 == 0);
        let naive = AssignConfig::naive(0.5);
        for cap in [1, 4, 8, 16] {
            let cfg = AssignConfig {
                balance_k: BalanceLimit::AtMost(cap),
                ..naive
            };
            let a = balanced_iou_assign(&boxes, &gts, &cfg);
            let max = a.counts_per_gt(gts.len()).into_iter().max().unwrap_or(0);
            check(
                max <= cap,
                format!("scene {case}: n={cap} gave {max} positives on one object"),
            )?;
        }
        check(
            balanced_iou_assign(&boxes, &gts, &naive) == iou_assign(&boxes, &gts, &naive),
            format!("scene {case}: unbounded differs from naive"),
        )?;
    }
    Ok("300 scenes, n in {1,4,8,16} respected, unbounded == naive".into())
}

fn c5_anchor_count() -> Outcome {
    let spec = AnchorGridSpec::standard(ImageSize::new(480.0, 480.0)).map_err(|e| e.to_string())?;
    let n = generate_initial_boxes(&spec).len();
    check(n == 4789 && spec.anchor_count() == 4789, format!("got {n}"))?;
    Ok(format!("480x480, strides 64/32/16/8 -> {n} anchors"))
}

fn c6_nms() -> Outcome {
    let mut r = rng(1006);
    for case in 0..1000 {
        let n = r.random_range(0..=500);
        let dets = random_dets(&mut r, n, 3);
        let thr = r.random_range(0.1..=1.0);
        let aware = case % 2 == 1;
        let kept = nms(&dets, thr, aware);
        check(
            kept == reference_nms(&dets, thr, aware),
            format!("set {case} differs from reference"),
        )?;
        let survivors: Vec<_> = kept.iter().map(|&i| dets[i]).collect();
        check(
            nms(&survivors, thr, aware) == (0..survivors.len()).collect::<Vec<_>>(),
            format!("set {case} not idempotent"),
        )?;
    }
    Ok("1000 sets up to 500 boxes match reference and are idempotent".into())
}

fn c7_directional_effect() -> Outcome {
    let scenes: Vec<_> = (0..120)
        .map(|i| random_scene(i, &SceneSpec::default(), 7000 + i))
        .collect();
    let naive = AssignConfig {
        fg_ratio: None,
        ..AssignConfig::naive(0.6)
    };
    let balanced = AssignConfig {
        balance_k: BalanceLimit::AtMost(4),
        ..naive
    };
    let strategies = [
        LabeledStrategy::new("naive", Strategy::Iou(naive)),
        LabeledStrategy::new("k4", Strategy::IouBalanced(balanced)),
    ];
    let source = PredictionSource::DenseProposals {
        strides: vec![64, 32, 16, 8],
        jitter: JitterSpec::default(),
        seed: 77,
    };
    let cmp = compare_strategies(&scenes, &strategies, &source, 10).map_err(|e| e.to_string())?;
    let means = |i: usize| SizeBucket::ALL.map(|b| cmp.reports[i].bucket(b).mean());
    let [s, m, l] = means(0);
    let [bs, _, bl] = means(1);
    check(
        s <= m && m <= l,
        format!("naive means not ordered: {s:.3} {m:.3} {l:.3}"),
    )?;
    check(s > 0.0 && bs > 0.0, "empty small bucket")?;
    let (before, after) = (l / s, bl / bs);
    check(
        after < before,
        format!("large/small ratio {before:.3} -> {after:.3}"),
    )?;
    Ok(format!(
        "120 scenes; naive means {s:.2} <= {m:.2} <= {l:.2}; large/small {before:.2} -> {after:.2} with n=4"
    ))
}

fn c8_one_to_one() -> Outcome {
    let hungarian = Strategy::Hungarian {
        weights: CostWeights::default(),
    };
    let mut objects = 0;
    for i in 0..200 {
        let scene = random_scene(i, &SceneSpec::default(), 8000 + i);
        let jitter = JitterSpec {
            dup_count: 1 + (i as usize % 5),
            ..JitterSpec::default()
        };
        let preds = synthesize_predictions(&scene, &jitter, 10, i).map_err(|e| e.to_string())?;
        let a = hungarian.run(&preds, &scene, i).map_err(|e| e.to_string())?;
        let report = assignment_stats(&a, &scene.gts);
        check(
            report.per_gt_positive_counts.iter().all(|&c| c == 1),
            format!("scene {i}: counts {:?}", report.per_gt_positive_counts),
        )?;
        objects += report.per_gt_positive_counts.len();
    }
    Ok(format!(
        "200 scenes, {objects} objects, exactly one positive each"
    ))
}

fn c9_loss_consistency() -> Outcome {
    let mut r = rng(1009);
    let w = CostWeights::default();
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let img = ImageSize::new(r.random_range(200.0..800.0), r.random_range(200.0..800.0));
        let k = r.random_range(1..=8);
        let m = r.random_range(k..=30);
        let preds = random_predictions(&mut r, m, 5, img.height);
        let gts = random_gts(&mut r, k, 5, img.height);
        let cost = build_cost_matrix(&preds, &gts, img, &w).map_err(|e| e.to_string())?;
        let sol = solve_assignment(&cost).map_err(|e| e.to_string())?;
        let loss = detection_loss(&preds, &gts, &sol.assignment, img, &w).map_err(|e| e.to_string())?;
        let diff = (loss.matched_objective() - sol.total_cost).abs();
        worst = worst.max(diff);
        check(diff <= LOSS_TOLERANCE, format!("case {case}: |diff| = {diff:e}"))?;
    }
    Ok(format!("100 instances, max |loss - cost| = {worst:.1e}"))
}

fn c10_nms_speed() -> Outcome {
    let args = BenchArgs {
        sizes: vec![BenchSize {
            n: 10_000,
            k: BenchSize::DEFAULT_K,
        }],
        ops: vec![BenchOp::Nms],
        runs: 20,
        out: None,
    };
    let csv = cmd_bench(&args, 0).map_err(|e| e.to_string())?;
    let row = csv.lines().find(|l| l.starts_with("nms,")).ok_or("no nms row")?;
    let ms: f64 = row
        .split(',')
        .nth(2)
        .and_then(|v| v.parse().ok())
        .ok_or("bad row")?;
    check(ms <= NMS_BUDGET_MS, format!("median {ms:.2} ms"))?;
    Ok(format!("median {ms:.2} ms over 20 runs on 10,000 boxes"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("matching optimality", c1_matching_optimality),
        ("b-matching reduction and multiplicity", c2_b_matching),
        ("threshold rule equals reference", c3_oracle_equivalence),
        ("balancing bound", c4_balancing_bound),
        ("anchor count", c5_anchor_count),
        ("nms correctness", c6_nms),
        ("directional balancing effect", c7_directional_effect),
        ("one-to-one sanity", c8_one_to_one),
        ("loss consistency", c9_loss_consistency),
        ("nms speed", c10_nms_speed),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
