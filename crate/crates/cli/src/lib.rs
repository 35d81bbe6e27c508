//! Subcommands of the `assignkit` binary. Exposed as a library so the
//! acceptance tests can call the same code paths without a subprocess.

pub mod args;
pub mod bench;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use assignkit::anchors::AnchorGridSpec;
use assignkit::assign::{AssignConfig, AssignError};
use assignkit::data::{
    derive_seed, load_coco_annotations, load_predictions, load_results, synthesize_dense_proposals,
    synthesize_predictions, write_results, DataError, DetectionRecord,
};
use assignkit::matching::solve_b_matching;
use assignkit::nms::{nms, topk_prefilter, ScoredBox};
use assignkit::stats::{compare_strategies, LabeledStrategy, PredictionSource, Strategy};
use ndarray::Array2;
use rayon::prelude::*;
use thiserror::Error;

pub use args::Cli;
use args::{AssignArgs, BenchArgs, Command, MatchArgs, NmsArgs, StrategyName, SynthArgs};

#[derive(Debug, Error)]
pub enum CliError {
    /// Flags that parse but do not make sense together.
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Lib(#[from] assignkit::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Lib(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    if workers == Some(0) {
        return Err(usage("--workers must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| usage(format!("cannot start worker pool: {e}")))
}

/// Runs one parsed command line, writing reports to the paths it names
/// and the human-readable summary to stdout.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let pool = pool(cli.workers)?;
    match &cli.command {
        Command::Assign(a) => {
            let summary = pool.install(|| cmd_assign(a, cli.seed))?;
            print!("{summary}");
        }
        Command::Nms(a) => {
            let (kept, total) = pool.install(|| cmd_nms(a))?;
            println!(
                "# nms iou_thresh={} topk={} class_aware={} seed={}",
                a.iou_thresh, a.topk, a.class_aware, cli.seed
            );
            println!("kept {kept} of {total} boxes, suppressed {}", total - kept);
        }
        Command::Match(a) => {
            let text = cmd_match(a, cli.seed)?;
            match &a.out {
                Some(p) => write_file(p, &text)?,
                None => print!("{text}"),
            }
        }
        Command::Bench(a) => {
            let text = cmd_bench(a, cli.seed)?;
            match &a.out {
                Some(p) => write_file(p, &text)?,
                None => print!("{text}"),
            }
        }
        Command::Synth(a) => {
            let n = pool.install(|| cmd_synth(a, cli.seed))?;
            println!("wrote {n} predictions to {}", a.out.display());
        }
    }
    Ok(())
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// Runs the selected strategies and writes `report.csv` and
/// `histogram.svg` into `--out`. Returns the summary table.
pub fn cmd_assign(a: &AssignArgs, seed: u64) -> Result<String, CliError> {
    let first_stage = a.anchors;
    let defaults = if first_stage {
        AssignConfig::first_stage()
    } else {
        AssignConfig::second_stage()
    };
    let tau = a.tau.unwrap_or(defaults.tau);
    let gamma = a.gamma.map_or(defaults.fg_ratio, |g| g.0);
    if a.b.contains(&0) {
        return Err(usage("--b must be at least 1"));
    }
    if a.strides.is_empty() {
        return Err(usage("--strides needs at least one stride"));
    }
    let base = AssignConfig {
        tau,
        fg_ratio: gamma,
        fallback_enabled: a.fallback,
        seed,
        order: a.order.into(),
        ..defaults
    };
    base.validate().map_err(|e: AssignError| usage(e.to_string()))?;
    let weights = a.weights.weights();
    weights.validate().map_err(|e| usage(e.to_string()))?;
    let jitter = a.jitter.spec();
    jitter.validate().map_err(|e| usage(e.to_string()))?;

    let mut strategies = Vec::new();
    for s in &a.strategy {
        match s {
            StrategyName::Hungarian => {
                strategies.push(LabeledStrategy::new("hungarian", Strategy::Hungarian { weights }))
            }
            StrategyName::Bmatch => {
                for &b in &a.b {
                    strategies.push(LabeledStrategy::new(
                        format!("bmatch-b{b}"),
                        Strategy::BMatch { b, weights },
                    ));
                }
            }
            StrategyName::Iou => strategies.push(LabeledStrategy::new("iou", Strategy::Iou(base))),
            StrategyName::IouBalanced => {
                for k in &a.balance_k {
                    let cfg = AssignConfig {
                        balance_k: k.0,
                        ..base
                    };
                    strategies.push(LabeledStrategy::new(
                        format!("iou-balanced-k{}", k.0),
                        Strategy::IouBalanced(cfg),
                    ));
                }
            }
        }
    }

    let dataset = load_coco_annotations(&a.ann)?;
    let num_classes = dataset.categories.len().max(1);
    let loaded = match &a.pred {
        Some(p) => Some(load_predictions(p, &dataset.categories)?),
        None => None,
    };
    let (source, source_name) = match (&loaded, a.anchors, a.dense) {
        (Some(map), _, _) => (PredictionSource::Loaded(map), "results file"),
        (None, true, _) => (
            PredictionSource::Anchors {
                strides: a.strides.clone(),
            },
            "anchors",
        ),
        (None, false, true) => (
            PredictionSource::DenseProposals {
                strides: a.strides.clone(),
                jitter,
                seed,
            },
            "dense proposals",
        ),
        (None, false, false) => (PredictionSource::Synthetic { jitter, seed }, "synthetic"),
    };

    let comparison = compare_strategies(&dataset.scenes, &strategies, &source, num_classes)?;

    let mut header: Vec<(String, String)> = vec![
        ("command".into(), "assign".into()),
        ("ann".into(), a.ann.display().to_string()),
        ("source".into(), source_name.into()),
    ];
    match (&a.pred, a.anchors || a.dense) {
        (Some(p), _) => header.push(("pred".into(), p.display().to_string())),
        (None, true) => header.push(("strides".into(), join(&a.strides))),
        _ => {}
    }
    if a.pred.is_none() && !a.anchors {
        header.push((
            "jitter".into(),
            format!(
                "dup_count={} center_sigma={} scale_sigma={} fp_rate={} score_noise={}",
                jitter.dup_count, jitter.center_sigma, jitter.scale_sigma, jitter.fp_rate, jitter.score_noise
            ),
        ));
    }
    header.extend([
        ("seed".to_string(), seed.to_string()),
        ("num_scenes".to_string(), dataset.scenes.len().to_string()),
        ("num_classes".to_string(), num_classes.to_string()),
        (
            "dropped_annotations".to_string(),
            dataset.dropped_annotations.to_string(),
        ),
    ]);

    fs::create_dir_all(&a.out).map_err(|source| CliError::Io {
        path: a.out.clone(),
        source,
    })?;
    write_file(&a.out.join("report.csv"), &comparison.to_csv(&header))?;
    write_file(&a.out.join("histogram.svg"), &comparison.histogram_svg())?;
    Ok(comparison.summary_table())
}

/// Filters a results file per image. Returns `(kept, total)`.
pub fn cmd_nms(a: &NmsArgs) -> Result<(usize, usize), CliError> {
    if !(a.iou_thresh > 0.0 && a.iou_thresh <= 1.0) {
        return Err(usage(format!(
            "--iou-thresh must lie in (0, 1], got {}",
            a.iou_thresh
        )));
    }
    if a.topk == 0 {
        return Err(usage("--topk must be at least 1"));
    }
    let records = load_results(&a.pred)?;
    let total = records.len();
    let mut per_image: BTreeMap<u64, Vec<ScoredBox>> = BTreeMap::new();
    for r in &records {
        per_image.entry(r.image_id).or_default().push(ScoredBox::new(
            r.bbox,
            r.score,
            r.category_id as usize,
        ));
    }
    let groups: Vec<(u64, Vec<ScoredBox>)> = per_image.into_iter().collect();
    let kept: Vec<Vec<DetectionRecord>> = groups
        .par_iter()
        .map(|(image_id, dets)| {
            let top = topk_prefilter(dets, a.topk, false);
            nms(&top, a.iou_thresh, a.class_aware)
                .into_iter()
                .map(|i| DetectionRecord {
                    image_id: *image_id,
                    category_id: top[i].class_id as u64,
                    bbox: top[i].bbox,
                    score: top[i].score,
                })
                .collect()
        })
        .collect();
    let kept: Vec<DetectionRecord> = kept.into_iter().flatten().collect();
    write_results(&a.out, &kept)?;
    Ok((kept.len(), total))
}

fn read_cost_csv(path: &Path) -> Result<Array2<f64>, CliError> {
    let input = |message: String| CliError::Input {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => CliError::Io {
                path: path.to_path_buf(),
                source,
            },
            other => input(format!("{other:?}")),
        })?;
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| input(e.to_string()))?;
        if *cols.get_or_insert(rec.len()) != rec.len() {
            return Err(input(format!(
                "row {} has {} columns, expected {}",
                line + 1,
                rec.len(),
                cols.unwrap()
            )));
        }
        for field in rec.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| input(format!("row {}: `{field}` is not a number", line + 1)))?;
            values.push(v);
        }
        rows += 1;
    }
    Array2::from_shape_vec((rows, cols.unwrap_or(0)), values).map_err(|e| input(e.to_string()))
}

/// Solves the matrix in `--cost` and renders the matched pairs as CSV.
pub fn cmd_match(a: &MatchArgs, seed: u64) -> Result<String, CliError> {
    if a.b == 0 {
        return Err(usage("--b must be at least 1"));
    }
    let cost = read_cost_csv(&a.cost)?;
    let m = solve_b_matching(&cost, a.b).map_err(assignkit::Error::from)?;
    let mut out = format!(
        "# command: match\n# cost: {}\n# shape: {}x{}\n# b: {}\n# seed: {seed}\n# total_cost: {}\nprediction,gt\n",
        a.cost.display(),
        cost.nrows(),
        cost.ncols(),
        a.b,
        m.total_cost
    );
    for (i, k) in m.assignment.positives() {
        out.push_str(&format!("{i},{k}\n"));
    }
    Ok(out)
}

pub fn cmd_bench(a: &BenchArgs, seed: u64) -> Result<String, CliError> {
    if a.runs < 20 {
        return Err(usage("--runs must be at least 20"));
    }
    let rows = bench::run_bench(&a.ops, &a.sizes, a.runs, seed);
    Ok(bench::to_csv(&rows, seed))
}

/// Writes synthetic predictions for every image; returns how many.
pub fn cmd_synth(a: &SynthArgs, seed: u64) -> Result<usize, CliError> {
    let jitter = a.jitter.spec();
    jitter.validate().map_err(|e| usage(e.to_string()))?;
    let dataset = load_coco_annotations(&a.ann)?;
    let num_classes = dataset.categories.len().max(1);
    let per_scene: Vec<Vec<DetectionRecord>> = dataset
        .scenes
        .par_iter()
        .map(|scene| {
            let s = derive_seed(seed, scene.image_id);
            let preds = if a.dense {
                let grid = AnchorGridSpec::from_strides_any_order(scene.image_size(), &a.strides)
                    .map_err(assignkit::Error::from)?;
                synthesize_dense_proposals(scene, &grid, &jitter, num_classes, s)?
            } else {
                synthesize_predictions(scene, &jitter, num_classes, s)?
            };
            Ok(preds
                .iter()
                .filter_map(|p| {
                    let (class, score) = p.top_class()?;
                    Some(DetectionRecord {
                        image_id: scene.image_id,
                        category_id: dataset.categories.category_id(class)?,
                        bbox: p.bbox,
                        score,
                    })
                })
                .collect())
        })
        .collect::<Result<_, CliError>>()?;
    let records: Vec<DetectionRecord> = per_scene.into_iter().flatten().collect();
    write_results(&a.out, &records)?;
    Ok(records.len())
}
