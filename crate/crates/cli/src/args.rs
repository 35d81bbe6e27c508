use std::path::PathBuf;
use std::str::FromStr;

use assignkit::assign::{BalanceLimit, StageOrder};
use assignkit::cost::CostWeights;
use assignkit::data::JitterSpec;
use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "assignkit",
    version,
    about = "Label assignment experiments on COCO-format data"
)]
pub struct Cli {
    /// Base seed for every random choice.
    #[arg(long, global = true, env = "ASSIGNKIT_SEED", default_value_t = 0)]
    pub seed: u64,

    /// Worker threads for per-image work (default: available parallelism).
    #[arg(long, global = true, env = "ASSIGNKIT_WORKERS")]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run assignment strategies over a dataset and report positive counts.
    Assign(AssignArgs),
    /// Filter a results file with top-k and greedy NMS.
    Nms(NmsArgs),
    /// Solve a single cost matrix read from CSV.
    Match(MatchArgs),
    /// Time the core operations.
    Bench(BenchArgs),
    /// Write synthetic predictions for an annotation file.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyName {
    Hungarian,
    Bmatch,
    Iou,
    IouBalanced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OrderArg {
    BalanceThenSample,
    SampleThenBalance,
}

impl From<OrderArg> for StageOrder {
    fn from(o: OrderArg) -> Self {
        match o {
            OrderArg::BalanceThenSample => StageOrder::BalanceThenSample,
            OrderArg::SampleThenBalance => StageOrder::SampleThenBalance,
        }
    }
}

/// `inf` or a count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BalanceArg(pub BalanceLimit);

impl FromStr for BalanceArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("inf") {
            return Ok(Self(BalanceLimit::Unbounded));
        }
        match s.parse::<usize>() {
            Ok(0) => Err("balance limit must be at least 1".into()),
            Ok(n) => Ok(Self(BalanceLimit::AtMost(n))),
            Err(_) => Err(format!("expected a positive integer or `inf`, got `{s}`")),
        }
    }
}

/// `none` or a ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioArg(pub Option<f64>);

impl FromStr for RatioArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("none") {
            return Ok(Self(None));
        }
        s.parse::<f64>()
            .map(|v| Self(Some(v)))
            .map_err(|_| format!("expected a number or `none`, got `{s}`"))
    }
}

#[derive(Debug, Clone, Args)]
pub struct JitterArgs {
    /// Jittered copies per object.
    #[arg(long, default_value_t = 10)]
    pub dup_count: usize,
    /// Center shift std as a fraction of the object size.
    #[arg(long, default_value_t = 0.1)]
    pub center_sigma: f64,
    /// Log-size std.
    #[arg(long, default_value_t = 0.1)]
    pub scale_sigma: f64,
    /// Expected false positives per object.
    #[arg(long, default_value_t = 0.5)]
    pub fp_rate: f64,
    /// Additive score noise std.
    #[arg(long, default_value_t = 0.05)]
    pub score_noise: f64,
}

impl JitterArgs {
    pub fn spec(&self) -> JitterSpec {
        JitterSpec {
            center_sigma: self.center_sigma,
            scale_sigma: self.scale_sigma,
            dup_count: self.dup_count,
            fp_rate: self.fp_rate,
            score_noise: self.score_noise,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct WeightArgs {
    #[arg(long, default_value_t = 2.0)]
    pub w_cls: f64,
    #[arg(long, default_value_t = 5.0)]
    pub w_l1: f64,
    #[arg(long, default_value_t = 2.0)]
    pub w_giou: f64,
    #[arg(long, default_value_t = 0.25)]
    pub focal_alpha: f64,
    #[arg(long, default_value_t = 2.0)]
    pub focal_gamma: f64,
}

impl WeightArgs {
    pub fn weights(&self) -> CostWeights {
        CostWeights {
            w_cls: self.w_cls,
            w_l1: self.w_l1,
            w_giou: self.w_giou,
            focal_alpha: self.focal_alpha,
            focal_gamma: self.focal_gamma,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct AssignArgs {
    /// COCO annotation file.
    #[arg(long, env = "ASSIGNKIT_ANN")]
    pub ann: PathBuf,

    /// COCO results file to use as predictions.
    #[arg(long, conflicts_with_all = ["anchors", "dense"])]
    pub pred: Option<PathBuf>,

    /// Use the fixed initial boxes of the anchor grid as predictions.
    #[arg(long, conflicts_with = "dense")]
    pub anchors: bool,

    /// Use one synthetic proposal per anchor, regressed toward the object
    /// that contains the anchor center.
    #[arg(long)]
    pub dense: bool,

    /// Anchor strides, any order; the coarsest becomes level 0.
    #[arg(long, value_delimiter = ',', default_value = "64,32,16,8")]
    pub strides: Vec<u32>,

    #[arg(long, value_enum, value_delimiter = ',', default_value = "iou")]
    pub strategy: Vec<StrategyName>,

    /// IoU threshold (default 0.7 with --anchors, otherwise 0.6).
    #[arg(long)]
    pub tau: Option<f64>,

    /// Per-object caps for iou-balanced, e.g. `1,4,8,16,inf`.
    #[arg(long, value_delimiter = ',', default_value = "4")]
    pub balance_k: Vec<BalanceArg>,

    /// Foreground ratio or `none` (default 0.5 with --anchors, otherwise 0.25).
    #[arg(long)]
    pub gamma: Option<RatioArg>,

    /// Matches per object for bmatch, e.g. `1,2,4,8`.
    #[arg(long, value_delimiter = ',', default_value = "2")]
    pub b: Vec<usize>,

    /// Closest-box fallback for objects with no box above the threshold.
    #[arg(long, action = ArgAction::Set, default_value_t = true)]
    pub fallback: bool,

    #[arg(long, value_enum, default_value = "balance-then-sample")]
    pub order: OrderArg,

    #[command(flatten)]
    pub jitter: JitterArgs,

    #[command(flatten)]
    pub weights: WeightArgs,

    /// Output directory for report.csv and histogram.svg.
    #[arg(long, default_value = "assign_out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct NmsArgs {
    /// COCO results file.
    #[arg(long)]
    pub pred: PathBuf,
    /// Output results file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.7)]
    pub iou_thresh: f64,
    /// Boxes kept per image before suppression.
    #[arg(long, default_value_t = 10000)]
    pub topk: usize,
    /// Only boxes of the same category suppress each other.
    #[arg(long, action = ArgAction::Set, default_value_t = true)]
    pub class_aware: bool,
}

#[derive(Debug, Clone, Args)]
pub struct MatchArgs {
    /// Cost matrix as headerless CSV, one row per prediction.
    #[arg(long)]
    pub cost: PathBuf,
    /// Matches per column.
    #[arg(long, default_value_t = 1)]
    pub b: usize,
    /// Write the assignment here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchOp {
    Nms,
    Hungarian,
    IouAssign,
}

impl BenchOp {
    pub fn name(self) -> &'static str {
        match self {
            BenchOp::Nms => "nms",
            BenchOp::Hungarian => "hungarian",
            BenchOp::IouAssign => "iou_assign",
        }
    }
}

/// `N` or `NxK`; `K` is the number of objects for matching and assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchSize {
    pub n: usize,
    pub k: usize,
}

impl BenchSize {
    pub const DEFAULT_K: usize = 10;
}

impl FromStr for BenchSize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse = |v: &str| {
            v.parse::<usize>()
                .ok()
                .filter(|&x| x > 0)
                .ok_or_else(|| format!("bad size `{s}`"))
        };
        match s.split_once(['x', 'X']) {
            Some((n, k)) => Ok(Self {
                n: parse(n)?,
                k: parse(k)?,
            }),
            None => Ok(Self {
                n: parse(s)?,
                k: Self::DEFAULT_K,
            }),
        }
    }
}

impl std::fmt::Display for BenchSize {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.n, self.k)
    }
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "1000,10000")]
    pub sizes: Vec<BenchSize>,
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "nms,hungarian,iou-assign"
    )]
    pub ops: Vec<BenchOp>,
    /// Timed runs per row; the median is reported.
    #[arg(long, default_value_t = 20)]
    pub runs: usize,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, env = "ASSIGNKIT_ANN")]
    pub ann: PathBuf,
    /// Output results file.
    #[arg(long)]
    pub out: PathBuf,
    /// Emit one proposal per anchor instead of jittered copies.
    #[arg(long)]
    pub dense: bool,
    #[arg(long, value_delimiter = ',', default_value = "64,32,16,8")]
    pub strides: Vec<u32>,
    #[command(flatten)]
    pub jitter: JitterArgs,
}
