//! Optimal one-to-one matching and its B-matching extension.
//!
//! The cost matrix is `M × K`: one row per prediction, one column per ground
//! truth. The solver finds the minimum-cost assignment that covers every
//! ground truth exactly once, leaving the remaining `M - K` predictions as
//! background.
//!
//! Internally this is the shortest-augmenting-path form of the Hungarian
//! method with row/column potentials, run with ground truths as the
//! "small" side so rectangular inputs cost `O(K² · M)`.

use ndarray::{Array2, ArrayView2};
use thiserror::Error;

/// Per-prediction target label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Background,
    /// Excluded from both the positive and the background loss.
    Ignore,
    /// Index of a ground truth.
    Object(usize),
}

impl Label {
    pub fn object(self) -> Option<usize> {
        match self {
            Label::Object(k) => Some(k),
            _ => None,
        }
    }

    pub fn is_positive(self) -> bool {
        matches!(self, Label::Object(_))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssignmentError {
    #[error("assignment has {actual} labels but there are {expected} predictions")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("prediction {index} is assigned to ground truth {gt} but only {num_gts} exist")]
    OutOfRange { index: usize, gt: usize, num_gts: usize },
}

/// One label per prediction.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    labels: Vec<Label>,
}

impl Assignment {
    pub fn new(labels: Vec<Label>) -> Self {
        Self { labels }
    }

    pub fn background(len: usize) -> Self {
        Self {
            labels: vec![Label::Background; len],
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [Label] {
        &mut self.labels
    }

    pub fn into_labels(self) -> Vec<Label> {
        self.labels
    }

    /// `(prediction, gt)` pairs in prediction order.
    pub fn positives(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.object().map(|k| (i, k)))
    }

    pub fn num_positives(&self) -> usize {
        self.labels.iter().filter(|l| l.is_positive()).count()
    }

    /// Number of positives per ground truth. Labels `>= num_gts` are not
    /// counted; call [`validate`](Self::validate) first if that matters.
    pub fn counts_per_gt(&self, num_gts: usize) -> Vec<usize> {
        let mut counts = vec![0; num_gts];
        for (_, k) in self.positives() {
            if k < num_gts {
                counts[k] += 1;
            }
        }
        counts
    }

    pub fn validate(&self, num_predictions: usize, num_gts: usize) -> Result<(), AssignmentError> {
        if self.labels.len() != num_predictions {
            return Err(AssignmentError::LengthMismatch {
                expected: num_predictions,
                actual: self.labels.len(),
            });
        }
        for (index, gt) in self.positives() {
            if gt >= num_gts {
                return Err(AssignmentError::OutOfRange { index, gt, num_gts });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchingError {
    #[error("need at least {required} predictions, got {available}")]
    Infeasible { required: usize, available: usize },
    #[error("cost entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("multiplicity B must be at least 1")]
    ZeroMultiplicity,
}

/// Solver output: the assignment and its total matched cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    pub assignment: Assignment,
    pub total_cost: f64,
}

/// Minimum-cost one-to-one assignment of all `K` ground truths.
///
/// Requires `M >= K`. Among equal-cost optima the result is deterministic:
/// column scans run in ascending prediction index and keep the first
/// minimum found.
pub fn solve_assignment(cost: &Array2<f64>) -> Result<Matching, MatchingError> {
    solve_view(cost.view())
}

fn solve_view(cost: ArrayView2<'_, f64>) -> Result<Matching, MatchingError> {
    let (m, k) = cost.dim();
    if m < k {
        return Err(MatchingError::Infeasible {
            required: k,
            available: m,
        });
    }
    if let Some(((row, col), _)) = cost.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(MatchingError::NonFinite { row, col });
    }
    let owner = hungarian(cost);
    let mut labels = vec![Label::Background; m];
    let mut pred_of_gt = vec![0usize; k];
    for (col, row) in owner.iter().enumerate() {
        if let Some(gt) = row {
            labels[col] = Label::Object(*gt);
            pred_of_gt[*gt] = col;
        }
    }
    let total_cost = pred_of_gt
        .iter()
        .enumerate()
        .map(|(gt, &pred)| cost[[pred, gt]])
        .sum();
    Ok(Matching {
        assignment: Assignment::new(labels),
        total_cost,
    })
}

/// Returns, for every prediction, the ground truth it is matched to.
fn hungarian(cost: ArrayView2<'_, f64>) -> Vec<Option<usize>> {
    let (m, n) = cost.dim();
    // 1-based with slot 0 as the virtual source column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![0.0f64; m + 1];
    let mut used = vec![false; m + 1];

    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|x| *x = f64::INFINITY);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[[j - 1, i0 - 1]] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    owner[1..]
        .iter()
        .map(|&r| if r == 0 { None } else { Some(r - 1) })
        .collect()
}

/// Matches every ground truth to exactly `b` predictions at minimum total
/// cost.
///
/// The cost matrix is widened to `M × (K·b)` by repeating each column `b`
/// times, solved one-to-one, and the duplicate columns are folded back to
/// their source ground truth. With `b == 1` this is exactly
/// [`solve_assignment`].
pub fn solve_b_matching(cost: &Array2<f64>, b: usize) -> Result<Matching, MatchingError> {
    if b == 0 {
        return Err(MatchingError::ZeroMultiplicity);
    }
    if b == 1 {
        return solve_assignment(cost);
    }
    let (m, k) = cost.dim();
    if m < b * k {
        return Err(MatchingError::Infeasible {
            required: b * k,
            available: m,
        });
    }
    let widened = Array2::from_shape_fn((m, k * b), |(i, d)| cost[[i, d / b]]);
    let inner = solve_view(widened.view())?;
    let labels = inner
        .assignment
        .into_labels()
        .into_iter()
        .map(|l| match l {
            Label::Object(d) => Label::Object(d / b),
            other => other,
        })
        .collect();
    Ok(Matching {
        assignment: Assignment::new(labels),
        total_cost: inner.total_cost,
    })
}
