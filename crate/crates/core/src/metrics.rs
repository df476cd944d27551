//! Fitness measures computed from confusion matrices and candidate ranking.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Denominators below this are treated as zero by [`matthews_multiclass`].
pub const ZERO_DENOMINATOR: f64 = 1e-30;

/// Square matrix of counts; rows are true classes, columns predictions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<u64>,
    classes: usize,
}

impl ConfusionMatrix {
    pub fn new(rows: Vec<Vec<u64>>) -> Result<Self> {
        let classes = rows.len();
        if classes < 2 {
            return Err(Error::InvalidConfusionMatrix(format!(
                "need at least 2 classes, got {classes}"
            )));
        }
        if rows.iter().any(|r| r.len() != classes) {
            return Err(Error::InvalidConfusionMatrix("matrix is not square".into()));
        }
        Ok(ConfusionMatrix {
            counts: rows.into_iter().flatten().collect(),
            classes,
        })
    }

    /// Tallies `(true, predicted)` label pairs.
    pub fn from_labels(classes: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut cm = Self::new(vec![vec![0; classes]; classes])?;
        for (t, p) in pairs {
            if t >= classes || p >= classes {
                return Err(Error::InvalidConfusionMatrix(format!(
                    "label pair ({t}, {p}) outside {classes} classes"
                )));
            }
            cm.counts[t * classes + p] += 1;
        }
        Ok(cm)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, row: usize, col: usize) -> u64 {
        self.counts[row * self.classes + col]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|k| self.get(k, k)).sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.chunks(self.classes).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.classes)
            .map(|l| (0..self.classes).map(|k| self.get(k, l)).sum())
            .collect()
    }
}

pub fn accuracy<T: Scalar>(cm: &ConfusionMatrix) -> Result<T> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyConfusionMatrix);
    }
    Ok(T::of(cm.trace() as f64) / T::of(total as f64))
}

/// Multi-class Matthews coefficient.
///
/// The triple sums collapse onto marginals: with row sums `r`, column sums
/// `c` and total `n`, the numerator is `n * trace - sum_k r_k c_k` and the
/// two root terms are `sum_k r_k (n - r_k)` and `sum_k c_k (n - c_k)`.
/// A zero denominator (every sample in one row or one column) yields -1.
pub fn matthews_multiclass<T: Scalar>(cm: &ConfusionMatrix) -> T {
    let total = T::of(cm.total() as f64);
    let rows: Vec<T> = cm.row_sums().into_iter().map(|v| T::of(v as f64)).collect();
    let cols: Vec<T> = cm.col_sums().into_iter().map(|v| T::of(v as f64)).collect();
    let trace = T::of(cm.trace() as f64);

    let mut cross = T::zero();
    let mut row_term = T::zero();
    let mut col_term = T::zero();
    for (&r, &c) in rows.iter().zip(&cols) {
        cross += r * c;
        row_term += r * (total - r);
        col_term += c * (total - c);
    }
    let denominator = row_term.sqrt() * col_term.sqrt();
    if denominator < T::of(ZERO_DENOMINATOR) {
        return -T::one();
    }
    (total * trace - cross) / denominator
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluationStatus {
    #[default]
    Ok,
    Failed,
}

impl EvaluationStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            EvaluationStatus::Ok => "ok",
            EvaluationStatus::Failed => "failed",
        }
    }
}

/// Outcome of evaluating one candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationResult {
    pub candidate_id: String,
    pub accuracy: f64,
    pub matthews: f64,
    pub parameter_count: u64,
    pub status: EvaluationStatus,
    /// Seconds spent evaluating.
    pub wall_time: f64,
    pub error: Option<String>,
}

impl EvaluationResult {
    pub fn ok(candidate_id: impl Into<String>, accuracy: f64, matthews: f64, parameter_count: u64) -> Self {
        EvaluationResult {
            candidate_id: candidate_id.into(),
            accuracy,
            matthews,
            parameter_count,
            status: EvaluationStatus::Ok,
            wall_time: 0.0,
            error: None,
        }
    }

    /// A failed evaluation ranks last: matthews -1, accuracy 0.
    pub fn failed(candidate_id: impl Into<String>, error: impl Into<String>) -> Self {
        EvaluationResult {
            candidate_id: candidate_id.into(),
            accuracy: 0.0,
            matthews: -1.0,
            parameter_count: 0,
            status: EvaluationStatus::Failed,
            wall_time: 0.0,
            error: Some(error.into()),
        }
    }

    pub fn is_failed(&self) -> bool {
        self.status == EvaluationStatus::Failed
    }
}

/// Ranking order: matthews desc, accuracy desc, parameter count asc, id asc.
pub fn compare_results(a: &EvaluationResult, b: &EvaluationResult) -> Ordering {
    b.matthews
        .total_cmp(&a.matthews)
        .then_with(|| b.accuracy.total_cmp(&a.accuracy))
        .then_with(|| a.parameter_count.cmp(&b.parameter_count))
        .then_with(|| a.candidate_id.cmp(&b.candidate_id))
}

/// Indices of `results` in ranking order.
pub fn rank_order(results: &[EvaluationResult]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..results.len()).collect();
    order.sort_by(|&a, &b| compare_results(&results[a], &results[b]));
    order
}

/// Identifiers of the `k_s` best candidates, best first.
pub fn rank_candidates(results: &[EvaluationResult], k_s: usize) -> Result<Vec<String>> {
    if k_s > results.len() {
        return Err(Error::SelectionTooLarge {
            k_s,
            available: results.len(),
        });
    }
    Ok(rank_order(results)
        .into_iter()
        .take(k_s)
        .map(|i| results[i].candidate_id.clone())
        .collect())
}
