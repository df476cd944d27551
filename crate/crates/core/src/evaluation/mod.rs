//! Candidate evaluation: the evaluator contract, built-in surrogate oracles,
//! the external worker client and the pool dispatcher.

mod dispatch;
pub mod protocol;
mod surrogate;
mod worker;

use serde::{Deserialize, Serialize};

pub use dispatch::{dispatch, EvaluatorPool};
pub use surrogate::{evaluate_surrogate, SurrogateEvaluator, SurrogateKind, SurrogateSpec, TRAP_EXPONENT, TRAP_SCORE};
pub use worker::{ExternalWorker, WorkerCommand, WorkerError};

use crate::metrics::EvaluationResult;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    #[default]
    Brief,
    Full,
}

/// Everything an evaluator needs to build and score one candidate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvaluationRequest {
    pub candidate_id: String,
    /// Hyphenated shorthand, e.g. `c3-m2-c5`.
    pub layers: String,
    /// 1-based `(start, end)` pairs over layer outputs.
    pub shortcuts: Vec<(usize, usize)>,
    pub channels: usize,
    pub dataset: String,
    pub regime: Regime,
    pub seed: u64,
}

/// The evaluation slot is permanently unusable (e.g. its worker cannot be
/// restarted). Per-candidate failures are reported as failed results instead.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlotUnavailable(pub String);

/// One evaluation slot. A slot handles a single request at a time; the
/// dispatcher runs slots concurrently.
pub trait Evaluator: Send {
    fn evaluate(&mut self, request: &EvaluationRequest) -> Result<EvaluationResult, SlotUnavailable>;
}

impl<E: Evaluator + ?Sized> Evaluator for Box<E> {
    fn evaluate(&mut self, request: &EvaluationRequest) -> Result<EvaluationResult, SlotUnavailable> {
        (**self).evaluate(request)
    }
}
