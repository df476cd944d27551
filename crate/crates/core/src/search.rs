//! The search loop: sample, evaluate, rank, re-estimate, control
//! convergence, grow.

use serde::{Deserialize, Serialize};

use crate::architecture::{trace_shapes, CandidateArchitecture, InfeasibilityPolicy, InputShape, ShortcutPattern};
use crate::error::{Error, Result};
use crate::evaluation::{dispatch, EvaluationRequest, EvaluatorPool, Regime};
use crate::library::LayerLibrary;
use crate::metrics::{rank_order, EvaluationResult};
use crate::prototype::{CapConfig, Prototype};
use crate::scalar::Scalar;
use crate::seed::{candidate_seed, rng_from, sampling_seed};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Baseline,
    ProbCap,
    FullInversion,
    PartialInversion,
}

impl Variant {
    pub fn needs_cap(self) -> bool {
        self != Variant::Baseline
    }

    pub fn inverts(self) -> bool {
        matches!(self, Variant::FullInversion | Variant::PartialInversion)
    }
}

/// Number of rows appended after each iteration.
#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthSchedule {
    /// 2 rows after iterations 1 and 2, then 1 row.
    #[default]
    Standard,
    /// The same number of rows every iteration.
    Fixed(usize),
    /// `steps[t - 1]` rows after iteration `t`, `then` once the list runs out.
    Steps { steps: Vec<usize>, then: usize },
}

impl GrowthSchedule {
    pub fn rows_after(&self, t: usize) -> usize {
        match self {
            GrowthSchedule::Standard => {
                if t == 1 || t == 2 {
                    2
                } else {
                    1
                }
            }
            GrowthSchedule::Fixed(n) => *n,
            GrowthSchedule::Steps { steps, then } => {
                t.checked_sub(1).and_then(|i| steps.get(i)).copied().unwrap_or(*then)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchConfig<T> {
    pub library: LayerLibrary,
    pub n_init: usize,
    pub t_max: usize,
    /// Candidates sampled per iteration.
    pub k: usize,
    /// Candidates sampled in the first iteration, when different from `k`.
    pub k_init: Option<usize>,
    /// Candidates selected to re-estimate the prototype.
    pub k_s: usize,
    pub growth: GrowthSchedule,
    pub variant: Variant,
    pub cap: Option<CapConfig<T>>,
    /// Mean row norm at or above which inversion fires.
    pub inversion_threshold: T,
    pub shortcut_pattern: ShortcutPattern,
    pub infeasibility_policy: InfeasibilityPolicy,
    pub seed: u64,
    pub channels: usize,
    pub input_shape: InputShape,
    pub num_classes: usize,
    pub dataset: String,
    pub regime: Regime,
    /// Fraction of evaluator failures per iteration tolerated before aborting.
    pub max_failure_ratio: f64,
}

impl<T: Scalar> SearchConfig<T> {
    /// Large-scale settings: 5 initial layers, 10000 initial samples, then
    /// 1000 per iteration with the best 100 kept, 9 iterations, 32 channels
    /// on 32x32 RGB inputs with 100 classes.
    pub fn default_profile() -> Self {
        let library = LayerLibrary::default();
        let cap = CapConfig::new(T::of(0.9), library.size()).expect("default cap is valid");
        SearchConfig {
            library,
            n_init: 5,
            t_max: 9,
            k: 1000,
            k_init: Some(10_000),
            k_s: 100,
            growth: GrowthSchedule::Standard,
            variant: Variant::Baseline,
            cap: Some(cap),
            inversion_threshold: T::of(0.65),
            shortcut_pattern: ShortcutPattern::NONE,
            infeasibility_policy: InfeasibilityPolicy::PoolAsIdentity,
            seed: 0,
            channels: 32,
            input_shape: InputShape::new(32, 32, 3),
            num_classes: 100,
            dataset: "cifar100".into(),
            regime: Regime::Brief,
            max_failure_ratio: 0.1,
        }
    }

    /// Reduced settings for small grayscale problems: 2 initial layers, 100
    /// samples per iteration with the best 10 kept, on 16x16 inputs.
    pub fn modified_profile() -> Self {
        SearchConfig {
            n_init: 2,
            k: 100,
            k_init: None,
            k_s: 10,
            input_shape: InputShape::new(16, 16, 1),
            num_classes: 10,
            dataset: "usps".into(),
            ..Self::default_profile()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n_init == 0 {
            return fail("n_init must be at least 1".into());
        }
        if self.k_s == 0 {
            return fail("k_s must be at least 1".into());
        }
        if self.k_s >= self.k {
            return fail(format!("k_s ({}) must be smaller than k ({})", self.k_s, self.k));
        }
        if let Some(k_init) = self.k_init {
            if self.k_s >= k_init {
                return fail(format!("k_s ({}) must be smaller than k_init ({k_init})", self.k_s));
            }
        }
        if self.variant.needs_cap() && self.cap.is_none() {
            return fail(format!("variant {:?} needs a probability cap", self.variant));
        }
        if self.variant.inverts() {
            let floor = T::one() / T::of_count(self.library.size()).sqrt();
            if !(self.inversion_threshold > floor && self.inversion_threshold < T::one()) {
                return fail(format!(
                    "inversion_threshold {} must lie strictly between {floor} and 1",
                    self.inversion_threshold
                ));
            }
        }
        if let Some(cap) = &self.cap {
            CapConfig::new(cap.p_max(), self.library.size())?;
        }
        self.shortcut_pattern.validate()?;
        if self.channels == 0 {
            return fail("channels must be at least 1".into());
        }
        if self.input_shape.height == 0 || self.input_shape.width == 0 || self.input_shape.channels == 0 {
            return fail("input shape dimensions must be at least 1".into());
        }
        if self.num_classes < 2 {
            return fail("num_classes must be at least 2".into());
        }
        if !(0.0..=1.0).contains(&self.max_failure_ratio) {
            return fail("max_failure_ratio must lie in [0, 1]".into());
        }
        Ok(())
    }

    fn samples_at(&self, t: usize) -> usize {
        match (t, self.k_init) {
            (1, Some(k_init)) => k_init,
            _ => self.k,
        }
    }
}

/// Rows appended after iteration `t`.
pub fn growth_for<T>(t: usize, config: &SearchConfig<T>) -> usize {
    config.growth.rows_after(t)
}

/// Prototype depth after the final iteration: `n_init + sum of growth`.
pub fn max_depth<T>(config: &SearchConfig<T>) -> usize {
    config.n_init + (1..=config.t_max).map(|t| growth_for(t, config)).sum::<usize>()
}

/// Per-iteration population statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: usize,
    pub max_matthews: f64,
    pub median_matthews: f64,
    pub max_accuracy: f64,
    pub median_accuracy: f64,
    /// Mean row norm of the re-estimated prototype, after convergence control.
    pub mean_l2_norm: f64,
    /// Number of layers of the sampled candidates.
    pub depth: usize,
}

impl IterationStats {
    pub fn from_results(iteration: usize, depth: usize, mean_l2_norm: f64, results: &[EvaluationResult]) -> Self {
        let matthews: Vec<f64> = results.iter().map(|r| r.matthews).collect();
        let accuracy: Vec<f64> = results.iter().map(|r| r.accuracy).collect();
        IterationStats {
            iteration,
            max_matthews: max(&matthews),
            median_matthews: median(&matthews),
            max_accuracy: max(&accuracy),
            median_accuracy: median(&accuracy),
            mean_l2_norm,
            depth,
        }
    }
}

fn max(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub(crate) fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchState<T> {
    pub prototype: Prototype<T>,
    pub iteration: usize,
    /// Snapshots taken immediately before each inversion.
    pub archive: Vec<(usize, Prototype<T>)>,
    pub history: Vec<IterationStats>,
}

impl<T: Scalar> SearchState<T> {
    pub fn new(prototype: Prototype<T>) -> Self {
        SearchState {
            prototype,
            iteration: 0,
            archive: Vec::new(),
            history: Vec::new(),
        }
    }
}

/// Applies the variant's convergence control to a freshly re-estimated
/// prototype. Inversion variants archive the prototype before inverting.
pub fn convergence_control_step<T: Scalar>(state: SearchState<T>, config: &SearchConfig<T>) -> Result<SearchState<T>> {
    let cap = || {
        config
            .cap
            .as_ref()
            .ok_or_else(|| Error::Config(format!("variant {:?} needs a probability cap", config.variant)))
    };
    let mut state = state;
    match config.variant {
        Variant::Baseline => {}
        Variant::ProbCap => state.prototype = state.prototype.cap_normalize(cap()?),
        Variant::FullInversion | Variant::PartialInversion => {
            let cap = cap()?;
            let norm = state.prototype.mean_l2_norm(true)?;
            if norm >= config.inversion_threshold {
                state.archive.push((state.iteration, state.prototype.clone()));
                state.prototype = if config.variant == Variant::FullInversion {
                    state.prototype.invert_full(cap)
                } else {
                    state.prototype.invert_partial(cap)
                };
            }
        }
    }
    Ok(state)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TMaxReached,
    FullyConverged,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOutcome<T> {
    /// Most likely architecture of the final prototype.
    pub final_architecture: CandidateArchitecture,
    /// Most likely architecture of each archived prototype, with its iteration.
    pub archived_architectures: Vec<(usize, CandidateArchitecture)>,
    pub final_prototype: Prototype<T>,
    pub archive: Vec<(usize, Prototype<T>)>,
    pub history: Vec<IterationStats>,
    pub stop_reason: StopReason,
}

impl<T> SearchOutcome<T> {
    /// The final architecture followed by every archived one.
    pub fn solutions(&self) -> impl Iterator<Item = &CandidateArchitecture> {
        std::iter::once(&self.final_architecture).chain(self.archived_architectures.iter().map(|(_, a)| a))
    }
}

/// Everything produced by one iteration, handed to a [`SearchObserver`].
pub struct IterationRecord<'a, T> {
    pub iteration: usize,
    /// Re-estimated prototype after convergence control, before growth.
    pub prototype: &'a Prototype<T>,
    /// Prototype saved before an inversion fired in this iteration.
    pub archived: Option<&'a Prototype<T>>,
    pub stats: &'a IterationStats,
}

/// Evaluated population of one iteration.
pub struct Population<'a> {
    pub iteration: usize,
    /// Layer sequences as sampled.
    pub sampled: &'a [Vec<usize>],
    pub requests: &'a [EvaluationRequest],
    pub results: &'a [EvaluationResult],
}

/// Hooks for persisting progress while the search runs.
pub trait SearchObserver<T> {
    fn on_population(&mut self, _population: &Population<'_>) -> Result<()> {
        Ok(())
    }

    fn on_iteration(&mut self, _record: &IterationRecord<'_, T>) -> Result<()> {
        Ok(())
    }
}

/// Observer that ignores every event.
pub struct NoopObserver;

impl<T> SearchObserver<T> for NoopObserver {}

pub fn candidate_id(iteration: usize, index: usize) -> String {
    format!("{iteration}-{index:06}")
}

/// Builds the evaluation request for a sampled sequence. The request carries
/// the materialized layers (infeasible pools demoted to identity); under the
/// reject policy an infeasible candidate yields a failed result instead.
pub fn build_request<T>(
    config: &SearchConfig<T>,
    iteration: usize,
    index: usize,
    layers: &[usize],
) -> std::result::Result<EvaluationRequest, EvaluationResult> {
    let id = candidate_id(iteration, index);
    let arch = CandidateArchitecture::with_pattern(
        layers.to_vec(),
        &config.shortcut_pattern,
        config.channels,
        config.input_shape,
    )
    .map_err(|e| EvaluationResult::failed(&id, e.to_string()))?;
    let trace = trace_shapes(&arch, &config.library, config.infeasibility_policy)
        .map_err(|e| EvaluationResult::failed(&id, e.to_string()))?;
    Ok(EvaluationRequest {
        layers: config.library.encode(&trace.materialized),
        shortcuts: arch.shortcuts().to_vec(),
        channels: config.channels,
        dataset: config.dataset.clone(),
        regime: config.regime,
        seed: candidate_seed(config.seed, iteration, index),
        candidate_id: id,
    })
}

/// Runs the search to completion.
pub fn run<T: Scalar>(
    config: &SearchConfig<T>,
    pool: &mut EvaluatorPool,
    observer: &mut dyn SearchObserver<T>,
) -> Result<SearchOutcome<T>> {
    config.validate()?;
    let mut state = SearchState::new(Prototype::uniform(config.n_init, config.library.size())?);
    let mut stop_reason = StopReason::TMaxReached;

    for t in 1..=config.t_max {
        state.iteration = t;
        let depth = state.prototype.n_layers();
        let sampled = state
            .prototype
            .sample(config.samples_at(t), &mut rng_from(sampling_seed(config.seed, t)));

        let mut results: Vec<Option<EvaluationResult>> = Vec::with_capacity(sampled.len());
        let mut requests = Vec::with_capacity(sampled.len());
        let mut slots = Vec::new();
        for (index, layers) in sampled.iter().enumerate() {
            match build_request(config, t, index, layers) {
                Ok(request) => {
                    slots.push(results.len());
                    results.push(None);
                    requests.push(request);
                }
                Err(rejected) => results.push(Some(rejected)),
            }
        }
        let evaluated = dispatch(&requests, pool).map_err(|e| Error::EvaluationAborted {
            iteration: t,
            reason: e.to_string(),
        })?;
        let evaluator_failures = evaluated.iter().filter(|r| r.is_failed()).count();
        for (slot, result) in slots.into_iter().zip(evaluated) {
            results[slot] = Some(result);
        }
        let results: Vec<EvaluationResult> = results.into_iter().map(|r| r.expect("every slot filled")).collect();

        observer.on_population(&Population {
            iteration: t,
            sampled: &sampled,
            requests: &requests,
            results: &results,
        })?;

        if evaluator_failures as f64 > config.max_failure_ratio * results.len() as f64 {
            return Err(Error::EvaluationAborted {
                iteration: t,
                reason: format!("{evaluator_failures} of {} evaluations failed", results.len()),
            });
        }

        let selected: Vec<Vec<usize>> = rank_order(&results)
            .into_iter()
            .take(config.k_s)
            .map(|i| sampled[i].clone())
            .collect();
        state.prototype = state.prototype.update_from_selection(&selected)?;
        let archived_before = state.archive.len();
        state = convergence_control_step(state, config)?;

        let stats = IterationStats::from_results(t, depth, state.prototype.mean_l2_norm(true)?.as_f64(), &results);
        observer.on_iteration(&IterationRecord {
            iteration: t,
            prototype: &state.prototype,
            archived: state.archive[archived_before..].first().map(|(_, p)| p),
            stats: &stats,
        })?;
        state.history.push(stats);

        state.prototype = state.prototype.grow(growth_for(t, config));
        if state.prototype.is_fully_converged() {
            stop_reason = StopReason::FullyConverged;
            break;
        }
    }

    let materialize = |p: &Prototype<T>| {
        CandidateArchitecture::with_pattern(
            p.argmax_architecture(),
            &config.shortcut_pattern,
            config.channels,
            config.input_shape,
        )
    };
    let final_architecture = materialize(&state.prototype)?;
    let archived_architectures = state
        .archive
        .iter()
        .map(|(t, p)| Ok((*t, materialize(p)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SearchOutcome {
        final_architecture,
        archived_architectures,
        final_prototype: state.prototype,
        archive: state.archive,
        history: state.history,
        stop_reason,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::{SurrogateEvaluator, SurrogateSpec};

    fn surrogate_config(target: &str) -> (SearchConfig<f64>, EvaluatorPool) {
        let mut config = SearchConfig::<f64>::modified_profile();
        config.n_init = 5;
        config.k = 200;
        config.k_s = 20;
        config.t_max = 8;
        config.growth = GrowthSchedule::Fixed(0);
        let spec = SurrogateSpec::target_match(config.library.decode(target).unwrap());
        let eval = SurrogateEvaluator::new(spec, config.library.clone(), config.input_shape, 10).unwrap();
        (config, EvaluatorPool::replicated(eval, 1).unwrap())
    }

    #[test]
    fn growth_schedule() {
        let c = SearchConfig::<f64>::default_profile();
        assert_eq!(growth_for(1, &c), 2);
        assert_eq!(growth_for(2, &c), 2);
        assert_eq!(growth_for(5, &c), 1);
        let steps = GrowthSchedule::Steps {
            steps: vec![3, 0],
            then: 4,
        };
        assert_eq!(
            (steps.rows_after(1), steps.rows_after(2), steps.rows_after(3)),
            (3, 0, 4)
        );
    }

    #[test]
    fn depth_arithmetic() {
        let mut c = SearchConfig::<f64>::default_profile();
        assert_eq!(max_depth(&c), 16);
        c.t_max = 15;
        assert_eq!(max_depth(&c), 22);
        c.t_max = 0;
        assert_eq!(max_depth(&c), 5);
    }

    #[test]
    fn validation() {
        let mut c = SearchConfig::<f64>::modified_profile();
        c.validate().unwrap();
        c.k_s = c.k;
        assert!(matches!(c.validate(), Err(Error::Config(m)) if m.contains("k_s")));
        let mut c = SearchConfig::<f64>::modified_profile();
        c.variant = Variant::FullInversion;
        c.cap = None;
        assert!(c.validate().is_err());
        let mut c = SearchConfig::<f64>::modified_profile();
        c.variant = Variant::PartialInversion;
        c.inversion_threshold = 0.3;
        assert!(c.validate().is_err());
    }

    #[test]
    fn control_step_examples() {
        let mut config = SearchConfig::<f64>::default_profile();
        config.variant = Variant::FullInversion;
        let hot = SearchState::new(Prototype::one_hot(&[1, 2, 3], 10).unwrap());
        let after = convergence_control_step(hot.clone(), &config).unwrap();
        assert_eq!(after.archive.len(), 1);
        assert_eq!(after.archive[0].1, hot.prototype);

        let flat = SearchState::new(Prototype::<f64>::uniform(3, 10).unwrap());
        assert!(convergence_control_step(flat, &config).unwrap().archive.is_empty());

        // Row [0.8, 0.2, 0...] has norm sqrt(0.68); set the threshold to exactly that.
        let mut row = vec![0.0; 10];
        row[0] = 0.8;
        row[1] = 0.2;
        let at = SearchState::new(Prototype::from_rows(vec![row]).unwrap());
        config.inversion_threshold = at.prototype.mean_l2_norm(true).unwrap();
        assert_eq!(convergence_control_step(at, &config).unwrap().archive.len(), 1);

        config.variant = Variant::Baseline;
        let same = SearchState::new(Prototype::one_hot(&[4], 10).unwrap());
        assert_eq!(convergence_control_step(same.clone(), &config).unwrap(), same);

        config.variant = Variant::ProbCap;
        config.cap = None;
        assert!(convergence_control_step(same, &config).is_err());
    }

    #[test]
    fn degenerate_run() {
        let (mut config, mut pool) = surrogate_config("c3-m2-c5-c1-a3");
        config.t_max = 0;
        let out = run(&config, &mut pool, &mut NoopObserver).unwrap();
        assert_eq!(out.final_architecture.layers, vec![0; 5]);
        assert!(out.history.is_empty());
        assert!(out.archived_architectures.is_empty());
    }

    #[test]
    fn recovers_target_and_is_deterministic() {
        let (config, mut pool) = surrogate_config("c3-m2-c5-c1-a3");
        let a = run(&config, &mut pool, &mut NoopObserver).unwrap();
        let b = run(&config, &mut pool, &mut NoopObserver).unwrap();
        assert_eq!(a, b);
        assert_eq!(config.library.encode(&a.final_architecture.layers), "c3-m2-c5-c1-a3");
    }

    #[test]
    fn depth_grows_by_schedule() {
        let (mut config, mut pool) = surrogate_config("c3-m2");
        config.n_init = 2;
        config.t_max = 4;
        config.growth = GrowthSchedule::Standard;
        let out = run(&config, &mut pool, &mut NoopObserver).unwrap();
        let depths: Vec<usize> = out.history.iter().map(|h| h.depth).collect();
        assert_eq!(depths, vec![2, 4, 6, 7]);
        assert_eq!(out.final_prototype.n_layers(), max_depth(&config));
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
