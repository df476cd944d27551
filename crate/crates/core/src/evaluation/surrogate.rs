use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{EvaluationRequest, Evaluator, SlotUnavailable};
use crate::architecture::{parameter_count, CandidateArchitecture, InputShape};
use crate::error::{Error, Result};
use crate::library::LayerLibrary;
use crate::metrics::EvaluationResult;
use crate::seed::rng_from;

/// Fraction of the maximum fitness awarded to the all-identity candidate by
/// the deceptive trap.
pub const TRAP_SCORE: f64 = 0.99;

/// Exponent applied to the identity fraction by the deceptive trap. Below one,
/// a single identity outscores a single target match.
pub const TRAP_EXPONENT: f64 = 0.75;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateKind {
    /// Fraction of positions matching a hidden target.
    TargetMatch,
    /// Target matching with a competing basin around the all-identity network.
    DeceptiveTrap,
    /// Target matching plus seeded Gaussian noise.
    NoisyTarget,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateSpec {
    pub kind: SurrogateKind,
    pub target: Vec<usize>,
    pub noise_sigma: f64,
}

impl SurrogateSpec {
    pub fn new(kind: SurrogateKind, target: Vec<usize>, noise_sigma: f64) -> Result<Self> {
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "noise_sigma must be finite and non-negative, got {noise_sigma}"
            )));
        }
        Ok(SurrogateSpec {
            kind,
            target,
            noise_sigma,
        })
    }

    pub fn target_match(target: Vec<usize>) -> Self {
        SurrogateSpec {
            kind: SurrogateKind::TargetMatch,
            target,
            noise_sigma: 0.0,
        }
    }

    pub fn deceptive_trap(target: Vec<usize>) -> Self {
        SurrogateSpec {
            kind: SurrogateKind::DeceptiveTrap,
            target,
            noise_sigma: 0.0,
        }
    }

    /// Fitness in `[0, 1]` of a layer sequence, before noise.
    ///
    /// Both sequences are padded with `identity` to a common length. For the
    /// trap, a non-target candidate scores the better of its match fraction
    /// and `TRAP_SCORE * (identity fraction)^TRAP_EXPONENT`, so the
    /// all-identity network sits at `TRAP_SCORE` and the first steps towards
    /// it pay more than the first steps towards the target.
    pub fn fitness(&self, layers: &[usize], identity: usize) -> f64 {
        let len = layers.len().max(self.target.len());
        if len == 0 {
            return 1.0;
        }
        let at = |seq: &[usize], i: usize| seq.get(i).copied().unwrap_or(identity);
        let matches = (0..len).filter(|&i| at(layers, i) == at(&self.target, i)).count();
        let match_fraction = matches as f64 / len as f64;
        match self.kind {
            SurrogateKind::TargetMatch | SurrogateKind::NoisyTarget => match_fraction,
            SurrogateKind::DeceptiveTrap => {
                if matches == len {
                    return 1.0;
                }
                let identities = (0..len).filter(|&i| at(layers, i) == identity).count();
                match_fraction.max(TRAP_SCORE * (identities as f64 / len as f64).powf(TRAP_EXPONENT))
            }
        }
    }
}

/// Scores a request against a surrogate. Fitness `f` is reported as accuracy
/// and, rescaled to `2f - 1`, in the matthews field used for ranking.
pub fn evaluate_surrogate(
    request: &EvaluationRequest,
    spec: &SurrogateSpec,
    library: &LayerLibrary,
    input_shape: InputShape,
    num_classes: usize,
) -> EvaluationResult {
    let layers = match library.decode(&request.layers) {
        Ok(layers) => layers,
        Err(e) => return EvaluationResult::failed(&request.candidate_id, e.to_string()),
    };
    let Some(identity) = library.identity_index() else {
        return EvaluationResult::failed(&request.candidate_id, "surrogate needs an identity layer");
    };
    let fitness = spec.fitness(&layers, identity);
    let mut matthews = 2.0 * fitness - 1.0;
    if spec.kind == SurrogateKind::NoisyTarget && spec.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, spec.noise_sigma).expect("validated sigma");
        matthews = (matthews + noise.sample(&mut rng_from(request.seed))).clamp(-1.0, 1.0);
    }
    let params = CandidateArchitecture::new(layers, request.shortcuts.clone(), request.channels, input_shape)
        .map(|arch| parameter_count(&arch, library, num_classes));
    match params {
        Ok(params) => EvaluationResult::ok(&request.candidate_id, fitness, matthews, params),
        Err(e) => EvaluationResult::failed(&request.candidate_id, e.to_string()),
    }
}

/// In-process evaluator backed by a [`SurrogateSpec`]. Reports zero wall time
/// so that candidate logs are reproducible byte for byte.
#[derive(Clone, Debug)]
pub struct SurrogateEvaluator {
    pub spec: SurrogateSpec,
    pub library: LayerLibrary,
    pub input_shape: InputShape,
    pub num_classes: usize,
}

impl SurrogateEvaluator {
    pub fn new(
        spec: SurrogateSpec,
        library: LayerLibrary,
        input_shape: InputShape,
        num_classes: usize,
    ) -> Result<Self> {
        if library.identity_index().is_none() {
            return Err(Error::Config(
                "surrogate evaluators need an identity entry in the library".into(),
            ));
        }
        if let Some(&bad) = spec.target.iter().find(|&&j| j >= library.size()) {
            return Err(Error::Config(format!(
                "surrogate target index {bad} outside the library"
            )));
        }
        Ok(SurrogateEvaluator {
            spec,
            library,
            input_shape,
            num_classes,
        })
    }
}

impl Evaluator for SurrogateEvaluator {
    fn evaluate(&mut self, request: &EvaluationRequest) -> std::result::Result<EvaluationResult, SlotUnavailable> {
        Ok(evaluate_surrogate(
            request,
            &self.spec,
            &self.library,
            self.input_shape,
            self.num_classes,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::Regime;
    use crate::library::default_library;
    use approx::assert_abs_diff_eq;

    fn request(layers: &str, seed: u64) -> EvaluationRequest {
        EvaluationRequest {
            candidate_id: "1-000000".into(),
            layers: layers.into(),
            shortcuts: vec![],
            channels: 32,
            dataset: "surrogate".into(),
            regime: Regime::Brief,
            seed,
        }
    }

    fn score(spec: &SurrogateSpec, layers: &str) -> EvaluationResult {
        evaluate_surrogate(
            &request(layers, 1),
            spec,
            &default_library(),
            InputShape::new(16, 16, 1),
            10,
        )
    }

    #[test]
    fn target_match_examples() {
        let lib = default_library();
        let target = lib.decode("c3-m2-c5-c1-a3").unwrap();
        let spec = SurrogateSpec::target_match(target);
        let exact = score(&spec, "c3-m2-c5-c1-a3");
        assert_eq!(exact.matthews, 1.0);
        assert_eq!(exact.accuracy, 1.0);
        assert_eq!(score(&spec, "id-id-id-id-id").matthews, -1.0);
        assert_abs_diff_eq!(score(&spec, "c3-m2-c5-c7-c7").matthews, 0.2, epsilon = 1e-12);
        // Shorter candidates are identity-padded.
        assert_abs_diff_eq!(score(&spec, "c3-m2").accuracy, 0.4, epsilon = 1e-12);
        assert!(score(&spec, "zz").is_failed());
    }

    #[test]
    fn padding_makes_trailing_identities_free() {
        let lib = default_library();
        let spec = SurrogateSpec::target_match(lib.decode("c3-m2-id-id").unwrap());
        assert_eq!(score(&spec, "c3-m2").matthews, 1.0);
        assert_eq!(score(&spec, "c3-m2-id-id-id-id").matthews, 1.0);
        assert!(score(&spec, "c3-m2-c1").matthews < 1.0);
    }

    #[test]
    fn trap_landscape() {
        let lib = default_library();
        let spec = SurrogateSpec::deceptive_trap(lib.decode("c3-m2-c5-c1-a3").unwrap());
        let optimum = score(&spec, "c3-m2-c5-c1-a3").matthews;
        let trap = score(&spec, "id-id-id-id-id").matthews;
        assert_eq!(optimum, 1.0);
        assert_abs_diff_eq!(trap, 2.0 * TRAP_SCORE - 1.0, epsilon = 1e-12);
        assert!(trap < optimum);
        for other in ["c3-m2-c5-c1-c1", "id-id-id-id-c7", "c3-m2-id-id-id"] {
            assert!(score(&spec, other).matthews < trap, "{other}");
        }
        assert!(score(&spec, "id-id-id-c7-c7").matthews > score(&spec, "id-id-c7-c7-c7").matthews);
        assert!(score(&spec, "id-c7-c7-c7-c7").matthews > score(&spec, "c3-c7-c7-c7-c7").matthews);
    }

    #[test]
    fn noise_is_seeded() {
        let lib = default_library();
        let spec = SurrogateSpec::new(SurrogateKind::NoisyTarget, lib.decode("c3-c3").unwrap(), 0.1).unwrap();
        let eval = |seed| evaluate_surrogate(&request("c3-c1", seed), &spec, &lib, InputShape::new(8, 8, 1), 10);
        assert_eq!(eval(5), eval(5));
        assert_ne!(eval(5).matthews, eval(6).matthews);
        assert!(eval(5).matthews >= -1.0 && eval(5).matthews <= 1.0);
        assert!(SurrogateSpec::new(SurrogateKind::NoisyTarget, vec![], -1.0).is_err());
    }

    #[test]
    fn reports_parameter_counts() {
        let lib = default_library();
        let spec = SurrogateSpec::target_match(vec![2]);
        let r = score(&spec, "c3");
        let arch = CandidateArchitecture::new(vec![2], vec![], 32, InputShape::new(16, 16, 1)).unwrap();
        assert_eq!(r.parameter_count, parameter_count(&arch, &lib, 10));
    }
}
