//! Run configuration files.
//!
//! A run is described by one TOML file. Every value not given falls back to
//! the named `profile`: `paper-default` (5 initial layers, K=1000, K_s=100,
//! 10000 initial samples) or `paper-modified` (2 initial layers, K=100,
//! K_s=10). Set `k_init = 0` to sample `k` candidates in the first iteration
//! too.
//!
//! ```toml
//! profile = "paper-modified"
//!
//! [search]
//! t_max = 8
//! k = 200
//! k_s = 20
//! growth = { fixed = 0 }
//! variant = "full_inversion"
//! seed = 7
//!
//! [shortcuts]
//! kind = "residual"
//! d = 2
//!
//! [evaluator]
//! kind = "surrogate"
//! surrogate = "target_match"
//! target = "c3-m2-c5-c1-a3"
//! ```

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::architecture::{InfeasibilityPolicy, InputShape, ShortcutPattern};
use crate::error::{Error, Result};
use crate::evaluation::{
    EvaluatorPool, ExternalWorker, Regime, SurrogateEvaluator, SurrogateKind, SurrogateSpec, WorkerCommand,
};
use crate::library::LayerLibrary;
use crate::prototype::CapConfig;
use crate::search::{GrowthSchedule, SearchConfig, Variant};

pub const PROFILE_DEFAULT: &str = "paper-default";
pub const PROFILE_MODIFIED: &str = "paper-modified";

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    profile: Option<String>,
    #[serde(default)]
    search: RawSearch,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shortcuts: Option<ShortcutPattern>,
    #[serde(default)]
    data: RawData,
    #[serde(skip_serializing_if = "Option::is_none")]
    evaluator: Option<RawEvaluator>,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSearch {
    #[serde(skip_serializing_if = "Option::is_none")]
    library: Option<LayerLibrary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_init: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_max: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    k_init: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    k_s: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    growth: Option<GrowthSchedule>,
    #[serde(skip_serializing_if = "Option::is_none")]
    variant: Option<Variant>,
    #[serde(skip_serializing_if = "Option::is_none")]
    p_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    inversion_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    infeasibility_policy: Option<InfeasibilityPolicy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    channels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_failure_ratio: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawData {
    #[serde(skip_serializing_if = "Option::is_none")]
    input_shape: Option<[usize; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    num_classes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dataset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    regime: Option<Regime>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawEvaluator {
    Surrogate {
        surrogate: SurrogateKind,
        target: String,
        #[serde(default)]
        noise_sigma: f64,
        #[serde(default = "one")]
        pool_size: usize,
    },
    External {
        command: Vec<String>,
        #[serde(default = "one")]
        pool_size: usize,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
}

fn one() -> usize {
    1
}

/// Per-evaluation limit for external workers when none is configured.
pub const DEFAULT_WORKER_TIMEOUT: Duration = Duration::from_secs(24 * 3600);

fn default_timeout() -> u64 {
    DEFAULT_WORKER_TIMEOUT.as_secs()
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    #[serde(skip_serializing_if = "Option::is_none")]
    dir: Option<PathBuf>,
}

/// Where candidate fitness comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum EvaluatorConfig {
    Surrogate {
        spec: SurrogateSpec,
        pool_size: usize,
    },
    External {
        command: Vec<String>,
        pool_size: usize,
        timeout: Duration,
    },
}

impl EvaluatorConfig {
    pub fn pool_size(&self) -> usize {
        match self {
            EvaluatorConfig::Surrogate { pool_size, .. } | EvaluatorConfig::External { pool_size, .. } => *pool_size,
        }
    }

    pub fn set_pool_size(&mut self, size: usize) {
        match self {
            EvaluatorConfig::Surrogate { pool_size, .. } | EvaluatorConfig::External { pool_size, .. } => {
                *pool_size = size
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub search: SearchConfig<f64>,
    pub evaluator: EvaluatorConfig,
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let config = resolve(raw)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.search.validate()?;
        match &self.evaluator {
            EvaluatorConfig::Surrogate { spec, pool_size } => {
                if *pool_size == 0 {
                    return Err(Error::Config("pool_size must be at least 1".into()));
                }
                SurrogateEvaluator::new(spec.clone(), self.search.library.clone(), self.search.input_shape, 2)?;
            }
            EvaluatorConfig::External { command, pool_size, .. } => {
                if command.is_empty() {
                    return Err(Error::Config("external evaluator needs a command".into()));
                }
                if *pool_size == 0 {
                    return Err(Error::Config("pool_size must be at least 1".into()));
                }
            }
        }
        Ok(())
    }

    /// Fully resolved TOML for the run directory; parsing it yields `self`.
    pub fn to_toml(&self) -> String {
        let s = &self.search;
        let raw = RawConfig {
            profile: None,
            search: RawSearch {
                library: Some(s.library.clone()),
                n_init: Some(s.n_init),
                t_max: Some(s.t_max),
                k: Some(s.k),
                k_init: Some(s.k_init.unwrap_or(0)),
                k_s: Some(s.k_s),
                growth: Some(s.growth.clone()),
                variant: Some(s.variant),
                p_max: s.cap.as_ref().map(|c| c.p_max()),
                inversion_threshold: Some(s.inversion_threshold),
                infeasibility_policy: Some(s.infeasibility_policy),
                seed: Some(s.seed),
                channels: Some(s.channels),
                max_failure_ratio: Some(s.max_failure_ratio),
            },
            shortcuts: Some(s.shortcut_pattern),
            data: RawData {
                input_shape: Some([s.input_shape.height, s.input_shape.width, s.input_shape.channels]),
                num_classes: Some(s.num_classes),
                dataset: Some(s.dataset.clone()),
                regime: Some(s.regime),
            },
            evaluator: Some(match &self.evaluator {
                EvaluatorConfig::Surrogate { spec, pool_size } => RawEvaluator::Surrogate {
                    surrogate: spec.kind,
                    target: s.library.encode(&spec.target),
                    noise_sigma: spec.noise_sigma,
                    pool_size: *pool_size,
                },
                EvaluatorConfig::External {
                    command,
                    pool_size,
                    timeout,
                } => RawEvaluator::External {
                    command: command.clone(),
                    pool_size: *pool_size,
                    timeout_secs: timeout.as_secs(),
                },
            }),
            output: RawOutput {
                dir: self.output_dir.clone(),
            },
        };
        toml::to_string(&raw).expect("config serializes")
    }

    /// Instantiates the evaluator pool. External workers are started and
    /// handshaken here.
    pub fn build_pool(&self) -> Result<EvaluatorPool> {
        let s = &self.search;
        match &self.evaluator {
            EvaluatorConfig::Surrogate { spec, pool_size } => {
                let eval = SurrogateEvaluator::new(spec.clone(), s.library.clone(), s.input_shape, s.num_classes)?;
                EvaluatorPool::replicated(eval, *pool_size)
            }
            EvaluatorConfig::External {
                command,
                pool_size,
                timeout,
            } => {
                let cmd = WorkerCommand::new(command, *timeout)
                    .ok_or_else(|| Error::Config("external evaluator needs a command".into()))?;
                let slots = (0..*pool_size)
                    .map(|_| {
                        ExternalWorker::spawn(cmd.clone())
                            .map(|w| Box::new(w) as Box<dyn crate::evaluation::Evaluator>)
                            .map_err(|e| Error::PoolExhausted(e.to_string()))
                    })
                    .collect::<Result<Vec<_>>>()?;
                EvaluatorPool::new(slots)
            }
        }
    }
}

fn resolve(raw: RawConfig) -> Result<RunConfig> {
    let mut s = match raw.profile.as_deref().unwrap_or(PROFILE_DEFAULT) {
        PROFILE_DEFAULT => SearchConfig::<f64>::default_profile(),
        PROFILE_MODIFIED => SearchConfig::<f64>::modified_profile(),
        other => {
            return Err(Error::Config(format!(
                "unknown profile `{other}` (expected {PROFILE_DEFAULT} or {PROFILE_MODIFIED})"
            )))
        }
    };
    let r = raw.search;
    if let Some(library) = r.library {
        s.library = library;
    }
    macro_rules! overlay {
        ($($field:ident),*) => { $( if let Some(v) = r.$field { s.$field = v; } )* };
    }
    overlay!(
        n_init,
        t_max,
        k,
        k_s,
        growth,
        variant,
        inversion_threshold,
        infeasibility_policy,
        seed,
        channels,
        max_failure_ratio
    );
    if let Some(k_init) = r.k_init {
        s.k_init = (k_init > 0).then_some(k_init);
    }
    let p_max = r.p_max.or(s.cap.as_ref().map(|c| c.p_max()));
    s.cap = p_max.map(|p| CapConfig::new(p, s.library.size())).transpose()?;

    if let Some(pattern) = raw.shortcuts {
        s.shortcut_pattern = pattern;
    }
    let d = raw.data;
    if let Some([h, w, c]) = d.input_shape {
        s.input_shape = InputShape::new(h, w, c);
    }
    if let Some(n) = d.num_classes {
        s.num_classes = n;
    }
    if let Some(ds) = d.dataset {
        s.dataset = ds;
    }
    if let Some(regime) = d.regime {
        s.regime = regime;
    }

    let evaluator = match raw.evaluator {
        None => return Err(Error::Config("missing [evaluator] section".into())),
        Some(RawEvaluator::Surrogate {
            surrogate,
            target,
            noise_sigma,
            pool_size,
        }) => EvaluatorConfig::Surrogate {
            spec: SurrogateSpec::new(surrogate, s.library.decode(&target)?, noise_sigma)?,
            pool_size,
        },
        Some(RawEvaluator::External {
            command,
            pool_size,
            timeout_secs,
        }) => EvaluatorConfig::External {
            command,
            pool_size,
            timeout: Duration::from_secs(timeout_secs),
        },
    };
    Ok(RunConfig {
        search: s,
        evaluator,
        output_dir: raw.output.dir,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SURROGATE: &str = r#"
profile = "paper-modified"

[search]
n_init = 5
t_max = 8
k = 200
k_s = 20
growth = { fixed = 0 }
seed = 3

[shortcuts]
kind = "residual"
d = 2

[evaluator]
kind = "surrogate"
surrogate = "target_match"
target = "c3-m2-c5-c1-a3"
pool_size = 4
"#;

    #[test]
    fn parses_surrogate_config() {
        let c = RunConfig::parse(SURROGATE).unwrap();
        assert_eq!(c.search.n_init, 5);
        assert_eq!(c.search.k, 200);
        assert_eq!(c.search.growth, GrowthSchedule::Fixed(0));
        assert_eq!(c.search.shortcut_pattern, ShortcutPattern::residual(2));
        assert_eq!(c.search.input_shape, InputShape::new(16, 16, 1));
        assert_eq!(c.search.cap.unwrap().p_max(), 0.9);
        assert_eq!(c.evaluator.pool_size(), 4);
        match &c.evaluator {
            EvaluatorConfig::Surrogate { spec, .. } => assert_eq!(spec.target, vec![2, 7, 3, 1, 9]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn snapshot_round_trips() {
        let c = RunConfig::parse(SURROGATE).unwrap();
        assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c);

        let external = r#"
[search]
variant = "partial_inversion"
growth = { steps = { steps = [3, 1], then = 0 } }
[evaluator]
kind = "external"
command = ["python3", "worker.py", "--dataset-root", "/data"]
timeout_secs = 60
"#;
        let c = RunConfig::parse(external).unwrap();
        assert_eq!(c.search.k_init, Some(10_000));
        assert_eq!(RunConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn profiles() {
        let base = "[evaluator]\nkind = \"surrogate\"\nsurrogate = \"target_match\"\ntarget = \"c3\"\n";
        let d = RunConfig::parse(base).unwrap();
        assert_eq!(
            (d.search.n_init, d.search.k, d.search.k_s, d.search.t_max),
            (5, 1000, 100, 9)
        );
        assert_eq!(d.search.k_init, Some(10_000));
        let m = RunConfig::parse(&format!("profile = \"paper-modified\"\n{base}")).unwrap();
        assert_eq!((m.search.n_init, m.search.k, m.search.k_s), (2, 100, 10));
        assert!(RunConfig::parse(&format!("profile = \"other\"\n{base}")).is_err());
        let no_init = RunConfig::parse(&format!("[search]\nk_init = 0\n{base}")).unwrap();
        assert_eq!(no_init.search.k_init, None);
    }

    #[test]
    fn rejects_invalid_configs() {
        let bad_ks = SURROGATE.replace("k_s = 20", "k_s = 200");
        assert!(matches!(RunConfig::parse(&bad_ks), Err(Error::Config(m)) if m.contains("k_s")));
        assert!(RunConfig::parse("[search]\nk = 10\n").is_err());
        assert!(RunConfig::parse(&SURROGATE.replace("seed = 3", "seed = 3\nbogus = 1")).is_err());
        assert!(RunConfig::parse(&SURROGATE.replace("c3-m2-c5-c1-a3", "c3-q9")).is_err());
        let empty_cmd = "[evaluator]\nkind = \"external\"\ncommand = []\n";
        assert!(RunConfig::parse(empty_cmd).is_err());
    }
}
