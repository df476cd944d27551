//! Architecture search by estimating network structure distributions.
//!
//! The search state is a *prototype*: an `N x |L|` row-stochastic matrix
//! holding an independent categorical distribution over the layer library
//! for each of the `N` network positions. Each iteration samples candidate
//! networks from the prototype, evaluates them, keeps the best `K_s`, and
//! re-estimates every row as the marginal frequencies among the survivors.
//! Probability capping and prototype inversion keep the search from locking
//! in early choices; fixed shortcut patterns add skip connections to every
//! sampled network.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the crate root fix it to `f64`, which is what the CLI uses.
//!
//! ```
//! use ased::{default_library, CapConfig, Prototype};
//!
//! let library = default_library();
//! let cap = CapConfig::new(0.9, library.size()).unwrap();
//! let p = Prototype::one_hot(&[2, 7], library.size()).unwrap().cap_normalize(&cap);
//! assert!((p.get(0, 2) - 0.9).abs() < 1e-12);
//! assert_eq!(library.encode(&p.argmax_architecture()), "c3-m2");
//! ```

pub mod architecture;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod library;
pub mod metrics;
pub mod prototype;
pub mod rundir;
pub mod scalar;
pub mod search;
pub mod seed;

pub use architecture::{
    effective_depth, generate_residual, generate_semi_dense, parameter_count, trace_shapes, CandidateArchitecture,
    InfeasibilityPolicy, InputShape, PatternKind, ShapeTrace, ShortcutPattern,
};
pub use error::{Error, Result};
pub use library::{default_library, LayerKind, LayerLibrary, LayerType};
pub use metrics::{
    accuracy, matthews_multiclass, rank_candidates, ConfusionMatrix, EvaluationResult, EvaluationStatus,
};
pub use scalar::Scalar;
pub use search::{growth_for, max_depth, GrowthSchedule, StopReason, Variant};

/// Double-precision prototype.
pub type Prototype = prototype::Prototype<f64>;
/// Single-precision prototype.
pub type Prototype32 = prototype::Prototype<f32>;
pub type CapConfig = prototype::CapConfig<f64>;
pub type CapConfig32 = prototype::CapConfig<f32>;
pub type SearchConfig = search::SearchConfig<f64>;
pub type SearchConfig32 = search::SearchConfig<f32>;
pub type SearchState = search::SearchState<f64>;
pub type SearchOutcome = search::SearchOutcome<f64>;
