//! Contextual Importance and Utility (CIU) for black-box predictors, with
//! Shapley, LIME-style and permutation-importance baselines, a repeated-run
//! stability harness, a bagged tree ensemble and SVG/text renderers.
//!
//! ```
//! use ciu_core::{explain_instance, linear_reference_predictor, FeatureSpace, Instance,
//!     OutputSpec, OutputUtility, SeededRng};
//!
//! let space = FeatureSpace::unit_box(4).unwrap();
//! let utility = OutputUtility::new(vec![OutputSpec::declared("y", 0.0, 1.0)]).unwrap();
//! let x = Instance::new(vec![0.5; 4]);
//! let e = explain_instance(&linear_reference_predictor(), &utility, &space, &x, 0, 100, 0.5,
//!     &SeededRng::new(42)).unwrap();
//! assert!((e.ci()[0] - 0.4).abs() < 1e-9);
//! ```

pub mod baselines;
pub mod ciu;
pub mod error;
pub mod global;
pub mod model;
pub mod render;
pub mod report;
pub mod sampling;
pub mod stability;
pub mod stats;
pub mod tabular;

pub use baselines::{
    lime_surrogate, permutation_importance, shapley_enumerate, shapley_mc, AttributionMethod,
    AttributionVector, LimeConfig, LossSpec,
};
pub use ciu::{
    ceteris_paribus_curve, contextual_importance, contextual_influence, contextual_utility,
    explain_instance, CiuExplainer, CiuValue, Explanation, DEFAULT_PHI0, DEFAULT_SAMPLES,
};
pub use error::{Error, Result};
pub use global::{run_global, GlobalImportance, GlobalMethod, GlobalProtocol, InstanceSource};
pub use model::{
    linear_reference_predictor, nonlinear_reference_predictor, FeatureKind, FeatureSpace,
    FeatureSpec, Instance, ModelConfig, OutputRange, OutputSpec, OutputUtility, Predictor,
};
pub use sampling::{build_sample_set, derive_seed, SampleSet, SeededRng};
pub use stability::{run_stability, Budgets, StabilityConfig, StabilityReport};
