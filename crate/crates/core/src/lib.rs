//! Natural direct and indirect effect estimation for causal mediation
//! analysis.
//!
//! Five estimators map a [`Dataset`] of covariates `X`, binary treatment
//! `T`, mediators `M` and outcome `Y` to the effects `τ`, `θ(0)`, `θ(1)`,
//! `δ(0)` and `δ(1)`:
//!
//! * coefficient product (linear structural models),
//! * G-computation (explicit integration for a binary mediator, nested
//!   regressions otherwise),
//! * normalized inverse probability weighting,
//! * multiply-robust (binary mediator),
//! * double machine learning.
//!
//! Nuisance models are linear (optionally ridge-tuned by cross-validation)
//! or random forests, with optional cross-fitting and calibration; see
//! [`NuisanceSpec`]. The [`simulation`] module generates data with known
//! effects and [`benchmark`] runs estimator grids over it.
//!
//! ```
//! use medestim::{estimate, simulation, EstimatorId, NuisanceSpec};
//!
//! let setting = simulation::make_setting(1, 500).unwrap();
//! let ds = simulation::generate_dataset(&setting, 42).unwrap();
//! let report = estimate(EstimatorId::Dml, &ds, &NuisanceSpec::default()).unwrap();
//! let e = report.effects;
//! assert!((e.total - (e.direct_0 + e.indirect_1)).abs() < 1e-9);
//! ```

pub mod analyze;
pub mod benchmark;
pub mod data;
pub mod error;
pub mod estimators;
pub mod inference;
pub mod io;
pub mod nuisance;
pub mod rng;
pub mod simulation;

pub use data::{validate_dataset, Dataset, Effect, EffectEstimates, MediatorKind, TrueEffects};
pub use error::{Error, Result};
pub use estimators::{estimate, EstimateReport, EstimatorId};
pub use inference::{bootstrap_ci, BootstrapResult};
pub use nuisance::{ModelFamily, NuisanceSpec};
