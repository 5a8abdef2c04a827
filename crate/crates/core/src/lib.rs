//! Robust gradient boosting for regression.
//!
//! The robust fit runs in two stages. The first boosts a tree ensemble to
//! minimise an M-estimator of residual scale, starting from a least-absolute
//! deviation tree. The second keeps that scale fixed and continues boosting on
//! a bounded, high-efficiency loss. Validation losses pick the stopping point
//! of each stage.
//!
//! Four comparison boosters, robust permutation importance, a simulation
//! generator and a benchmark harness are included.

pub mod baselines;
pub mod bench;
pub mod boosting;
pub mod config;
pub mod data;
pub mod error;
pub mod fit;
pub mod importance;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod mscale;
pub mod mstage;
pub mod sboost;
pub mod simgen;
pub mod stats;
pub mod tree;

pub use boosting::{Ensemble, FitTrace};
pub use config::BoostConfig;
pub use data::{Dataset, Matrix};
pub use error::{Error, Result};
pub use fit::{fit, fit_many, FitOutcome, Method};
pub use losses::LossSpec;
pub use model::ModelFile;
