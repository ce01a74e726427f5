//! Hyperparameter optimization for an unlabeled target task using several
//! labeled source tasks whose input distributions differ from the target
//! (multi-source covariate shift).
//!
//! The target objective is estimated by importance-weighting source
//! validation losses with fitted density ratios, and the per-source weights
//! are chosen to minimize the variance of that estimate. A Gaussian-process
//! optimizer with a lower-confidence-bound acquisition drives the search.
//!
//! Module map:
//!
//! - [`datasets`]: data model, toy task generator, CSV ingestion, source splits
//! - [`density_ratio`]: uLSIF density-ratio fitting and evaluation
//! - [`estimators`]: λ-weighted unbiased estimators, task divergence, optimal weights
//! - [`learners`]: constant predictor, weighted ridge regression, losses
//! - [`surrogate_bo`]: search space, Matérn-5/2 GP, LCB acquisition, BO loop
//! - [`harness`]: end-to-end pipeline, toy experiment, reports

pub mod datasets;
pub mod density_ratio;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod learners;
mod numeric;
pub mod surrogate_bo;

pub use error::{Error, Result};
