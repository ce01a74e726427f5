//! Gaussian-process Bayesian optimization: search space, Matérn-5/2 surrogate,
//! lower-confidence-bound acquisition and the sequential loop.

mod bo;
mod gp;
mod space;

pub use bo::{
    acquisition_lcb, propose_next, propose_next_unit, run_bo, BoConfig, BoHistory, Evaluation, Trial,
    N_CANDIDATES, N_REFINE_PASSES, N_REFINE_STARTS,
};
pub use gp::{gp_fit, gp_predict, matern52, GpConfig, GpSurrogate, KernelParams};
pub use space::{Dim, HyperParams, Scale, SearchSpace};
