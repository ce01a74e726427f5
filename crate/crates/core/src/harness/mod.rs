//! End-to-end orchestration: data preparation, objective estimators, the BO
//! run per seed, ground-truth evaluation and aggregated reports.

mod config;
mod objective;
mod pipeline;
mod table1;
mod toy;

pub use config::{DataSource, EstimatorKind, RunConfig, SplitFractions, ToySweepConfig};
pub use objective::{build_objective, TargetObjective};
pub use pipeline::{
    prepare_csv, prepare_toy, run_mscs, run_prepared, Aggregate, GroundTruth, PreparedData, RunReport, SeedReport,
};
pub use table1::{verify_table1, Check, Table1Report};
pub use toy::{compute_regret, run_toy_sweep, toy_true_objective, SweepEntry, ToySweepReport, TOY_THETA_RANGE};
