use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::ToyConfig;
use crate::learners::{LearnerSpec, LossKind};
use crate::surrogate_bo::{BoHistory, Dim, HyperParams, SearchSpace};
use crate::{Error, Result};

use super::pipeline::{prepare_toy, regrets_writer, run_prepared, RunReport, SeedReport};
use super::{EstimatorKind, ToySweepConfig};

/// Search interval for the constant predictor on the synthetic task.
pub const TOY_THETA_RANGE: (f64, f64) = (-8.0, 8.0);

/// Expected half squared error of predicting `theta` on a target centred at `mu`:
/// `((theta - (slope mu + intercept))^2 + slope^2 + noise_sd^2) / 2`.
pub fn toy_true_objective(theta: f64, mu: f64, slope: f64, intercept: f64, noise_sd: f64) -> f64 {
    let shift = theta - (slope * mu + intercept);
    (shift * shift + slope * slope + noise_sd * noise_sd) / 2.0
}

/// `f(incumbent) - f_star` under the true objective `f`.
pub fn compute_regret(history: &BoHistory, true_objective: impl Fn(&HyperParams) -> f64, f_star: f64) -> f64 {
    true_objective(&history.incumbent().theta) - f_star
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub c: f64,
    pub report: RunReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToySweepReport {
    pub config: ToySweepConfig,
    pub entries: Vec<SweepEntry>,
}

impl ToySweepReport {
    pub fn entry(&self, c: f64, kind: EstimatorKind) -> Option<&RunReport> {
        self.entries
            .iter()
            .find(|e| e.c == c && e.report.estimator == kind)
            .map(|e| &e.report)
    }

    /// Writes `estimator,c,seed,regret,final_score`, one row per run.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = regrets_writer(out)?;
        for e in &self.entries {
            e.report.append_rows(&mut w, Some(e.c))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs every estimator on every `(c, seed)` world. Worlds are generated once
/// and shared across estimators; the work is parallel over worlds and the
/// report order is fixed (`c`, then estimator, then seed).
pub fn run_toy_sweep(cfg: &ToySweepConfig) -> Result<ToySweepReport> {
    if cfg.c_values.is_empty() || cfg.seeds.is_empty() || cfg.estimators.is_empty() {
        return Err(Error::config("sweep", "c values, seeds and estimators must be non-empty"));
    }
    cfg.bo.validate()?;
    cfg.ulsif.validate()?;
    let space = SearchSpace::new(vec![Dim::linear("theta", TOY_THETA_RANGE.0, TOY_THETA_RANGE.1)])?;
    let toys = cfg
        .c_values
        .iter()
        .map(|&c| {
            let t = ToyConfig::new(cfg.k, cfg.n, c, cfg.c_target, 0);
            t.validate().map(|_| t)
        })
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, u64)> = (0..toys.len())
        .flat_map(|ci| cfg.seeds.iter().map(move |&s| (ci, s)))
        .collect();
    let results: Vec<Vec<SeedReport>> = jobs
        .par_iter()
        .map(|&(ci, seed)| {
            let world = prepare_toy(&toys[ci], cfg.split, &cfg.ulsif, seed)?;
            cfg.estimators
                .iter()
                .map(|&kind| {
                    run_prepared(
                        &world,
                        kind,
                        LearnerSpec::ConstantPredictor,
                        LossKind::SquaredHalf,
                        &space,
                        &cfg.bo,
                    )
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let n_seeds = cfg.seeds.len();
    let mut entries = Vec::with_capacity(cfg.c_values.len() * cfg.estimators.len());
    for (ci, &c) in cfg.c_values.iter().enumerate() {
        for (ei, &kind) in cfg.estimators.iter().enumerate() {
            let seeds = results[ci * n_seeds..(ci + 1) * n_seeds]
                .iter()
                .map(|per_kind| per_kind[ei].clone())
                .collect();
            entries.push(SweepEntry {
                c,
                report: RunReport::new(kind, seeds),
            });
        }
    }
    Ok(ToySweepReport {
        config: cfg.clone(),
        entries,
    })
}
