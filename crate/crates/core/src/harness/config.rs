use serde::{Deserialize, Serialize};

use crate::datasets::ToyConfig;
use crate::density_ratio::UlsifConfig;
use crate::learners::{LearnerSpec, LossKind};
use crate::surrogate_bo::{BoConfig, GpConfig, SearchSpace};
use crate::{Error, Result};

/// How the target objective is estimated inside the BO loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Mean loss on labeled target data. Needs target labels.
    Oracle,
    /// Unweighted mean over the pooled source validation folds.
    Naive,
    /// Importance-weighted, `lambda_j = 1/n`.
    Unbiased,
    /// Importance-weighted with divergence-based optimal `lambda`.
    #[serde(alias = "vr")]
    VarianceReduced,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [
        EstimatorKind::Oracle,
        EstimatorKind::Naive,
        EstimatorKind::Unbiased,
        EstimatorKind::VarianceReduced,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Oracle => "oracle",
            EstimatorKind::Naive => "naive",
            EstimatorKind::Unbiased => "unbiased",
            EstimatorKind::VarianceReduced => "variance_reduced",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "oracle" => Ok(Self::Oracle),
            "naive" => Ok(Self::Naive),
            "unbiased" | "ub" => Ok(Self::Unbiased),
            "variance_reduced" | "variance-reduced" | "vr" => Ok(Self::VarianceReduced),
            other => Err(Error::config("estimator", format!("unknown estimator {other:?}"))),
        }
    }

    pub fn needs_target_labels(self) -> bool {
        self == EstimatorKind::Oracle
    }
}

fn default_density_frac() -> f64 {
    0.3
}
fn default_train_frac() -> f64 {
    0.7
}

/// Per-source fold fractions: `density` of each source, then
/// `train_of_rest` of the remainder for training, the rest for validation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    #[serde(default = "default_density_frac")]
    pub density: f64,
    #[serde(default = "default_train_frac")]
    pub train_of_rest: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            density: default_density_frac(),
            train_of_rest: default_train_frac(),
        }
    }
}

fn default_target_train_frac() -> f64 {
    0.7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Toy(ToyConfig),
    Csv {
        /// Labeled target file; only the features of the training share enter the pipeline.
        target_path: String,
        source_paths: Vec<String>,
        label_column: String,
        /// Share of target rows whose features are used for density-ratio fitting;
        /// the remaining rows' labels score the final model.
        #[serde(default = "default_target_train_frac")]
        target_train_frac: f64,
    },
}

fn default_budget() -> usize {
    50
}
fn default_n_init() -> usize {
    5
}
fn default_beta() -> f64 {
    2.0
}

/// A complete experiment description; the `run` subcommand reads it from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub estimator: EstimatorKind,
    pub learner: LearnerSpec,
    pub loss: LossKind,
    pub space: SearchSpace,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_n_init")]
    pub n_init: usize,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub gp: GpConfig,
    #[serde(default)]
    pub split: SplitFractions,
    #[serde(default)]
    pub ulsif: UlsifConfig,
    pub seeds: Vec<u64>,
    pub data: DataSource,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn bo(&self) -> BoConfig {
        BoConfig {
            budget: self.budget,
            n_init: self.n_init,
            beta: self.beta,
            gp: self.gp.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "need at least one seed"));
        }
        if self.space.len() != 1 {
            return Err(Error::config("space", "built-in learners take exactly one hyperparameter"));
        }
        self.bo().validate()?;
        self.ulsif.validate()?;
        crate::datasets::split_sizes(1000, self.split.density, self.split.train_of_rest)
            .map_err(|e| Error::config("split", e.to_string()))?;
        match &self.data {
            DataSource::Toy(t) => t.validate()?,
            DataSource::Csv {
                source_paths,
                target_train_frac,
                ..
            } => {
                if source_paths.is_empty() {
                    return Err(Error::config("data.csv.source_paths", "need at least one source"));
                }
                if !(*target_train_frac > 0.0 && *target_train_frac < 1.0) {
                    return Err(Error::config("data.csv.target_train_frac", "must be in (0, 1)"));
                }
            }
        }
        Ok(())
    }
}

/// The synthetic sweep over source half-widths driven by the `toy` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToySweepConfig {
    pub c_values: Vec<f64>,
    pub c_target: f64,
    pub k: usize,
    pub n: usize,
    pub seeds: Vec<u64>,
    pub estimators: Vec<EstimatorKind>,
    pub bo: BoConfig,
    pub split: SplitFractions,
    pub ulsif: UlsifConfig,
}

impl Default for ToySweepConfig {
    fn default() -> Self {
        Self {
            c_values: vec![1.0, 2.0, 3.0, 4.0, 5.0],
            c_target: 1.0,
            k: 2,
            n: 1000,
            seeds: (0..30).collect(),
            estimators: EstimatorKind::ALL.to_vec(),
            bo: BoConfig::default(),
            split: SplitFractions::default(),
            ulsif: UlsifConfig::default(),
        }
    }
}
