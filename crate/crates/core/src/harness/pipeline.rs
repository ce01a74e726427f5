use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::{
    generate_toy, load_csv, split_source, Dataset, LabeledDataset, SourceSplit, ToyConfig, UnlabeledDataset,
};
use crate::density_ratio::{fit_ulsif, DensityRatioModel, UlsifConfig};
use crate::estimators::empirical_target_objective;
use crate::learners::{loss, LearnerSpec, LossKind};
use crate::numeric::{derive_seed, mean_and_se};
use crate::surrogate_bo::{run_bo, BoConfig, BoHistory, HyperParams, SearchSpace};
use crate::{Error, Result};

use super::objective::build_objective;
use super::toy::toy_true_objective;
use super::{DataSource, EstimatorKind, RunConfig, SplitFractions};

const STREAM_SPLIT: u64 = 1000;
const STREAM_ULSIF: u64 = 2000;
const STREAM_BO: u64 = 3000;
const STREAM_TARGET_SPLIT: u64 = 4000;

/// What the final hyperparameters are judged against. Never reaches the
/// objective of a non-oracle estimator.
#[derive(Debug, Clone)]
pub enum GroundTruth {
    /// Synthetic target with known generating parameters plus its labels.
    Toy {
        mu: f64,
        slope: f64,
        intercept: f64,
        noise_sd: f64,
        labeled: LabeledDataset,
    },
    /// Held-out labeled target rows.
    Holdout(LabeledDataset),
}

impl GroundTruth {
    fn labeled(&self) -> &LabeledDataset {
        match self {
            GroundTruth::Toy { labeled, .. } | GroundTruth::Holdout(labeled) => labeled,
        }
    }
}

/// One seed's data: split sources, fitted ratio models and the target.
/// Shared by every estimator run on that seed.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub seed: u64,
    pub target: UnlabeledDataset,
    pub splits: Vec<SourceSplit>,
    pub ratios: Vec<DensityRatioModel>,
    /// Labeled target visible to the oracle estimator only.
    oracle_target: LabeledDataset,
    truth: GroundTruth,
}

impl PreparedData {
    pub fn truth(&self) -> &GroundTruth {
        &self.truth
    }

    /// Labeled target data; the oracle's privilege.
    pub fn oracle_target(&self) -> &LabeledDataset {
        &self.oracle_target
    }
}

fn split_and_fit(
    target: &UnlabeledDataset,
    sources: &[LabeledDataset],
    split: SplitFractions,
    ulsif: &UlsifConfig,
    seed: u64,
) -> Result<(Vec<SourceSplit>, Vec<DensityRatioModel>)> {
    let mut splits = Vec::with_capacity(sources.len());
    let mut ratios = Vec::with_capacity(sources.len());
    for (j, src) in sources.iter().enumerate() {
        let s = split_source(
            src,
            split.density,
            split.train_of_rest,
            derive_seed(seed, STREAM_SPLIT + j as u64),
        )
        .map_err(|e| e.at_stage(seed, "split"))?;
        let cfg = UlsifConfig {
            seed: derive_seed(derive_seed(seed, STREAM_ULSIF + j as u64), ulsif.seed),
            ..ulsif.clone()
        };
        let model = fit_ulsif(target, s.density.features(), &cfg).map_err(|e| e.at_stage(seed, "density_ratio"))?;
        debug!(
            "seed {seed} task {}: bandwidth {:.4}, ridge {:.0e}",
            src.task_id(),
            model.bandwidth(),
            model.ridge()
        );
        splits.push(s);
        ratios.push(model);
    }
    Ok((splits, ratios))
}

/// Generates the synthetic world for `seed` and fits one ratio model per source.
pub fn prepare_toy(toy: &ToyConfig, split: SplitFractions, ulsif: &UlsifConfig, seed: u64) -> Result<PreparedData> {
    let cfg = ToyConfig {
        seed: derive_seed(toy.seed, seed),
        ..toy.clone()
    };
    let data = generate_toy(&cfg).map_err(|e| e.at_stage(seed, "data"))?;
    let labeled = data.oracle_target()?;
    let (splits, ratios) = split_and_fit(&data.target, &data.sources, split, ulsif, seed)?;
    Ok(PreparedData {
        seed,
        target: data.target,
        splits,
        ratios,
        oracle_target: labeled.clone(),
        truth: GroundTruth::Toy {
            mu: data.target_mu,
            slope: cfg.slope,
            intercept: cfg.intercept,
            noise_sd: cfg.noise_sd,
            labeled,
        },
    })
}

fn load_labeled(path: &str, label_column: &str, task_id: usize) -> Result<LabeledDataset> {
    match load_csv(path, Some(label_column))? {
        Dataset::Labeled(d) => LabeledDataset::new(d.features().clone(), d.labels().to_vec(), task_id),
        Dataset::Unlabeled(_) => Err(Error::Ingestion {
            path: path.to_string(),
            reason: format!("no label column {label_column:?}"),
        }),
    }
}

/// Loads CSV tasks. The target is split once per seed: the training share's
/// features drive ratio fitting (and its labels the oracle), the rest is
/// held out for final scoring.
pub fn prepare_csv(
    target_path: &str,
    source_paths: &[String],
    label_column: &str,
    target_train_frac: f64,
    split: SplitFractions,
    ulsif: &UlsifConfig,
    seed: u64,
) -> Result<PreparedData> {
    let full = load_labeled(target_path, label_column, 0)?;
    let sources = source_paths
        .iter()
        .enumerate()
        .map(|(j, p)| load_labeled(p, label_column, j + 1))
        .collect::<Result<Vec<_>>>()?;
    let mut order: Vec<usize> = (0..full.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_TARGET_SPLIT)));
    let n_train = ((full.len() as f64) * target_train_frac + 1e-9).floor() as usize;
    if n_train == 0 || n_train == full.len() {
        return Err(Error::Split(format!(
            "target of {} rows cannot be split at {target_train_frac}",
            full.len()
        )));
    }
    let train = full.select(&order[..n_train]);
    let test = full.select(&order[n_train..]);
    let target = train.to_unlabeled()?;
    let (splits, ratios) = split_and_fit(&target, &sources, split, ulsif, seed)?;
    Ok(PreparedData {
        seed,
        target,
        splits,
        ratios,
        oracle_target: train,
        truth: GroundTruth::Holdout(test),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSummary {
    pub bandwidth: f64,
    pub ridge: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub incumbent: HyperParams,
    /// Estimated objective at the incumbent.
    pub incumbent_estimate: f64,
    /// True (toy) or held-out target loss of the final model.
    pub final_score: f64,
    /// `final_score` minus the optimum; only known for the analytic toy case.
    pub regret: Option<f64>,
    pub density_ratio: Vec<RatioSummary>,
    pub history: BoHistory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n_seeds: usize,
    pub mean_final_score: f64,
    pub se_final_score: f64,
    pub mean_regret: Option<f64>,
    pub se_regret: Option<f64>,
}

impl Aggregate {
    pub fn from_seeds(seeds: &[SeedReport]) -> Self {
        let scores: Vec<f64> = seeds.iter().map(|s| s.final_score).collect();
        let (mean_final_score, se_final_score) = mean_and_se(&scores);
        let regrets: Option<Vec<f64>> = seeds.iter().map(|s| s.regret).collect();
        let (mean_regret, se_regret) = match regrets {
            Some(r) if !r.is_empty() => {
                let (m, se) = mean_and_se(&r);
                (Some(m), Some(se))
            }
            _ => (None, None),
        };
        Self {
            n_seeds: seeds.len(),
            mean_final_score,
            se_final_score,
            mean_regret,
            se_regret,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub estimator: EstimatorKind,
    pub seeds: Vec<SeedReport>,
    pub aggregate: Aggregate,
}

impl RunReport {
    /// Writes `estimator,c,seed,regret,final_score` with an empty `c` column.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = regrets_writer(out)?;
        self.append_rows(&mut w, None)?;
        w.flush()?;
        Ok(())
    }

    pub(super) fn append_rows<W: std::io::Write>(&self, w: &mut csv::Writer<W>, c: Option<f64>) -> Result<()> {
        for s in &self.seeds {
            w.write_record([
                self.estimator.name().to_string(),
                c.map(|c| c.to_string()).unwrap_or_default(),
                s.seed.to_string(),
                s.regret.map(|r| r.to_string()).unwrap_or_default(),
                s.final_score.to_string(),
            ])
            .map_err(csv_err)?;
        }
        Ok(())
    }

    pub fn new(estimator: EstimatorKind, seeds: Vec<SeedReport>) -> Self {
        let aggregate = Aggregate::from_seeds(&seeds);
        Self {
            estimator,
            seeds,
            aggregate,
        }
    }
}

pub(super) fn regrets_writer<W: std::io::Write>(out: W) -> Result<csv::Writer<W>> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["estimator", "c", "seed", "regret", "final_score"])
        .map_err(csv_err)?;
    Ok(w)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Runs BO with estimator `kind` on an already prepared world and scores the
/// incumbent against the ground truth.
pub fn run_prepared(
    world: &PreparedData,
    kind: EstimatorKind,
    learner: LearnerSpec,
    loss_kind: LossKind,
    space: &SearchSpace,
    bo: &BoConfig,
) -> Result<SeedReport> {
    let seed = world.seed;
    let oracle = kind.needs_target_labels().then_some(&world.oracle_target);
    let objective = build_objective(kind, &world.splits, &world.ratios, &world.target, oracle, learner, loss_kind)
        .map_err(|e| e.at_stage(seed, "objective"))?;
    let history = run_bo(|theta| objective.evaluate(theta), space, bo, derive_seed(seed, STREAM_BO))
        .map_err(|e| e.at_stage(seed, "bo"))?;
    let best = history.incumbent();
    if !best.score.is_finite() {
        return Err(Error::Numeric("every trial failed".into()).at_stage(seed, "bo"));
    }
    let theta = best.theta.clone();
    let analytic = match (&world.truth, learner, loss_kind) {
        (
            GroundTruth::Toy {
                mu,
                slope,
                intercept,
                noise_sd,
                ..
            },
            LearnerSpec::ConstantPredictor,
            LossKind::SquaredHalf,
        ) => Some((
            toy_true_objective(theta.values()[0], *mu, *slope, *intercept, *noise_sd),
            (slope * slope + noise_sd * noise_sd) / 2.0,
        )),
        _ => None,
    };
    let (final_score, regret) = match analytic {
        Some((f, f_star)) => (f, Some(f - f_star)),
        None => {
            let model = objective.train(&theta).map_err(|e| e.at_stage(seed, "final"))?;
            let held = world.truth.labeled();
            let losses = held
                .features()
                .rows()
                .zip(held.labels())
                .map(|(x, &y)| loss(loss_kind, model.predict(x)?, y))
                .collect::<Result<Vec<_>>>()?;
            (empirical_target_objective(&losses)?, None)
        }
    };
    info!(
        "seed {seed} {}: theta {:?}, final {final_score:.5}",
        kind.name(),
        theta.values()
    );
    Ok(SeedReport {
        seed,
        incumbent: theta,
        incumbent_estimate: best.score,
        final_score,
        regret,
        density_ratio: world
            .ratios
            .iter()
            .map(|m| RatioSummary {
                bandwidth: m.bandwidth(),
                ridge: m.ridge(),
            })
            .collect(),
        history,
    })
}

fn prepare(config: &RunConfig, seed: u64) -> Result<PreparedData> {
    match &config.data {
        DataSource::Toy(toy) => prepare_toy(toy, config.split, &config.ulsif, seed),
        DataSource::Csv {
            target_path,
            source_paths,
            label_column,
            target_train_frac,
        } => prepare_csv(
            target_path,
            source_paths,
            label_column,
            *target_train_frac,
            config.split,
            &config.ulsif,
            seed,
        ),
    }
}

/// Full pipeline for every configured seed, in parallel; results keep seed order.
pub fn run_mscs(config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    let bo = config.bo();
    let seeds = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let world = prepare(config, seed)?;
            run_prepared(&world, config.estimator, config.learner, config.loss, &config.space, &bo)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RunReport::new(config.estimator, seeds))
}
