use log::warn;

use crate::datasets::{LabeledDataset, SourceSplit, UnlabeledDataset};
use crate::density_ratio::DensityRatioModel;
use crate::estimators::{
    empirical_target_objective, lambda_unbiased_estimate, uniform_weights, vr_weights,
    DivergenceEstimate, EstimatorDiagnostics, SourceWeighting, TaskDiagnostics, TaskLosses, WeightedLossTable,
};
use crate::learners::{loss, train_weighted, LearnerSpec, LossKind, TrainedModel, WeightedFold};
use crate::numeric::mean;
use crate::surrogate_bo::{Evaluation, HyperParams};
use crate::{Error, Result};

use super::EstimatorKind;

struct Fold {
    data: LabeledDataset,
    ratios: Vec<f64>,
    clipped: f64,
}

/// The target-objective estimate `theta -> score` handed to the BO loop.
///
/// Density ratios on the train and validation folds are computed once at
/// construction. Target labels are only held for [`EstimatorKind::Oracle`].
pub struct TargetObjective {
    kind: EstimatorKind,
    learner: LearnerSpec,
    loss: LossKind,
    train: Vec<Fold>,
    val: Vec<Fold>,
    oracle_target: Option<LabeledDataset>,
}

/// Builds the objective for `kind`.
///
/// `oracle_target` must be present exactly when `kind` is the oracle; passing
/// target labels to any other estimator is rejected.
pub fn build_objective(
    kind: EstimatorKind,
    splits: &[SourceSplit],
    ratios: &[DensityRatioModel],
    target: &UnlabeledDataset,
    oracle_target: Option<&LabeledDataset>,
    learner: LearnerSpec,
    loss: LossKind,
) -> Result<TargetObjective> {
    match (kind.needs_target_labels(), oracle_target.is_some()) {
        (true, false) => return Err(Error::config("estimator", "oracle needs labeled target data")),
        (false, true) => {
            return Err(Error::config(
                "estimator",
                format!("{} must not see target labels", kind.name()),
            ))
        }
        _ => {}
    }
    if splits.is_empty() {
        return Err(Error::Input("no source tasks".into()));
    }
    if splits.len() != ratios.len() {
        return Err(Error::Input(format!(
            "{} source splits but {} ratio models",
            splits.len(),
            ratios.len()
        )));
    }
    let dim = target.features().dim();
    let mut train = Vec::with_capacity(splits.len());
    let mut val = Vec::with_capacity(splits.len());
    for (split, model) in splits.iter().zip(ratios) {
        if split.train.features().dim() != dim || model.dim() != dim {
            return Err(Error::Input(format!(
                "task {}: feature dimension does not match target ({dim})",
                split.train.task_id()
            )));
        }
        for (fold, out) in [(&split.train, &mut train), (&split.val, &mut val)] {
            let (ratios, clipped) = model.evaluate_rows(fold.features())?;
            out.push(Fold {
                data: fold.clone(),
                ratios,
                clipped,
            });
        }
    }
    Ok(TargetObjective {
        kind,
        learner,
        loss,
        train,
        val,
        oracle_target: oracle_target.cloned(),
    })
}

impl TargetObjective {
    pub fn kind(&self) -> EstimatorKind {
        self.kind
    }

    /// Trains at `theta` with the weighting `kind` prescribes.
    ///
    /// Oracle and naive train unweighted. Importance-weighted estimators use
    /// row weights `n_train * lambda_j * w(x)`, so uniform `lambda` reduces
    /// to plain `w(x)`. Variance reduction first trains with uniform
    /// `lambda`, estimates divergences on the train folds, and retrains once
    /// with the resulting optimal `lambda`.
    pub fn train(&self, theta: &HyperParams) -> Result<TrainedModel> {
        let n_train: Vec<usize> = self.train.iter().map(|f| f.data.len()).collect();
        match self.kind {
            EstimatorKind::Oracle | EstimatorKind::Naive => {
                let ones: Vec<Vec<f64>> = self.train.iter().map(|f| vec![1.0; f.data.len()]).collect();
                self.fit(theta, &ones)
            }
            EstimatorKind::Unbiased => self.fit_lambda(theta, &uniform_weights(&n_train)?),
            EstimatorKind::VarianceReduced => {
                let first = self.fit_lambda(theta, &uniform_weights(&n_train)?)?;
                let table = self.loss_table(&first, &self.train)?;
                let divs = DivergenceEstimate::from_raw(table.divergences())?;
                if divs.all_at_floor() {
                    return Ok(first);
                }
                self.fit_lambda(theta, &vr_weights(&divs, &n_train)?)
            }
        }
    }

    fn fit_lambda(&self, theta: &HyperParams, weighting: &SourceWeighting) -> Result<TrainedModel> {
        let total: usize = self.train.iter().map(|f| f.data.len()).sum();
        let weights: Vec<Vec<f64>> = self
            .train
            .iter()
            .zip(weighting.lambda())
            .map(|(f, &l)| f.ratios.iter().map(|w| total as f64 * l * w).collect())
            .collect();
        self.fit(theta, &weights)
    }

    fn fit(&self, theta: &HyperParams, weights: &[Vec<f64>]) -> Result<TrainedModel> {
        let folds: Vec<WeightedFold<'_>> = self
            .train
            .iter()
            .zip(weights)
            .map(|(f, w)| WeightedFold {
                data: &f.data,
                weights: w,
            })
            .collect();
        train_weighted(self.learner, theta, &folds, self.loss)
    }

    fn losses(&self, model: &TrainedModel, data: &LabeledDataset) -> Result<Vec<f64>> {
        data.features()
            .rows()
            .zip(data.labels())
            .map(|(x, &y)| loss(self.loss, model.predict(x)?, y))
            .collect()
    }

    fn loss_table(&self, model: &TrainedModel, folds: &[Fold]) -> Result<WeightedLossTable> {
        let tasks = folds
            .iter()
            .map(|f| TaskLosses::new(self.losses(model, &f.data)?, f.ratios.clone()))
            .collect::<Result<Vec<_>>>()?;
        WeightedLossTable::new(tasks)
    }

    /// Scores an already-trained model on the validation folds (or, for the
    /// oracle, on the labeled target).
    pub fn score(&self, model: &TrainedModel) -> Result<Evaluation> {
        match self.kind {
            EstimatorKind::Oracle => {
                let target = self
                    .oracle_target
                    .as_ref()
                    .ok_or_else(|| Error::config("estimator", "oracle needs labeled target data"))?;
                Ok(empirical_target_objective(&self.losses(model, target)?)?.into())
            }
            EstimatorKind::Naive => {
                let mut pooled = Vec::new();
                for f in &self.val {
                    pooled.extend(self.losses(model, &f.data)?);
                }
                Ok(mean(&pooled).into())
            }
            EstimatorKind::Unbiased | EstimatorKind::VarianceReduced => {
                let table = self.loss_table(model, &self.val)?;
                let n_val = table.n_per_task();
                let raw = table.divergences();
                let divs = DivergenceEstimate::from_raw(raw)?;
                let mut fallback = false;
                let weighting = if self.kind == EstimatorKind::Unbiased {
                    uniform_weights(&n_val)?
                } else if divs.all_at_floor() {
                    warn!("all divergence estimates at the floor; using uniform weights");
                    fallback = true;
                    uniform_weights(&n_val)?
                } else {
                    vr_weights(&divs, &n_val)?
                };
                let score = lambda_unbiased_estimate(&table, &weighting)?;
                let tasks = weighting
                    .lambda()
                    .iter()
                    .zip(divs.raw().iter().zip(divs.floored()))
                    .zip(&self.val)
                    .map(|((&lambda, (&div_raw, &div_floored)), f)| TaskDiagnostics {
                        lambda,
                        div_raw,
                        div_floored,
                        clipped_fraction: f.clipped,
                    })
                    .collect();
                Ok(Evaluation {
                    score,
                    diagnostics: Some(EstimatorDiagnostics {
                        tasks,
                        uniform_fallback: fallback,
                    }),
                })
            }
        }
    }

    pub fn evaluate(&self, theta: &HyperParams) -> Result<Evaluation> {
        let model = self.train(theta)?;
        self.score(&model)
    }

    /// Per-task divergence of the validation losses at `theta`.
    pub fn divergences(&self, theta: &HyperParams) -> Result<Vec<f64>> {
        let model = self.train(theta)?;
        Ok(self.loss_table(&model, &self.val)?.divergences())
    }
}
