//! Models trained by weighted empirical risk minimization, and the loss functions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::datasets::LabeledDataset;
use crate::surrogate_bo::HyperParams;
use crate::{Error, Result};

/// Predictions fed to binary cross-entropy are clipped into `[BCE_EPS, 1 - BCE_EPS]`.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `(p - y)^2 / 2`
    SquaredHalf,
    Squared,
    AbsoluteError,
    BinaryCrossEntropy,
    /// Thresholds the prediction at 0.5.
    ZeroOne,
}

pub fn loss(kind: LossKind, prediction: f64, label: f64) -> Result<f64> {
    let r = prediction - label;
    Ok(match kind {
        LossKind::SquaredHalf => 0.5 * r * r,
        LossKind::Squared => r * r,
        LossKind::AbsoluteError => r.abs(),
        LossKind::BinaryCrossEntropy => {
            let p = prediction.clamp(BCE_EPS, 1.0 - BCE_EPS);
            if label == 1.0 {
                -p.ln()
            } else if label == 0.0 {
                -(1.0 - p).ln()
            } else {
                return Err(Error::Input(format!("cross-entropy label {label} is not 0 or 1")));
            }
        }
        LossKind::ZeroOne => {
            let class = if prediction >= 0.5 { 1.0 } else { 0.0 };
            if class == label {
                0.0
            } else {
                1.0
            }
        }
    })
}

/// Which model `h_theta` the hyperparameters configure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerSpec {
    /// The single hyperparameter is the prediction itself.
    ConstantPredictor,
    /// Linear model with an unpenalized intercept; the single hyperparameter
    /// is the ridge coefficient.
    WeightedRidge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainedModel {
    Constant(f64),
    Linear { coef: Vec<f64>, intercept: f64 },
}

impl TrainedModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        match self {
            TrainedModel::Constant(c) => Ok(*c),
            TrainedModel::Linear { coef, intercept } => {
                if x.len() != coef.len() {
                    return Err(Error::Input(format!(
                        "point has dimension {}, model expects {}",
                        x.len(),
                        coef.len()
                    )));
                }
                Ok(intercept + coef.iter().zip(x).map(|(b, v)| b * v).sum::<f64>())
            }
        }
    }
}

pub fn predict(model: &TrainedModel, x: &[f64]) -> Result<f64> {
    model.predict(x)
}

/// One training fold with its per-row weights.
#[derive(Debug, Clone, Copy)]
pub struct WeightedFold<'a> {
    pub data: &'a LabeledDataset,
    pub weights: &'a [f64],
}

/// Trains `spec` at hyperparameters `theta` on the pooled weighted folds.
///
/// The ridge learner solves `(X^T W X + reg D) beta = X^T W y` with `X`
/// augmented by a column of ones and `D` the identity except for a zero on
/// the intercept. It always fits squared error; `loss` is only used to
/// validate labels (cross-entropy needs 0/1 labels).
pub fn train_weighted(spec: LearnerSpec, theta: &HyperParams, folds: &[WeightedFold<'_>], loss: LossKind) -> Result<TrainedModel> {
    let value = *theta
        .values()
        .first()
        .ok_or_else(|| Error::Input("learner needs one hyperparameter".into()))?;
    if !value.is_finite() {
        return Err(Error::Input(format!("hyperparameter {value} is not finite")));
    }
    let mut any_positive = false;
    for fold in folds {
        if fold.weights.len() != fold.data.len() {
            return Err(Error::Input(format!(
                "task {}: {} weights for {} rows",
                fold.data.task_id(),
                fold.weights.len(),
                fold.data.len()
            )));
        }
        if fold.weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return Err(Error::Training("weights must be finite and non-negative".into()));
        }
        any_positive |= fold.weights.iter().any(|&w| w > 0.0);
        if loss == LossKind::BinaryCrossEntropy && fold.data.labels().iter().any(|&y| y != 0.0 && y != 1.0) {
            return Err(Error::Input("cross-entropy labels must be 0 or 1".into()));
        }
    }
    if !any_positive {
        return Err(Error::Training("all training weights are zero".into()));
    }

    match spec {
        LearnerSpec::ConstantPredictor => Ok(TrainedModel::Constant(value)),
        LearnerSpec::WeightedRidge => {
            if value <= 0.0 {
                return Err(Error::Input(format!("ridge coefficient {value} must be positive")));
            }
            fit_ridge(folds, value)
        }
    }
}

fn fit_ridge(folds: &[WeightedFold<'_>], reg: f64) -> Result<TrainedModel> {
    let dim = folds[0].data.features().dim();
    if folds.iter().any(|f| f.data.features().dim() != dim) {
        return Err(Error::Input("training folds differ in dimension".into()));
    }
    let p = dim + 1;
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    let mut row = DVector::<f64>::zeros(p);
    for fold in folds {
        for ((x, &y), &w) in fold.data.features().rows().zip(fold.data.labels()).zip(fold.weights) {
            if w == 0.0 {
                continue;
            }
            row[0] = 1.0;
            row.rows_mut(1, dim).copy_from_slice(x);
            gram.ger(w, &row, &row, 1.0);
            rhs.axpy(w * y, &row, 1.0);
        }
    }
    for i in 1..p {
        gram[(i, i)] += reg;
    }
    let beta = gram
        .clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .or_else(|| gram.lu().solve(&rhs))
        .ok_or_else(|| Error::Numeric("singular ridge normal equations".into()))?;
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Numeric("non-finite ridge coefficients".into()));
    }
    Ok(TrainedModel::Linear {
        coef: beta.rows(1, dim).iter().copied().collect(),
        intercept: beta[0],
    })
}
