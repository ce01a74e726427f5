//! Importance-weighted estimators of the target objective.
//!
//! Every estimator here has the form
//! `f_hat = sum_j lambda_j * sum_i w_j(x_ij) * L_ij` with `lambda_j >= 0` and
//! `sum_j lambda_j * n_j = 1`, which makes it unbiased for the target risk.
//! Within that family the variance is `sum_j lambda_j^2 n_j Div_j`, where
//! `Div_j = E_Sj[(w L)^2] - f_T^2`; it is minimized by
//! `lambda_j* = 1 / (Div_j * sum_m n_m / Div_m)`, which attains
//! `(sum_j n_j / Div_j)^-1`.

use serde::{Deserialize, Serialize};

use crate::numeric;
use crate::{Error, Result};

/// Tolerance on `sum_j lambda_j n_j = 1`.
pub const CONSTRAINT_TOL: f64 = 1e-9;

/// Relative divergence floor: `eps = DIV_FLOOR_REL * max(1, max_j raw_j)`.
pub const DIV_FLOOR_REL: f64 = 1e-6;

/// Per-row losses and density ratios for one source task's validation fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskLosses {
    pub losses: Vec<f64>,
    pub ratios: Vec<f64>,
}

impl TaskLosses {
    pub fn new(losses: Vec<f64>, ratios: Vec<f64>) -> Result<Self> {
        if losses.len() != ratios.len() {
            return Err(Error::Input(format!(
                "{} losses but {} ratios",
                losses.len(),
                ratios.len()
            )));
        }
        if losses.is_empty() {
            return Err(Error::Input("task has no rows".into()));
        }
        if losses.iter().chain(&ratios).any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite loss or ratio".into()));
        }
        if losses.iter().any(|&l| l < 0.0) || ratios.iter().any(|&w| w < 0.0) {
            return Err(Error::Input("losses and ratios must be non-negative".into()));
        }
        Ok(Self { losses, ratios })
    }

    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }

    fn weighted(&self) -> impl Iterator<Item = f64> + '_ {
        self.losses.iter().zip(&self.ratios).map(|(l, w)| l * w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedLossTable {
    tasks: Vec<TaskLosses>,
}

impl WeightedLossTable {
    pub fn new(tasks: Vec<TaskLosses>) -> Result<Self> {
        if tasks.is_empty() {
            return Err(Error::Input("need at least one source task".into()));
        }
        Ok(Self { tasks })
    }

    pub fn tasks(&self) -> &[TaskLosses] {
        &self.tasks
    }

    pub fn n_per_task(&self) -> Vec<usize> {
        self.tasks.iter().map(TaskLosses::len).collect()
    }

    /// Raw divergence estimate for every task.
    pub fn divergences(&self) -> Vec<f64> {
        self.tasks
            .iter()
            .map(|t| raw_divergence(t.weighted().collect()))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingKind {
    Uniform,
    VarianceReduced,
    Custom,
}

/// Per-task weights `lambda` with `lambda_j >= 0` and `sum_j lambda_j n_j = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceWeighting {
    lambda: Vec<f64>,
    kind: WeightingKind,
}

impl SourceWeighting {
    /// Validates arbitrary weights against the task sizes.
    pub fn custom(lambda: Vec<f64>, n_per_task: &[usize]) -> Result<Self> {
        check_constraint(&lambda, n_per_task)?;
        Ok(Self {
            lambda,
            kind: WeightingKind::Custom,
        })
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn kind(&self) -> WeightingKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    /// `sum_j lambda_j n_j`.
    pub fn total_mass(&self, n_per_task: &[usize]) -> f64 {
        numeric::sum(self.lambda.iter().zip(n_per_task).map(|(l, &n)| l * n as f64))
    }
}

fn check_constraint(lambda: &[f64], n_per_task: &[usize]) -> Result<()> {
    if lambda.len() != n_per_task.len() {
        return Err(Error::Weighting(format!(
            "{} weights for {} tasks",
            lambda.len(),
            n_per_task.len()
        )));
    }
    if let Some(j) = lambda.iter().position(|&l| !(l >= 0.0 && l.is_finite())) {
        return Err(Error::Weighting(format!("lambda[{j}] = {} is not a finite non-negative value", lambda[j])));
    }
    let mass = numeric::sum(lambda.iter().zip(n_per_task).map(|(l, &n)| l * n as f64));
    if (mass - 1.0).abs() > CONSTRAINT_TOL {
        return Err(Error::Weighting(format!("sum lambda_j n_j = {mass}, expected 1")));
    }
    Ok(())
}

/// `lambda_j = 1 / n` for all tasks, `n = sum_j n_j`.
pub fn uniform_weights(n_per_task: &[usize]) -> Result<SourceWeighting> {
    if n_per_task.is_empty() || n_per_task.contains(&0) {
        return Err(Error::Input("every task needs at least one row".into()));
    }
    let n: usize = n_per_task.iter().sum();
    Ok(SourceWeighting {
        lambda: vec![1.0 / n as f64; n_per_task.len()],
        kind: WeightingKind::Uniform,
    })
}

/// Raw and floored per-task divergences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceEstimate {
    raw: Vec<f64>,
    floored: Vec<f64>,
    floor: f64,
}

impl DivergenceEstimate {
    /// Floors raw values at `1e-6 * max(1, max_j raw_j)`.
    pub fn from_raw(raw: Vec<f64>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::Input("no divergences".into()));
        }
        if raw.iter().any(|d| !d.is_finite()) {
            return Err(Error::Input("non-finite divergence".into()));
        }
        let max = raw.iter().copied().fold(1.0_f64, f64::max);
        let floor = DIV_FLOOR_REL * max;
        let floored = raw.iter().map(|&d| d.max(floor)).collect();
        Ok(Self { raw, floored, floor })
    }

    /// Exact divergences, used as-is when positive.
    pub fn exact(values: Vec<f64>) -> Result<Self> {
        Self::from_raw(values)
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn floored(&self) -> &[f64] {
        &self.floored
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    /// True when no task's raw divergence rises above the floor.
    pub fn all_at_floor(&self) -> bool {
        self.raw.iter().all(|&d| d <= self.floor)
    }
}

/// `lambda_j* = (Div_j * sum_m n_m / Div_m)^-1`, computed from the floored values.
pub fn vr_weights(divs: &DivergenceEstimate, n_per_task: &[usize]) -> Result<SourceWeighting> {
    let d = divs.floored();
    if d.len() != n_per_task.len() {
        return Err(Error::Input(format!(
            "{} divergences for {} tasks",
            d.len(),
            n_per_task.len()
        )));
    }
    if n_per_task.contains(&0) {
        return Err(Error::Input("every task needs at least one row".into()));
    }
    // Scale by the smallest divergence so huge ratios do not underflow.
    let d_min = d.iter().copied().fold(f64::INFINITY, f64::min);
    let scaled: Vec<f64> = d.iter().map(|x| x / d_min).collect();
    let precision = numeric::sum(scaled.iter().zip(n_per_task).map(|(s, &n)| n as f64 / s));
    let lambda: Vec<f64> = scaled.iter().map(|s| 1.0 / (s * precision)).collect();
    Ok(SourceWeighting {
        lambda,
        kind: WeightingKind::VarianceReduced,
    })
}

/// `sum_j lambda_j sum_i w_ij L_ij`.
pub fn lambda_unbiased_estimate(table: &WeightedLossTable, weights: &SourceWeighting) -> Result<f64> {
    check_constraint(weights.lambda(), &table.n_per_task())?;
    Ok(numeric::sum(
        table
            .tasks()
            .iter()
            .zip(weights.lambda())
            .map(|(t, &l)| l * numeric::sum(t.weighted())),
    ))
}

/// Arithmetic mean of target losses (requires target labels).
pub fn empirical_target_objective(losses: &[f64]) -> Result<f64> {
    if losses.is_empty() {
        return Err(Error::Input("no target losses".into()));
    }
    Ok(numeric::mean(losses))
}

fn raw_divergence(wl: Vec<f64>) -> f64 {
    let m = numeric::mean(&wl);
    let sq: Vec<f64> = wl.iter().map(|v| v * v).collect();
    numeric::mean(&sq) - m * m
}

/// `mean((w L)^2) - mean(w L)^2`; may be zero or slightly negative.
pub fn estimate_divergence(losses: &[f64], ratios: &[f64]) -> Result<f64> {
    if losses.len() != ratios.len() {
        return Err(Error::Input(format!(
            "{} losses but {} ratios",
            losses.len(),
            ratios.len()
        )));
    }
    if losses.is_empty() {
        return Err(Error::Input("empty sample".into()));
    }
    Ok(raw_divergence(losses.iter().zip(ratios).map(|(l, w)| l * w).collect()))
}

fn check_distribution(name: &str, p: &[f64]) -> Result<()> {
    if p.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
        return Err(Error::Input(format!("{name} has negative or non-finite entries")));
    }
    let total = numeric::sum(p.iter().copied());
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Input(format!("{name} sums to {total}, expected 1")));
    }
    Ok(())
}

/// `sum_o p_T(o) L(o)` over a finite outcome space.
pub fn population_objective(loss_by_outcome: &[f64], target_probs: &[f64]) -> Result<f64> {
    if loss_by_outcome.len() != target_probs.len() {
        return Err(Error::Input("outcome vectors differ in length".into()));
    }
    check_distribution("target_probs", target_probs)?;
    Ok(numeric::sum(loss_by_outcome.iter().zip(target_probs).map(|(l, p)| l * p)))
}

/// Exact task divergence on a finite outcome space:
/// `sum_o p_S w^2 L^2 - (sum_o p_T L)^2` with `w = p_T / p_S`.
pub fn population_divergence(loss_by_outcome: &[f64], source_probs: &[f64], target_probs: &[f64]) -> Result<f64> {
    let k = loss_by_outcome.len();
    if source_probs.len() != k || target_probs.len() != k {
        return Err(Error::Input("outcome vectors differ in length".into()));
    }
    check_distribution("source_probs", source_probs)?;
    let f_t = population_objective(loss_by_outcome, target_probs)?;
    let mut terms = Vec::with_capacity(k);
    for o in 0..k {
        let (ps, pt, l) = (source_probs[o], target_probs[o], loss_by_outcome[o]);
        if pt > 0.0 && ps <= 0.0 {
            return Err(Error::Assumption(format!(
                "outcome {o} has target mass {pt} but no source mass"
            )));
        }
        if ps > 0.0 {
            let w = pt / ps;
            terms.push(ps * w * w * l * l);
        }
    }
    Ok(numeric::sum(terms) - f_t * f_t)
}

/// Variance of a λ-weighted estimator: `sum_j lambda_j^2 n_j Div_j`.
pub fn analytic_variance(weights: &SourceWeighting, divs: &[f64], n_per_task: &[usize]) -> Result<f64> {
    if weights.len() != divs.len() || divs.len() != n_per_task.len() {
        return Err(Error::Input("weights, divergences and sizes differ in length".into()));
    }
    Ok(numeric::sum(
        weights
            .lambda()
            .iter()
            .zip(divs)
            .zip(n_per_task)
            .map(|((l, d), &n)| l * l * n as f64 * d),
    ))
}

/// `(sum_j n_j / Div_j)^-1`, the variance attained by the optimal weights.
pub fn optimal_variance(divs: &[f64], n_per_task: &[usize]) -> f64 {
    1.0 / numeric::sum(divs.iter().zip(n_per_task).map(|(d, &n)| n as f64 / d))
}

/// Plug-in regret bound `R + sqrt(2 V1 / delta) + sqrt(2 (V2 + V3) / delta)`.
///
/// `V1` is the estimator variance at the incumbent, `V2` at the true optimum
/// and `V3` at the estimated optimum.
pub fn regret_bound(
    variance_at_incumbent: f64,
    variance_at_opt: f64,
    variance_at_est_opt: f64,
    simple_regret: f64,
    delta: f64,
) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Input(format!("delta {delta} not in (0, 1)")));
    }
    let vs = [variance_at_incumbent, variance_at_opt, variance_at_est_opt];
    if vs.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::Input("variances must be non-negative".into()));
    }
    Ok(simple_regret
        + (2.0 * variance_at_incumbent / delta).sqrt()
        + (2.0 * (variance_at_opt + variance_at_est_opt) / delta).sqrt())
}

/// Per-evaluation weighting diagnostics for one source task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDiagnostics {
    pub lambda: f64,
    pub div_raw: f64,
    pub div_floored: f64,
    pub clipped_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorDiagnostics {
    pub tasks: Vec<TaskDiagnostics>,
    /// Set when every divergence sat at the floor and uniform weights were used instead.
    pub uniform_fallback: bool,
}
