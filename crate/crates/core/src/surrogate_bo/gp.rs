//! Gaussian-process regression with a Matérn-5/2 kernel.
//!
//! Inputs live in the unit cube and scores are standardized before fitting.
//! Kernel hyperparameters are picked from a small grid by log marginal
//! likelihood; the noise variance is fixed and escalated tenfold whenever the
//! Cholesky factorization fails.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::space::{HyperParams, SearchSpace};
use crate::{Error, Result};

const SQRT5: f64 = 2.236_067_977_499_79;

/// `s2 (1 + sqrt5 r + 5 r^2 / 3) exp(-sqrt5 r)` with `r` the lengthscale-scaled distance.
pub fn matern52(a: &[f64], b: &[f64], lengthscales: &[f64], signal_var: f64) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let r2: f64 = a
        .iter()
        .zip(b)
        .enumerate()
        .map(|(i, (x, y))| {
            let l = lengthscales[i.min(lengthscales.len() - 1)];
            let d = (x - y) / l;
            d * d
        })
        .sum();
    let r = r2.sqrt();
    signal_var * (1.0 + SQRT5 * r + 5.0 * r2 / 3.0) * (-SQRT5 * r).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// One entry per dimension, or a single shared entry.
    pub lengthscales: Vec<f64>,
    pub signal_var: f64,
    pub noise_var: f64,
}

fn default_lengthscale_grid() -> Vec<f64> {
    vec![0.1, 0.3, 1.0]
}
fn default_signal_grid() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}
fn default_noise() -> f64 {
    1e-4
}
fn default_max_noise() -> f64 {
    1e-1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpConfig {
    #[serde(default = "default_lengthscale_grid")]
    pub lengthscale_grid: Vec<f64>,
    #[serde(default = "default_signal_grid")]
    pub signal_grid: Vec<f64>,
    #[serde(default = "default_noise")]
    pub noise_var: f64,
    #[serde(default = "default_max_noise")]
    pub max_noise_var: f64,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            lengthscale_grid: default_lengthscale_grid(),
            signal_grid: default_signal_grid(),
            noise_var: default_noise(),
            max_noise_var: default_max_noise(),
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: &[f64]| !v.is_empty() && v.iter().all(|&x| x > 0.0 && x.is_finite());
        if !positive(&self.lengthscale_grid) {
            return Err(Error::config("gp.lengthscale_grid", "must be non-empty and positive"));
        }
        if !positive(&self.signal_grid) {
            return Err(Error::config("gp.signal_grid", "must be non-empty and positive"));
        }
        if !(self.noise_var > 0.0 && self.max_noise_var >= self.noise_var) {
            return Err(Error::config("gp.noise_var", "need 0 < noise_var <= max_noise_var"));
        }
        Ok(())
    }
}

/// A fitted GP posterior over standardized scores.
#[derive(Debug, Clone)]
pub struct GpSurrogate {
    points: Vec<Vec<f64>>,
    targets: DVector<f64>,
    kernel: KernelParams,
    chol: Cholesky<f64, Dyn>,
    weights: DVector<f64>,
    target_mean: f64,
    target_sd: f64,
    log_marginal_likelihood: f64,
}

struct Factored {
    chol: Cholesky<f64, Dyn>,
    weights: DVector<f64>,
    noise_var: f64,
    lml: f64,
}

fn factor(points: &[Vec<f64>], y: &DVector<f64>, ls: f64, signal: f64, cfg: &GpConfig) -> Option<Factored> {
    let n = points.len();
    let ls = [ls];
    let gram = DMatrix::from_fn(n, n, |i, j| matern52(&points[i], &points[j], &ls, signal));
    let mut noise = cfg.noise_var;
    loop {
        let mut k = gram.clone();
        for i in 0..n {
            k[(i, i)] += noise;
        }
        if let Some(chol) = k.cholesky() {
            let weights = chol.solve(y);
            let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
            let lml = -0.5 * y.dot(&weights) - log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
            return Some(Factored {
                chol,
                weights,
                noise_var: noise,
                lml,
            });
        }
        noise *= 10.0;
        if noise > cfg.max_noise_var * (1.0 + 1e-12) {
            return None;
        }
    }
}

/// Fits a GP to unit-cube `points` and raw `scores`.
pub fn gp_fit(points: &[Vec<f64>], scores: &[f64], cfg: &GpConfig) -> Result<GpSurrogate> {
    cfg.validate()?;
    if points.is_empty() {
        return Err(Error::Input("GP needs at least one point".into()));
    }
    if points.len() != scores.len() {
        return Err(Error::Input("points and scores differ in length".into()));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Input("points differ in dimension".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Input("GP scores must be finite".into()));
    }

    let n = scores.len() as f64;
    let target_mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - target_mean).powi(2)).sum::<f64>() / n;
    let target_sd = if var > 0.0 { var.sqrt() } else { 1.0 };
    let targets = DVector::from_iterator(scores.len(), scores.iter().map(|s| (s - target_mean) / target_sd));

    let mut best: Option<(KernelParams, Factored)> = None;
    for &ls in &cfg.lengthscale_grid {
        for &signal in &cfg.signal_grid {
            let Some(f) = factor(points, &targets, ls, signal, cfg) else {
                continue;
            };
            if best.as_ref().is_none_or(|(_, b)| f.lml > b.lml) {
                let params = KernelParams {
                    lengthscales: vec![ls],
                    signal_var: signal,
                    noise_var: f.noise_var,
                };
                best = Some((params, f));
            }
        }
    }
    let (kernel, f) = best.ok_or_else(|| Error::Numeric("Cholesky failed for every kernel setting".into()))?;
    Ok(GpSurrogate {
        points: points.to_vec(),
        targets,
        kernel,
        chol: f.chol,
        weights: f.weights,
        target_mean,
        target_sd,
        log_marginal_likelihood: f.lml,
    })
}

impl GpSurrogate {
    pub fn kernel(&self) -> &KernelParams {
        &self.kernel
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal_likelihood
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Standardized training targets.
    pub fn targets(&self) -> &[f64] {
        self.targets.as_slice()
    }

    pub fn standardization(&self) -> (f64, f64) {
        (self.target_mean, self.target_sd)
    }

    /// Lower-triangular Cholesky factor of `K + noise I`.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// Posterior mean and latent-function variance at a unit-cube point, in score units.
    pub fn predict_unit(&self, x: &[f64]) -> (f64, f64) {
        let ls = &self.kernel.lengthscales;
        let k_star = DVector::from_iterator(
            self.points.len(),
            self.points.iter().map(|p| matern52(x, p, ls, self.kernel.signal_var)),
        );
        let mean = k_star.dot(&self.weights);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&k_star)
            .unwrap_or_else(|| DVector::zeros(k_star.len()));
        let var = (self.kernel.signal_var - v.dot(&v)).max(0.0);
        (
            self.target_mean + self.target_sd * mean,
            var * self.target_sd * self.target_sd,
        )
    }
}

/// Posterior mean and variance at `theta`, in original score units.
pub fn gp_predict(surrogate: &GpSurrogate, space: &SearchSpace, theta: &HyperParams) -> Result<(f64, f64)> {
    let u = space.to_unit(theta)?;
    if u.len() != surrogate.dim() {
        return Err(Error::Input("theta dimension differs from surrogate".into()));
    }
    Ok(surrogate.predict_unit(&u))
}
