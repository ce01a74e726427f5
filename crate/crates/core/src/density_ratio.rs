//! Density-ratio estimation by unconstrained least-squares importance fitting (uLSIF).
//!
//! The ratio `w(x) = p_T(x) / p_S(x)` is modelled as a non-negative
//! combination of Gaussian bumps centred on target samples,
//! `s(x) = sum_l alpha_l * exp(-|x - c_l|^2 / (2 sigma^2))`, fitted by
//! minimizing the empirical squared error
//! `1/2 E_S[s(X)^2] - E_T[s(X)]` plus a ridge penalty. The minimizer solves
//! `(H + ridge I) alpha = h` with `H = mean_S(phi phi^T)` and `h = mean_T(phi)`;
//! negative coefficients are rounded up to zero afterwards. The constrained
//! problem (`alpha >= 0`) can be solved instead via [`CoefficientRule::NonNegative`].
//! Evaluations are clipped to `[0, cap]`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::{Features, UnlabeledDataset};
use crate::numeric;
use crate::{Error, Result};

/// Added to every ridge coefficient before solving.
pub const RIDGE_FLOOR: f64 = 1e-10;

const DEFAULT_BANDWIDTH_FACTORS: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];
const MEDIAN_SUBSAMPLE: usize = 300;

fn default_ridge_grid() -> Vec<f64> {
    vec![1e-3, 1e-2, 1e-1, 1.0]
}
fn default_cap() -> f64 {
    50.0
}
fn default_cv_folds() -> usize {
    5
}

/// How the non-negativity of the basis coefficients is enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientRule {
    /// Solve the unconstrained system, then round negative coefficients up to zero.
    #[default]
    ClipAfterSolve,
    /// Solve the quadratic program with `alpha >= 0` by coordinate descent.
    NonNegative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UlsifConfig {
    /// Number of kernel centres; `None` means `min(100, n_target)`.
    #[serde(default)]
    pub num_centers: Option<usize>,
    /// Candidate Gaussian widths; `None` means the median pairwise distance
    /// times {0.25, 0.5, 1, 2, 4}.
    #[serde(default)]
    pub bandwidth_grid: Option<Vec<f64>>,
    #[serde(default = "default_ridge_grid")]
    pub ridge_grid: Vec<f64>,
    #[serde(default = "default_cap")]
    pub cap: f64,
    #[serde(default = "default_cv_folds")]
    pub cv_folds: usize,
    #[serde(default)]
    pub coefficients: CoefficientRule,
    #[serde(default)]
    pub seed: u64,
}

impl Default for UlsifConfig {
    fn default() -> Self {
        Self {
            num_centers: None,
            bandwidth_grid: None,
            ridge_grid: default_ridge_grid(),
            cap: default_cap(),
            cv_folds: default_cv_folds(),
            coefficients: CoefficientRule::default(),
            seed: 0,
        }
    }
}

impl UlsifConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_centers == Some(0) {
            return Err(Error::config("num_centers", "must be at least 1"));
        }
        if let Some(grid) = &self.bandwidth_grid {
            if grid.is_empty() || grid.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
                return Err(Error::config("bandwidth_grid", "must be non-empty and positive"));
            }
        }
        if self.ridge_grid.is_empty() || self.ridge_grid.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
            return Err(Error::config("ridge_grid", "must be non-empty and positive"));
        }
        if !(self.cap > 0.0 && self.cap.is_finite()) {
            return Err(Error::config("cap", "must be positive and finite"));
        }
        if self.cv_folds < 2 {
            return Err(Error::config("cv_folds", "must be at least 2"));
        }
        Ok(())
    }
}

/// A fitted uLSIF model. Evaluations are clipped into `[0, cap]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityRatioModel {
    centers: Vec<Vec<f64>>,
    bandwidth: f64,
    ridge: f64,
    alpha: Vec<f64>,
    cap: f64,
}

impl DensityRatioModel {
    pub fn new(centers: Vec<Vec<f64>>, bandwidth: f64, ridge: f64, alpha: Vec<f64>, cap: f64) -> Result<Self> {
        let model = Self {
            centers,
            bandwidth,
            ridge,
            alpha,
            cap,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let dim = self.dim();
        if self.centers.is_empty() || dim == 0 {
            return Err(Error::Input("model needs at least one non-empty center".into()));
        }
        if self.centers.iter().any(|c| c.len() != dim) {
            return Err(Error::Input("centers have inconsistent dimension".into()));
        }
        if self.alpha.len() != self.centers.len() {
            return Err(Error::Input(format!(
                "{} coefficients for {} centers",
                self.alpha.len(),
                self.centers.len()
            )));
        }
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(Error::Input("bandwidth must be positive".into()));
        }
        if !(self.ridge >= 0.0) || !(self.cap > 0.0) {
            return Err(Error::Input("ridge must be >= 0 and cap > 0".into()));
        }
        if self.alpha.iter().chain(self.centers.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite model parameter".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }
    pub fn ridge(&self) -> f64 {
        self.ridge
    }
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }
    pub fn cap(&self) -> f64 {
        self.cap
    }
    pub fn dim(&self) -> usize {
        self.centers.first().map_or(0, Vec::len)
    }

    /// Unclipped model output `sum_l alpha_l phi_l(x)`.
    pub fn raw(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.raw_unchecked(x))
    }

    fn raw_unchecked(&self, x: &[f64]) -> f64 {
        let gamma = 1.0 / (2.0 * self.bandwidth * self.bandwidth);
        numeric::sum(
            self.centers
                .iter()
                .zip(&self.alpha)
                .filter(|(_, &a)| a != 0.0)
                .map(|(c, &a)| a * (-gamma * sq_dist(x, c)).exp()),
        )
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Input(format!(
                "point has dimension {}, model expects {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// `max(0, min(cap, raw(x)))`.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        Ok(self.raw(x)?.clamp(0.0, self.cap))
    }

    /// Evaluates every row, returning the values and the fraction that hit the cap.
    pub fn evaluate_rows(&self, features: &Features) -> Result<(Vec<f64>, f64)> {
        if features.dim() != self.dim() {
            return Err(Error::Input(format!(
                "features have dimension {}, model expects {}",
                features.dim(),
                self.dim()
            )));
        }
        let mut clipped = 0usize;
        let values: Vec<f64> = features
            .rows()
            .map(|x| {
                let r = self.raw_unchecked(x);
                if r > self.cap {
                    clipped += 1;
                }
                r.clamp(0.0, self.cap)
            })
            .collect();
        let frac = clipped as f64 / features.n_rows().max(1) as f64;
        Ok((values, frac))
    }

    /// Empirical least-squares objective `1/2 mean_S(w^2) - mean_T(w)` of the
    /// clipped model.
    pub fn objective(&self, target: &Features, source: &Features) -> Result<f64> {
        let (wt, _) = self.evaluate_rows(target)?;
        let (ws, _) = self.evaluate_rows(source)?;
        let sq: Vec<f64> = ws.iter().map(|w| w * w).collect();
        Ok(0.5 * numeric::mean(&sq) - numeric::mean(&wt))
    }
}

/// Evaluates a fitted model at one point.
pub fn evaluate_ratio(model: &DensityRatioModel, x: &[f64]) -> Result<f64> {
    model.evaluate(x)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Basis matrix `phi[i][l] = exp(-|x_i - c_l|^2 / (2 sigma^2))`, rows x centres.
fn design(rows: &Features, centers: &[Vec<f64>], bandwidth: f64) -> DMatrix<f64> {
    let gamma = 1.0 / (2.0 * bandwidth * bandwidth);
    DMatrix::from_fn(rows.n_rows(), centers.len(), |i, l| {
        (-gamma * sq_dist(rows.row(i), &centers[l])).exp()
    })
}

/// Second-moment matrix over the selected source rows and mean basis vector
/// over the selected target rows.
fn moments(phi_s: &DMatrix<f64>, s_rows: &[usize], phi_t: &DMatrix<f64>, t_rows: &[usize]) -> (DMatrix<f64>, DVector<f64>) {
    let b = phi_s.ncols();
    let sel_s = phi_s.select_rows(s_rows);
    let h_mat = sel_s.transpose() * &sel_s / s_rows.len() as f64;
    let mut h_vec = DVector::zeros(b);
    for &i in t_rows {
        h_vec += phi_t.row(i).transpose();
    }
    h_vec /= t_rows.len() as f64;
    (h_mat, h_vec)
}

fn solve_alpha(h_mat: &DMatrix<f64>, h_vec: &DVector<f64>, ridge: f64, rule: CoefficientRule) -> Result<Vec<f64>> {
    match rule {
        CoefficientRule::ClipAfterSolve => solve_clipped(h_mat, h_vec, ridge),
        CoefficientRule::NonNegative => solve_nonnegative(h_mat, h_vec, ridge),
    }
}

const CD_MAX_SWEEPS: usize = 5000;
const CD_TOL: f64 = 1e-10;

/// Minimizes `1/2 a^T (H + ridge I) a - h^T a` over `a >= 0` by cyclic
/// coordinate descent, warm-started from zero.
fn solve_nonnegative(h_mat: &DMatrix<f64>, h_vec: &DVector<f64>, ridge: f64) -> Result<Vec<f64>> {
    let b = h_mat.nrows();
    let reg = ridge + RIDGE_FLOOR;
    let mut alpha = vec![0.0; b];
    // grad = (H + reg I) alpha - h, maintained incrementally.
    let mut grad: Vec<f64> = h_vec.iter().map(|v| -v).collect();
    for _ in 0..CD_MAX_SWEEPS {
        let mut max_step = 0.0_f64;
        for l in 0..b {
            let diag = h_mat[(l, l)] + reg;
            if diag <= 0.0 {
                return Err(Error::Fitting(format!("non-positive curvature at ridge {ridge}")));
            }
            let next = (alpha[l] - grad[l] / diag).max(0.0);
            let step = next - alpha[l];
            if step != 0.0 {
                for m in 0..b {
                    grad[m] += step * h_mat[(m, l)];
                }
                grad[l] += step * reg;
                alpha[l] = next;
                max_step = max_step.max(step.abs() * diag.sqrt());
            }
        }
        if max_step < CD_TOL {
            break;
        }
    }
    if alpha.iter().any(|a| !a.is_finite()) {
        return Err(Error::Fitting(format!("non-finite coefficients at ridge {ridge}")));
    }
    Ok(alpha)
}

fn solve_clipped(h_mat: &DMatrix<f64>, h_vec: &DVector<f64>, ridge: f64) -> Result<Vec<f64>> {
    let b = h_mat.nrows();
    let system = h_mat + DMatrix::identity(b, b) * (ridge + RIDGE_FLOOR);
    let chol = system
        .cholesky()
        .ok_or_else(|| Error::Fitting(format!("singular system at ridge {ridge}")))?;
    let alpha = chol.solve(h_vec);
    if alpha.iter().any(|a| !a.is_finite()) {
        return Err(Error::Fitting(format!("non-finite coefficients at ridge {ridge}")));
    }
    Ok(alpha.iter().map(|&a| a.max(0.0)).collect())
}

/// Held-out objective of coefficients `alpha` using precomputed basis rows.
fn heldout_objective(alpha: &[f64], cap: f64, phi_s: &DMatrix<f64>, s_rows: &[usize], phi_t: &DMatrix<f64>, t_rows: &[usize]) -> f64 {
    let eval = |phi: &DMatrix<f64>, i: usize| -> f64 {
        let raw: f64 = phi.row(i).iter().zip(alpha).map(|(p, a)| p * a).sum();
        raw.clamp(0.0, cap)
    };
    let sq: Vec<f64> = s_rows.iter().map(|&i| eval(phi_s, i).powi(2)).collect();
    let lin: Vec<f64> = t_rows.iter().map(|&i| eval(phi_t, i)).collect();
    0.5 * numeric::mean(&sq) - numeric::mean(&lin)
}

fn check_inputs(target: &UnlabeledDataset, source: &Features) -> Result<()> {
    if source.n_rows() == 0 {
        return Err(Error::Input("source density fold is empty".into()));
    }
    if target.features().dim() != source.dim() {
        return Err(Error::Input(format!(
            "target dimension {} differs from source dimension {}",
            target.features().dim(),
            source.dim()
        )));
    }
    Ok(())
}

/// Median of pairwise Euclidean distances over a seeded subsample of the
/// pooled target and source rows. Falls back to 1 when all points coincide.
pub fn median_distance(target: &Features, source: &Features, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pick = |f: &Features| -> Vec<Vec<f64>> {
        let mut idx: Vec<usize> = (0..f.n_rows()).collect();
        idx.shuffle(&mut rng);
        idx.truncate(MEDIAN_SUBSAMPLE / 2);
        idx.into_iter().map(|i| f.row(i).to_vec()).collect()
    };
    let mut pts = pick(target);
    pts.extend(pick(source));
    let mut dists = Vec::with_capacity(pts.len() * pts.len() / 2);
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            dists.push(sq_dist(&pts[i], &pts[j]).sqrt());
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(f64::total_cmp);
    let med = dists[dists.len() / 2];
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

/// Row indices of the target samples used as kernel centres.
fn choose_centers(target: &Features, num: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..target.n_rows()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.truncate(num.min(target.n_rows()));
    idx
}

fn center_rows(target: &Features, idx: &[usize]) -> Vec<Vec<f64>> {
    idx.iter().map(|&i| target.row(i).to_vec()).collect()
}

/// Round-robin folds over a seeded shuffle of `candidates`.
fn shuffled_folds(mut idx: Vec<usize>, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Vec::new(); folds];
    for (pos, i) in idx.into_iter().enumerate() {
        out[pos % folds].push(i);
    }
    out
}

fn complement(n: usize, held: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; n];
    for &i in held {
        mask[i] = false;
    }
    (0..n).filter(|&i| mask[i]).collect()
}

/// Sub-seeds for the independent random choices of one fit.
struct Seeds {
    centers: u64,
    median: u64,
    target_folds: u64,
    source_folds: u64,
}

impl Seeds {
    fn new(seed: u64) -> Self {
        Self {
            centers: numeric::derive_seed(seed, 1),
            median: numeric::derive_seed(seed, 2),
            target_folds: numeric::derive_seed(seed, 3),
            source_folds: numeric::derive_seed(seed, 4),
        }
    }
}

/// Cross-validated objective for every grid pair, in grid order
/// (bandwidth-major). Pairs whose fit failed on some fold are `None`.
pub fn grid_objectives(
    target: &UnlabeledDataset,
    source: &Features,
    cfg: &UlsifConfig,
) -> Result<Vec<((f64, f64), Option<f64>)>> {
    check_inputs(target, source)?;
    cfg.validate()?;
    let seeds = Seeds::new(cfg.seed);
    let tf = target.features();
    let num_centers = cfg.num_centers.unwrap_or(100).min(tf.n_rows());
    let center_idx = choose_centers(tf, num_centers, seeds.centers);
    let centers = center_rows(tf, &center_idx);
    let bandwidths = bandwidth_grid(target, source, cfg, seeds.median);

    // Target rows that serve as centres always stay in the fitting part; a
    // held-out point sitting on a centre would favour narrow kernels.
    let mut is_center = vec![false; tf.n_rows()];
    for &i in &center_idx {
        is_center[i] = true;
    }
    let mut t_candidates: Vec<usize> = (0..tf.n_rows()).filter(|&i| !is_center[i]).collect();
    if t_candidates.len() < cfg.cv_folds {
        t_candidates = (0..tf.n_rows()).collect();
    }
    // With fewer rows than folds there is nothing to hold out; score in-sample.
    let folds = cfg.cv_folds.min(t_candidates.len()).min(source.n_rows());
    let (t_folds, s_folds) = if folds >= 2 {
        (
            shuffled_folds(t_candidates, folds, seeds.target_folds),
            shuffled_folds((0..source.n_rows()).collect(), folds, seeds.source_folds),
        )
    } else {
        (vec![Vec::new()], vec![Vec::new()])
    };

    let mut out = Vec::with_capacity(bandwidths.len() * cfg.ridge_grid.len());
    for &sigma in &bandwidths {
        let phi_t = design(tf, &centers, sigma);
        let phi_s = design(source, &centers, sigma);
        let mut totals = vec![Some(0.0); cfg.ridge_grid.len()];
        for (t_held, s_held) in t_folds.iter().zip(&s_folds) {
            let t_fit = complement(tf.n_rows(), t_held);
            let s_fit = complement(source.n_rows(), s_held);
            let (t_eval, s_eval) = if t_held.is_empty() {
                (&t_fit, &s_fit)
            } else {
                (t_held, s_held)
            };
            let (h_mat, h_vec) = moments(&phi_s, &s_fit, &phi_t, &t_fit);
            for (slot, &ridge) in totals.iter_mut().zip(&cfg.ridge_grid) {
                if let Some(acc) = slot {
                    match solve_alpha(&h_mat, &h_vec, ridge, cfg.coefficients) {
                        Ok(alpha) => {
                            *acc += heldout_objective(&alpha, cfg.cap, &phi_s, s_eval, &phi_t, t_eval)
                        }
                        Err(_) => *slot = None,
                    }
                }
            }
        }
        for (&ridge, total) in cfg.ridge_grid.iter().zip(totals) {
            out.push(((sigma, ridge), total.map(|t| t / t_folds.len() as f64)));
        }
    }
    Ok(out)
}

fn bandwidth_grid(target: &UnlabeledDataset, source: &Features, cfg: &UlsifConfig, seed: u64) -> Vec<f64> {
    match &cfg.bandwidth_grid {
        Some(grid) => grid.clone(),
        None => {
            let med = median_distance(target.features(), source, seed);
            DEFAULT_BANDWIDTH_FACTORS.iter().map(|f| f * med).collect()
        }
    }
}

/// Picks the `(bandwidth, ridge)` pair with the smallest cross-validated
/// objective. Ties go to the larger bandwidth, then the larger ridge.
pub fn select_hyperparams(target: &UnlabeledDataset, source: &Features, cfg: &UlsifConfig) -> Result<(f64, f64)> {
    let scored = grid_objectives(target, source, cfg)?;
    let mut best: Option<((f64, f64), f64)> = None;
    for ((sigma, ridge), obj) in scored {
        let Some(obj) = obj.filter(|o| o.is_finite()) else {
            continue;
        };
        let better = match best {
            None => true,
            Some(((bs, br), bo)) => {
                obj < bo || (obj == bo && (sigma > bs || (sigma == bs && ridge > br)))
            }
        };
        if better {
            best = Some(((sigma, ridge), obj));
        }
    }
    best.map(|(pair, _)| pair)
        .ok_or_else(|| Error::Fitting("every grid pair failed to fit".into()))
}

/// Fits a uLSIF model of `p_target / p_source` with cross-validated
/// hyperparameters, then refits on all rows.
pub fn fit_ulsif(target: &UnlabeledDataset, source: &Features, cfg: &UlsifConfig) -> Result<DensityRatioModel> {
    let (bandwidth, ridge) = select_hyperparams(target, source, cfg)?;
    fit_ulsif_fixed(target, source, cfg, bandwidth, ridge)
}

/// Fits with a given bandwidth and ridge, using the same centres as [`fit_ulsif`].
pub fn fit_ulsif_fixed(
    target: &UnlabeledDataset,
    source: &Features,
    cfg: &UlsifConfig,
    bandwidth: f64,
    ridge: f64,
) -> Result<DensityRatioModel> {
    check_inputs(target, source)?;
    cfg.validate()?;
    let seeds = Seeds::new(cfg.seed);
    let tf = target.features();
    let num_centers = cfg.num_centers.unwrap_or(100).min(tf.n_rows());
    let centers = center_rows(tf, &choose_centers(tf, num_centers, seeds.centers));
    let phi_t = design(tf, &centers, bandwidth);
    let phi_s = design(source, &centers, bandwidth);
    let all_t: Vec<usize> = (0..tf.n_rows()).collect();
    let all_s: Vec<usize> = (0..source.n_rows()).collect();
    let (h_mat, h_vec) = moments(&phi_s, &all_s, &phi_t, &all_t);
    let alpha = solve_alpha(&h_mat, &h_vec, ridge, cfg.coefficients)?;
    DensityRatioModel::new(centers, bandwidth, ridge, alpha, cfg.cap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_distr::{Distribution, Normal};

    fn gaussian(n: usize, mu: f64, seed: u64) -> Features {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(mu, 1.0).unwrap();
        Features::column((0..n).map(|_| d.sample(&mut rng)).collect()).unwrap()
    }

    fn model_with(alpha: Vec<f64>, cap: f64) -> DensityRatioModel {
        let centers = alpha.iter().map(|_| vec![0.0]).collect();
        DensityRatioModel::new(centers, 1.0, 0.1, alpha, cap).unwrap()
    }

    #[test]
    fn zero_model_evaluates_to_zero() {
        let m = model_with(vec![0.0, 0.0], 50.0);
        assert_eq!(evaluate_ratio(&m, &[0.3]).unwrap(), 0.0);
    }

    #[test]
    fn evaluation_clips_to_cap_and_zero() {
        // At the centre each basis function is 1, so raw = sum(alpha).
        let m = model_with(vec![60.0, 60.0], 50.0);
        assert_eq!(m.raw(&[0.0]).unwrap(), 120.0);
        assert_eq!(evaluate_ratio(&m, &[0.0]).unwrap(), 50.0);
        let m = model_with(vec![-0.3], 50.0);
        assert_eq!(evaluate_ratio(&m, &[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch_is_input_error() {
        let m = model_with(vec![1.0], 50.0);
        assert!(matches!(m.evaluate(&[0.0, 1.0]), Err(Error::Input(_))));
        let t = UnlabeledDataset::new(gaussian(10, 0.0, 1)).unwrap();
        let s = Features::from_rows(&[vec![0.0, 1.0]]).unwrap();
        assert!(matches!(fit_ulsif(&t, &s, &UlsifConfig::default()), Err(Error::Input(_))));
    }

    #[test]
    fn single_point_model_is_positive() {
        let t = UnlabeledDataset::new(Features::column(vec![0.5]).unwrap()).unwrap();
        let s = Features::column(vec![0.5]).unwrap();
        let m = fit_ulsif(&t, &s, &UlsifConfig::default()).unwrap();
        assert_eq!(m.centers().len(), 1);
        assert!(m.evaluate(&[0.5]).unwrap() > 0.0);
    }

    #[test]
    fn same_distribution_gives_unit_mean_ratio() {
        let t = UnlabeledDataset::new(gaussian(1500, 0.0, 2)).unwrap();
        let s = gaussian(1500, 0.0, 3);
        let m = fit_ulsif(&t, &s, &UlsifConfig::default()).unwrap();
        let (w, _) = m.evaluate_rows(&s).unwrap();
        let mean = numeric::mean(&w);
        assert!((mean - 1.0).abs() < 0.15, "mean ratio {mean}");
        assert!((0.8..=1.2).contains(&mean));
    }

    #[test]
    fn single_element_grid_is_returned() {
        let t = UnlabeledDataset::new(gaussian(200, 0.0, 4)).unwrap();
        let s = gaussian(200, 0.5, 5);
        let cfg = UlsifConfig {
            bandwidth_grid: Some(vec![0.7]),
            ridge_grid: vec![0.05],
            ..UlsifConfig::default()
        };
        assert_eq!(select_hyperparams(&t, &s, &cfg).unwrap(), (0.7, 0.05));
    }

    #[test]
    fn selection_is_grid_argmin_and_deterministic() {
        let t = UnlabeledDataset::new(gaussian(400, 0.0, 6)).unwrap();
        let s = gaussian(400, 1.0, 7);
        let cfg = UlsifConfig {
            bandwidth_grid: Some(vec![0.1, 0.3, 1.0, 3.0]),
            seed: 17,
            ..UlsifConfig::default()
        };
        let chosen = select_hyperparams(&t, &s, &cfg).unwrap();
        let scored = grid_objectives(&t, &s, &cfg).unwrap();
        let chosen_obj = scored.iter().find(|(p, _)| *p == chosen).unwrap().1.unwrap();
        for (_, obj) in &scored {
            if let Some(o) = obj {
                assert!(chosen_obj <= *o);
            }
        }
        assert_eq!(select_hyperparams(&t, &s, &cfg).unwrap(), chosen);

        let same = gaussian(300, 0.0, 8);
        let t2 = UnlabeledDataset::new(same.clone()).unwrap();
        let cfg2 = UlsifConfig {
            bandwidth_grid: Some(vec![0.1, 1.0]),
            seed: 3,
            ..UlsifConfig::default()
        };
        assert_eq!(
            select_hyperparams(&t2, &same, &cfg2).unwrap(),
            select_hyperparams(&t2, &same, &cfg2).unwrap()
        );
    }

    #[test]
    fn ties_prefer_smoother_model() {
        // Identical grid values give identical objectives; the larger one wins.
        let t = UnlabeledDataset::new(gaussian(100, 0.0, 9)).unwrap();
        let s = gaussian(100, 0.0, 10);
        let cfg = UlsifConfig {
            bandwidth_grid: Some(vec![0.5, 0.5]),
            ridge_grid: vec![0.1],
            ..UlsifConfig::default()
        };
        assert_eq!(select_hyperparams(&t, &s, &cfg).unwrap(), (0.5, 0.1));
    }

    #[test]
    fn fitted_model_beats_zero_model_in_sample() {
        let t = UnlabeledDataset::new(gaussian(500, 0.0, 11)).unwrap();
        let s = gaussian(500, 0.8, 12);
        let m = fit_ulsif(&t, &s, &UlsifConfig::default()).unwrap();
        // The zero model scores exactly 0.
        assert!(m.objective(t.features(), &s).unwrap() <= 0.0);
    }

    #[test]
    fn json_roundtrip() {
        let t = UnlabeledDataset::new(gaussian(50, 0.0, 13)).unwrap();
        let s = gaussian(50, 0.3, 14);
        let m = fit_ulsif(&t, &s, &UlsifConfig::default()).unwrap();
        let back = DensityRatioModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(DensityRatioModel::from_json(r#"{"centers":[[0.0]],"bandwidth":-1,"ridge":0,"alpha":[1],"cap":50}"#).is_err());
    }

    #[test]
    fn config_validation() {
        let bad = UlsifConfig {
            cv_folds: 1,
            ..UlsifConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config { field, .. }) if field == "cv_folds"));
        let bad = UlsifConfig {
            ridge_grid: vec![],
            ..UlsifConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn evaluations_stay_in_range(alpha in prop::collection::vec(-100.0f64..100.0, 1..5), x in -5.0f64..5.0, cap in 0.5f64..60.0) {
            let centers: Vec<Vec<f64>> = (0..alpha.len()).map(|i| vec![i as f64 - 1.0]).collect();
            let m = DensityRatioModel::new(centers, 0.8, 0.0, alpha, cap).unwrap();
            let v = m.evaluate(&[x]).unwrap();
            prop_assert!((0.0..=cap).contains(&v));
        }
    }
}
