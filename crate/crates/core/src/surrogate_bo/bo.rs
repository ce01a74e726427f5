//! Acquisition and the sequential optimization loop.

use std::time::{Duration, Instant};

use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gp::{gp_fit, GpConfig, GpSurrogate};
use super::space::{HyperParams, SearchSpace};
use crate::estimators::EstimatorDiagnostics;
use crate::numeric::derive_seed;
use crate::{Error, Result};

pub const N_CANDIDATES: usize = 2048;
pub const N_REFINE_STARTS: usize = 4;
pub const N_REFINE_PASSES: usize = 16;
const REFINE_INITIAL_STEP: f64 = 0.05;
const DUPLICATE_RADIUS: f64 = 1e-9;
const DUPLICATE_SHIFT: f64 = 1e-6;

/// `mean - beta * sqrt(variance)`; smaller is more promising.
pub fn acquisition_lcb(mean: f64, variance: f64, beta: f64) -> f64 {
    mean - beta * variance.max(0.0).sqrt()
}

const PRIMES: [u32; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while i > 0 {
        out += (i % b) as f64 * f;
        i /= b;
        f *= inv;
    }
    out
}

/// Halton points with a seeded random shift modulo 1. Dimensions beyond the
/// prime table fall back to plain uniform draws.
fn candidates(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.random()).collect();
    (1..=count as u64)
        .map(|i| {
            (0..dim)
                .map(|d| match PRIMES.get(d) {
                    Some(&p) => (radical_inverse(i, p) + shift[d]).fract(),
                    None => rng.random(),
                })
                .collect()
        })
        .collect()
}

/// Minimizes LCB over the unit cube: scores a shifted Halton design, then
/// runs coordinate-descent passes from the best few candidates.
pub fn propose_next_unit(surrogate: &GpSurrogate, beta: f64, seed: u64) -> Vec<f64> {
    let acq = |x: &[f64]| {
        let (m, v) = surrogate.predict_unit(x);
        acquisition_lcb(m, v, beta)
    };
    let mut scored: Vec<(f64, Vec<f64>)> = candidates(surrogate.dim(), N_CANDIDATES, seed)
        .into_iter()
        .map(|x| (acq(&x), x))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut best = scored[0].clone();
    for (start_val, start) in scored.into_iter().take(N_REFINE_STARTS) {
        let (mut val, mut x) = (start_val, start);
        let mut step = REFINE_INITIAL_STEP;
        for _ in 0..N_REFINE_PASSES {
            let mut moved = false;
            for d in 0..x.len() {
                for dir in [1.0, -1.0] {
                    let mut y = x.clone();
                    y[d] = (y[d] + dir * step).clamp(0.0, 1.0);
                    let v = acq(&y);
                    if v < val {
                        val = v;
                        x = y;
                        moved = true;
                        break;
                    }
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        if val < best.0 {
            best = (val, x);
        }
    }
    best.1
}

/// Next point to evaluate, in the original scale. Deterministic given `seed`.
pub fn propose_next(surrogate: &GpSurrogate, space: &SearchSpace, beta: f64, seed: u64) -> HyperParams {
    space.from_unit(&propose_next_unit(surrogate, beta, seed))
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

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoConfig {
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_n_init")]
    pub n_init: usize,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub gp: GpConfig,
}

impl Default for BoConfig {
    fn default() -> Self {
        Self {
            budget: default_budget(),
            n_init: default_n_init(),
            beta: default_beta(),
            gp: GpConfig::default(),
        }
    }
}

impl BoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_init < 1 {
            return Err(Error::config("n_init", "must be at least 1"));
        }
        if self.budget < self.n_init {
            return Err(Error::config("budget", "must be at least n_init"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::config("beta", "must be non-negative"));
        }
        self.gp.validate()
    }
}

/// What an objective returns for one hyperparameter setting.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub score: f64,
    pub diagnostics: Option<EstimatorDiagnostics>,
}

impl From<f64> for Evaluation {
    fn from(score: f64) -> Self {
        Self {
            score,
            diagnostics: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub theta: HyperParams,
    /// `+inf` for failed evaluations.
    #[serde(with = "score_serde")]
    pub score: f64,
    /// Seed that produced this proposal.
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<EstimatorDiagnostics>,
    /// Not serialized, so that reports stay byte-identical across runs.
    #[serde(skip)]
    pub wall_time: Duration,
}

/// JSON has no infinity; failed scores are written as `null`.
mod score_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoHistory {
    pub trials: Vec<Trial>,
    pub incumbent_index: usize,
}

impl BoHistory {
    pub fn incumbent(&self) -> &Trial {
        &self.trials[self.incumbent_index]
    }

    /// Best score after each trial.
    pub fn incumbent_trace(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.trials
            .iter()
            .map(|t| {
                best = best.min(t.score);
                best
            })
            .collect()
    }

    fn push(&mut self, trial: Trial) {
        let better = trial.score < self.trials.get(self.incumbent_index).map_or(f64::INFINITY, |t| t.score);
        self.trials.push(trial);
        if better || self.trials.len() == 1 {
            self.incumbent_index = self.trials.len() - 1;
        }
    }
}

fn too_close(x: &[f64], seen: &[Vec<f64>]) -> bool {
    seen.iter()
        .any(|p| p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() < DUPLICATE_RADIUS)
}

fn nudge(x: &mut [f64]) {
    for v in x.iter_mut() {
        *v = if *v + DUPLICATE_SHIFT <= 1.0 {
            *v + DUPLICATE_SHIFT
        } else {
            *v - DUPLICATE_SHIFT
        };
    }
}

/// Runs `n_init` uniform-random trials followed by `budget - n_init`
/// GP-LCB proposals. Failed evaluations are recorded with score `+inf`.
pub fn run_bo<F>(mut objective: F, space: &SearchSpace, cfg: &BoConfig, seed: u64) -> Result<BoHistory>
where
    F: FnMut(&HyperParams) -> Result<Evaluation>,
{
    cfg.validate()?;
    let mut history = BoHistory {
        trials: Vec::with_capacity(cfg.budget),
        incumbent_index: 0,
    };
    let mut unit_points: Vec<Vec<f64>> = Vec::with_capacity(cfg.budget);
    let init_seed = derive_seed(seed, 0);
    let mut init_rng = ChaCha8Rng::seed_from_u64(init_seed);

    for t in 0..cfg.budget {
        let (mut u, trial_seed) = if t < cfg.n_init {
            ((0..space.len()).map(|_| init_rng.random()).collect::<Vec<f64>>(), init_seed)
        } else {
            let s = derive_seed(seed, t as u64 + 1);
            (propose(&history, &unit_points, cfg, s, &mut init_rng, space.len()), s)
        };
        if too_close(&u, &unit_points) {
            nudge(&mut u);
        }
        let theta = space.from_unit(&u);
        // Keep the stored coordinates consistent with the evaluated point.
        let u = space.to_unit(&theta)?;

        let start = Instant::now();
        let outcome = objective(&theta);
        let wall_time = start.elapsed();
        let trial = match outcome {
            Ok(ev) if ev.score.is_finite() => Trial {
                theta,
                score: ev.score,
                seed: trial_seed,
                error: None,
                diagnostics: ev.diagnostics,
                wall_time,
            },
            Ok(ev) => Trial {
                theta,
                score: f64::INFINITY,
                seed: trial_seed,
                error: Some(format!("non-finite score {}", ev.score)),
                diagnostics: ev.diagnostics,
                wall_time,
            },
            Err(e) => {
                warn!("trial {t} failed: {e}");
                Trial {
                    theta,
                    score: f64::INFINITY,
                    seed: trial_seed,
                    error: Some(e.to_string()),
                    diagnostics: None,
                    wall_time,
                }
            }
        };
        debug!("trial {t}: theta {:?} score {}", trial.theta.values(), trial.score);
        unit_points.push(u);
        history.push(trial);
    }
    Ok(history)
}

fn propose(
    history: &BoHistory,
    unit_points: &[Vec<f64>],
    cfg: &BoConfig,
    seed: u64,
    fallback: &mut ChaCha8Rng,
    dim: usize,
) -> Vec<f64> {
    let worst_finite = history
        .trials
        .iter()
        .map(|t| t.score)
        .filter(|s| s.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if worst_finite == f64::NEG_INFINITY {
        return (0..dim).map(|_| fallback.random()).collect();
    }
    // Failed trials enter the surrogate at the worst observed score.
    let scores: Vec<f64> = history
        .trials
        .iter()
        .map(|t| if t.score.is_finite() { t.score } else { worst_finite })
        .collect();
    match gp_fit(unit_points, &scores, &cfg.gp) {
        Ok(gp) => propose_next_unit(&gp, cfg.beta, seed),
        Err(e) => {
            warn!("surrogate fit failed ({e}); proposing at random");
            (0..dim).map(|_| fallback.random()).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::space::Dim;
    use super::*;

    fn line() -> SearchSpace {
        SearchSpace::new(vec![Dim::linear("theta", -8.0, 8.0)]).unwrap()
    }

    #[test]
    fn lcb_examples() {
        assert_eq!(acquisition_lcb(1.0, 0.0, 2.0), 1.0);
        assert_eq!(acquisition_lcb(1.0, 4.0, 2.0), -3.0);
        for (m, v) in [(0.3, 0.1), (-2.0, 9.0), (5.0, 0.0)] {
            assert!(acquisition_lcb(m, v, 2.0) <= m);
        }
    }

    #[test]
    fn halton_candidates_fill_the_cube() {
        let c = candidates(2, 256, 1);
        assert!(c.iter().flatten().all(|&v| (0.0..1.0).contains(&v)));
        for q in 0..4 {
            let lo = q as f64 / 4.0;
            let count = c.iter().filter(|x| x[0] >= lo && x[0] < lo + 0.25).count();
            assert!((60..=68).contains(&count), "{count}");
        }
    }

    #[test]
    fn proposal_lands_in_low_region() {
        // Scores increase monotonically left to right.
        let pts: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64 / 8.0]).collect();
        let ys: Vec<f64> = pts.iter().map(|p| 3.0 * p[0]).collect();
        let gp = gp_fit(&pts, &ys, &GpConfig::default()).unwrap();
        let u = propose_next_unit(&gp, 2.0, 5);
        // Dense-grid argmin of the acquisition as oracle.
        let grid_best = (0..=4000)
            .map(|i| i as f64 / 4000.0)
            .min_by(|a, b| {
                let fa = gp.predict_unit(&[*a]);
                let fb = gp.predict_unit(&[*b]);
                acquisition_lcb(fa.0, fa.1, 2.0).total_cmp(&acquisition_lcb(fb.0, fb.1, 2.0))
            })
            .unwrap();
        assert!(u[0] < 0.5);
        let (m, v) = gp.predict_unit(&u);
        let (gm, gv) = gp.predict_unit(&[grid_best]);
        assert!(acquisition_lcb(m, v, 2.0) <= acquisition_lcb(gm, gv, 2.0) + 1e-6);
    }

    #[test]
    fn zero_variance_proposal_minimizes_mean() {
        // beta = 0 makes the acquisition the posterior mean.
        let pts: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 / 5.0]).collect();
        let ys: Vec<f64> = pts.iter().map(|p| (p[0] - 0.7).powi(2)).collect();
        let gp = gp_fit(&pts, &ys, &GpConfig::default()).unwrap();
        let u = propose_next_unit(&gp, 0.0, 2);
        let best_candidate = candidates(1, N_CANDIDATES, 2)
            .into_iter()
            .map(|x| gp.predict_unit(&x).0)
            .fold(f64::INFINITY, f64::min);
        assert!(gp.predict_unit(&u).0 <= best_candidate);
    }

    #[test]
    fn proposals_are_deterministic() {
        let pts = vec![vec![0.1], vec![0.4], vec![0.8]];
        let gp = gp_fit(&pts, &[1.0, 0.2, 0.9], &GpConfig::default()).unwrap();
        assert_eq!(propose_next_unit(&gp, 2.0, 9), propose_next_unit(&gp, 2.0, 9));
    }

    #[test]
    fn finds_quadratic_minimum() {
        let h = run_bo(|t| Ok((t.values()[0] - 0.3).powi(2).into()), &line(), &BoConfig::default(), 3).unwrap();
        assert_eq!(h.trials.len(), 50);
        assert!((h.incumbent().theta.values()[0] - 0.3).abs() < 0.1);
    }

    #[test]
    fn pure_random_search_when_budget_equals_init() {
        let cfg = BoConfig {
            budget: 5,
            n_init: 5,
            ..BoConfig::default()
        };
        let h = run_bo(|t| Ok(t.values()[0].abs().into()), &line(), &cfg, 1).unwrap();
        assert_eq!(h.trials.len(), 5);
    }

    #[test]
    fn history_invariants_and_determinism() {
        let cfg = BoConfig {
            budget: 15,
            ..BoConfig::default()
        };
        let f = |t: &HyperParams| Ok((t.values()[0].sin() + 0.1 * t.values()[0]).into());
        let a = run_bo(f, &line(), &cfg, 7).unwrap();
        let b = run_bo(f, &line(), &cfg, 7).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let min = a.trials.iter().map(|t| t.score).fold(f64::INFINITY, f64::min);
        assert_eq!(a.incumbent().score, min);
        let trace = a.incumbent_trace();
        assert!(trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(a.trials.iter().all(|t| line().contains(&t.theta)));
    }

    #[test]
    fn failures_score_infinity_and_run_continues() {
        let cfg = BoConfig {
            budget: 12,
            ..BoConfig::default()
        };
        let f = |t: &HyperParams| {
            if t.values()[0] > 0.0 {
                Err(Error::Training("boom".into()))
            } else {
                Ok((t.values()[0] + 4.0).powi(2).into())
            }
        };
        let h = run_bo(f, &line(), &cfg, 2).unwrap();
        assert_eq!(h.trials.len(), 12);
        let failed: Vec<&Trial> = h.trials.iter().filter(|t| t.error.is_some()).collect();
        assert!(failed.iter().all(|t| t.score == f64::INFINITY));
        if failed.len() < h.trials.len() {
            assert!(h.incumbent().score.is_finite());
        }
        let json = serde_json::to_string(&h).unwrap();
        let back: BoHistory = serde_json::from_str(&json).unwrap();
        assert_eq!(back.trials.len(), 12);
    }

    #[test]
    fn log_dimension_proposals_stay_in_bounds() {
        let space = SearchSpace::new(vec![Dim::log("reg", 1e-4, 1e2)]).unwrap();
        let cfg = BoConfig {
            budget: 12,
            ..BoConfig::default()
        };
        let h = run_bo(|t| Ok((t.values()[0].ln() - 0.5).powi(2).into()), &space, &cfg, 0).unwrap();
        assert!(h.trials.iter().all(|t| space.contains(&t.theta)));
    }

    #[test]
    fn rejects_budget_below_init() {
        let cfg = BoConfig {
            budget: 3,
            n_init: 5,
            ..BoConfig::default()
        };
        assert!(run_bo(|_| Ok(0.0.into()), &line(), &cfg, 0).is_err());
    }
}
