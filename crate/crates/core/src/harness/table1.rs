use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::estimators::{
    analytic_variance, optimal_variance, population_divergence, population_objective, uniform_weights, vr_weights,
    DivergenceEstimate, SourceWeighting,
};
use crate::Result;

// Two outcomes with losses 10 and 1; one target, two sources.
const LOSS: [f64; 2] = [10.0, 1.0];
const P_T: [f64; 2] = [0.8, 0.2];
const P_S: [[f64; 2]; 2] = [[0.2, 0.8], [0.9, 0.1]];
const TOL: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub computed: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn new(name: &str, computed: f64, expected: f64) -> Self {
        Self {
            name: name.to_string(),
            computed,
            expected,
            tolerance: TOL,
            passed: (computed - expected).abs() <= TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Report {
    pub checks: Vec<Check>,
    pub passed: bool,
    /// Not serialized; reports stay deterministic.
    #[serde(skip)]
    pub elapsed_secs: f64,
}

/// Recomputes the two-source worked example (one sample per source) and
/// compares against the published figures.
pub fn verify_table1() -> Result<Table1Report> {
    let start = Instant::now();
    let n = [1usize, 1];
    let f_t = population_objective(&LOSS, &P_T)?;
    let divs = P_S
        .iter()
        .map(|p| population_divergence(&LOSS, p, &P_T))
        .collect::<Result<Vec<_>>>()?;
    let uniform = uniform_weights(&n)?;
    let drop_first = SourceWeighting::custom(vec![0.0, 1.0], &n)?;
    let vr = vr_weights(&DivergenceEstimate::exact(divs.clone())?, &n)?;
    let checks = vec![
        Check::new("target objective", f_t, 8.2),
        Check::new("divergence source 1", divs[0], 252.81),
        Check::new("divergence source 2", divs[1], 4.27),
        Check::new("variance uniform", analytic_variance(&uniform, &divs, &n)?, 64.27),
        Check::new("variance source 2 only", analytic_variance(&drop_first, &divs, &n)?, 4.27),
        Check::new("lambda* source 1", vr.lambda()[0], 0.0166),
        Check::new("lambda* source 2", vr.lambda()[1], 0.9834),
        Check::new("variance optimal", analytic_variance(&vr, &divs, &n)?, 4.2001),
        Check::new("variance optimal closed form", optimal_variance(&divs, &n), 4.2001),
    ];
    let passed = checks.iter().all(|c| c.passed);
    Ok(Table1Report {
        checks,
        passed,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_worked_example() {
        let r = verify_table1().unwrap();
        for c in &r.checks {
            assert!(c.passed, "{}: {} vs {}", c.name, c.computed, c.expected);
        }
        assert!(r.passed);
    }
}
