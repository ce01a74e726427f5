use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dim {
    pub name: String,
    pub low: f64,
    pub high: f64,
    pub scale: Scale,
}

impl Dim {
    pub fn linear(name: &str, low: f64, high: f64) -> Self {
        Self {
            name: name.to_owned(),
            low,
            high,
            scale: Scale::Linear,
        }
    }

    pub fn log(name: &str, low: f64, high: f64) -> Self {
        Self {
            name: name.to_owned(),
            low,
            high,
            scale: Scale::Log,
        }
    }

    fn transformed_bounds(&self) -> (f64, f64) {
        match self.scale {
            Scale::Linear => (self.low, self.high),
            Scale::Log => (self.low.ln(), self.high.ln()),
        }
    }

    fn to_unit(&self, v: f64) -> f64 {
        let (lo, hi) = self.transformed_bounds();
        let t = match self.scale {
            Scale::Linear => v,
            Scale::Log => v.ln(),
        };
        (t - lo) / (hi - lo)
    }

    fn from_unit(&self, u: f64) -> f64 {
        let (lo, hi) = self.transformed_bounds();
        let t = lo + u.clamp(0.0, 1.0) * (hi - lo);
        let v = match self.scale {
            Scale::Linear => t,
            Scale::Log => t.exp(),
        };
        v.clamp(self.low, self.high)
    }
}

/// Box-constrained domain. Optimization happens in the unit cube; log
/// dimensions are mapped through `ln` first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Dim>", into = "Vec<Dim>")]
pub struct SearchSpace {
    dims: Vec<Dim>,
}

impl TryFrom<Vec<Dim>> for SearchSpace {
    type Error = Error;

    fn try_from(dims: Vec<Dim>) -> Result<Self> {
        Self::new(dims)
    }
}

impl From<SearchSpace> for Vec<Dim> {
    fn from(space: SearchSpace) -> Self {
        space.dims
    }
}

impl SearchSpace {
    pub fn new(dims: Vec<Dim>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::config("space", "needs at least one dimension"));
        }
        for d in &dims {
            if !(d.low.is_finite() && d.high.is_finite() && d.low < d.high) {
                return Err(Error::config(
                    format!("space.{}", d.name),
                    format!("need finite low < high, got [{}, {}]", d.low, d.high),
                ));
            }
            if d.scale == Scale::Log && d.low <= 0.0 {
                return Err(Error::config(format!("space.{}", d.name), "log scale needs low > 0"));
            }
        }
        Ok(Self { dims })
    }

    pub fn dims(&self) -> &[Dim] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn contains(&self, theta: &HyperParams) -> bool {
        theta.values.len() == self.dims.len()
            && self
                .dims
                .iter()
                .zip(&theta.values)
                .all(|(d, &v)| v >= d.low && v <= d.high)
    }

    pub fn to_unit(&self, theta: &HyperParams) -> Result<Vec<f64>> {
        if theta.values.len() != self.dims.len() {
            return Err(Error::Input(format!(
                "{} values for a {}-dimensional space",
                theta.values.len(),
                self.dims.len()
            )));
        }
        Ok(self.dims.iter().zip(&theta.values).map(|(d, &v)| d.to_unit(v)).collect())
    }

    /// Maps unit-cube coordinates (clamped into `[0, 1]`) back to the original scale.
    pub fn from_unit(&self, u: &[f64]) -> HyperParams {
        HyperParams::new(self.dims.iter().zip(u).map(|(d, &x)| d.from_unit(x)).collect())
    }
}

/// A point of the search space, in the original (untransformed) scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HyperParams {
    values: Vec<f64>,
}

impl HyperParams {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}
