//! Data model, synthetic toy tasks, CSV ingestion and three-fold source splits.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Dense row-major feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Features {
    n_rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl Features {
    /// Builds a matrix from row-major data. All entries must be finite.
    pub fn from_row_major(n_rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Input("feature dimension must be at least 1".into()));
        }
        if data.len() != n_rows * dim {
            return Err(Error::Input(format!(
                "expected {} values for a {n_rows}x{dim} matrix, got {}",
                n_rows * dim,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!(
                "non-finite feature at row {}, column {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self { n_rows, dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::Input(format!(
                "row {i} has {} columns, expected {dim}",
                rows[i].len()
            )));
        }
        Self::from_row_major(rows.len(), dim, rows.concat())
    }

    /// One-dimensional column of values.
    pub fn column(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::from_row_major(n, 1, values)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            n_rows: indices.len(),
            dim: self.dim,
            data,
        }
    }
}

/// Target-task inputs without labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnlabeledDataset {
    features: Features,
}

impl UnlabeledDataset {
    pub fn new(features: Features) -> Result<Self> {
        if features.n_rows() == 0 {
            return Err(Error::Input("unlabeled dataset needs at least one row".into()));
        }
        Ok(Self { features })
    }

    pub fn features(&self) -> &Features {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.n_rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A source task: inputs with real-valued labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    features: Features,
    labels: Vec<f64>,
    task_id: usize,
}

impl LabeledDataset {
    pub fn new(features: Features, labels: Vec<f64>, task_id: usize) -> Result<Self> {
        if labels.len() != features.n_rows() {
            return Err(Error::Input(format!(
                "task {task_id}: {} labels for {} rows",
                labels.len(),
                features.n_rows()
            )));
        }
        if let Some(i) = labels.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("task {task_id}: non-finite label at row {i}")));
        }
        Ok(Self {
            features,
            labels,
            task_id,
        })
    }

    pub fn features(&self) -> &Features {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn task_id(&self) -> usize {
        self.task_id
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            task_id: self.task_id,
        }
    }

    /// Drops the labels.
    pub fn to_unlabeled(&self) -> Result<UnlabeledDataset> {
        UnlabeledDataset::new(self.features.clone())
    }
}

/// Labels that must only be read by the oracle baseline and final evaluation.
///
/// The pipeline for label-free estimators takes an [`UnlabeledDataset`] and
/// never sees this type.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenLabels(Vec<f64>);

impl HiddenLabels {
    pub fn new(labels: Vec<f64>) -> Self {
        Self(labels)
    }

    pub fn oracle_access(&self) -> &[f64] {
        &self.0
    }
}

/// Either kind of dataset returned by [`load_csv`].
#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Labeled(LabeledDataset),
    Unlabeled(UnlabeledDataset),
}

/// Three disjoint folds of one source task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSplit {
    pub density: LabeledDataset,
    pub train: LabeledDataset,
    pub val: LabeledDataset,
}

fn default_slope() -> f64 {
    0.7
}
fn default_intercept() -> f64 {
    0.3
}
fn default_noise_sd() -> f64 {
    1.0
}

/// Parameters of the one-dimensional toy regression world.
///
/// Each task draws `mu ~ U(-c, c)`, then `x ~ N(mu, 1)` and
/// `y ~ N(slope * x + intercept, noise_sd^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyConfig {
    pub k: usize,
    pub n: usize,
    pub c_source: Vec<f64>,
    pub c_target: f64,
    #[serde(default = "default_slope")]
    pub slope: f64,
    #[serde(default = "default_intercept")]
    pub intercept: f64,
    #[serde(default = "default_noise_sd")]
    pub noise_sd: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ToyConfig {
    /// `k` sources of `n` rows, all sources sharing half-width `c_source`.
    pub fn new(k: usize, n: usize, c_source: f64, c_target: f64, seed: u64) -> Self {
        Self {
            k,
            n,
            c_source: vec![c_source; k],
            c_target,
            slope: default_slope(),
            intercept: default_intercept(),
            noise_sd: default_noise_sd(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::config("k", "need at least one source task"));
        }
        if self.n < 2 {
            return Err(Error::config("n", "need at least two samples per task"));
        }
        if self.c_source.len() != self.k {
            return Err(Error::config(
                "c_source",
                format!("expected {} entries, got {}", self.k, self.c_source.len()),
            ));
        }
        if self.c_source.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
            return Err(Error::config("c_source", "half-widths must be positive and finite"));
        }
        if !(self.c_target > 0.0 && self.c_target.is_finite()) {
            return Err(Error::config("c_target", "half-width must be positive and finite"));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::config("noise_sd", "must be non-negative and finite"));
        }
        if !self.slope.is_finite() {
            return Err(Error::config("slope", "must be finite"));
        }
        if !self.intercept.is_finite() {
            return Err(Error::config("intercept", "must be finite"));
        }
        Ok(())
    }
}

/// Output of [`generate_toy`].
#[derive(Debug, Clone)]
pub struct ToyData {
    pub target: UnlabeledDataset,
    pub target_labels: HiddenLabels,
    pub target_mu: f64,
    pub sources: Vec<LabeledDataset>,
}

impl ToyData {
    /// Target inputs joined with the hidden labels, for the oracle baseline.
    pub fn oracle_target(&self) -> Result<LabeledDataset> {
        LabeledDataset::new(
            self.target.features().clone(),
            self.target_labels.oracle_access().to_vec(),
            0,
        )
    }
}

/// Generates the target task (index 0 of the RNG stream) and `k` sources.
pub fn generate_toy(cfg: &ToyConfig) -> Result<ToyData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

    let draw_task = |c: f64, rng: &mut ChaCha8Rng| {
        let mu = rng.random_range(-c..c);
        let xs: Vec<f64> = (0..cfg.n).map(|_| mu + std_normal.sample(rng)).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| cfg.slope * x + cfg.intercept + cfg.noise_sd * std_normal.sample(rng))
            .collect();
        (mu, xs, ys)
    };

    let (target_mu, tx, ty) = draw_task(cfg.c_target, &mut rng);
    let target = UnlabeledDataset::new(Features::column(tx)?)?;
    let mut sources = Vec::with_capacity(cfg.k);
    for (j, &c) in cfg.c_source.iter().enumerate() {
        let (_, xs, ys) = draw_task(c, &mut rng);
        sources.push(LabeledDataset::new(Features::column(xs)?, ys, j + 1)?);
    }
    Ok(ToyData {
        target,
        target_labels: HiddenLabels::new(ty),
        target_mu,
        sources,
    })
}

fn floor_count(n: usize, frac: f64) -> usize {
    // Guards against 70 * 0.7 landing just below 49.
    (n as f64 * frac + 1e-9).floor() as usize
}

/// Fold sizes `(density, train, val)` for a dataset of `n` rows.
pub fn split_sizes(n: usize, density_frac: f64, train_frac_of_rest: f64) -> Result<(usize, usize, usize)> {
    if !(density_frac > 0.0 && density_frac < 1.0) {
        return Err(Error::Split(format!("density_frac {density_frac} not in (0, 1)")));
    }
    if !(train_frac_of_rest > 0.0 && train_frac_of_rest < 1.0) {
        return Err(Error::Split(format!(
            "train_frac_of_rest {train_frac_of_rest} not in (0, 1)"
        )));
    }
    let density = floor_count(n, density_frac);
    let rest = n - density;
    let train = floor_count(rest, train_frac_of_rest);
    let val = rest - train;
    if density == 0 || train == 0 || val == 0 {
        return Err(Error::Split(format!(
            "{n} rows give empty fold (density {density}, train {train}, val {val})"
        )));
    }
    Ok((density, train, val))
}

/// Uniformly random partition into density/train/val folds via a seeded shuffle.
pub fn split_source(
    ds: &LabeledDataset,
    density_frac: f64,
    train_frac_of_rest: f64,
    seed: u64,
) -> Result<SourceSplit> {
    let (n_density, n_train, _) = split_sizes(ds.len(), density_frac, train_frac_of_rest)?;
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (density, rest) = order.split_at(n_density);
    let (train, val) = rest.split_at(n_train);
    Ok(SourceSplit {
        density: ds.select(density),
        train: ds.select(train),
        val: ds.select(val),
    })
}

/// Reads a headered numeric CSV file.
///
/// With `label_column` present in the header the result is labeled and the
/// remaining columns, in header order, are the features. Without it the
/// result is unlabeled. Naming a column that does not exist is an error.
pub fn load_csv(path: impl AsRef<Path>, label_column: Option<&str>) -> Result<Dataset> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let fail = |reason: String| Error::Ingestion {
        path: shown.clone(),
        reason,
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| fail(e.to_string()))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| fail(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header.is_empty() {
        return Err(fail("empty header".into()));
    }

    let label_idx = match label_column {
        Some(name) => Some(
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| fail(format!("label column {name:?} not in header")))?,
        ),
        None => None,
    };
    let dim = header.len() - usize::from(label_idx.is_some());
    if dim == 0 {
        return Err(fail("no feature columns".into()));
    }

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut n_rows = 0;
    for (r, record) in reader.records().enumerate() {
        // Row numbers are 1-based data rows; the header is row 0.
        let row_no = r + 1;
        let record = record.map_err(|e| fail(format!("row {row_no}: {e}")))?;
        if record.len() != header.len() {
            return Err(fail(format!(
                "row {row_no}: {} cells, header has {}",
                record.len(),
                header.len()
            )));
        }
        for (c, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| {
                fail(format!("row {row_no}, column {:?}: non-numeric cell {cell:?}", header[c]))
            })?;
            if !value.is_finite() {
                return Err(fail(format!(
                    "row {row_no}, column {:?}: non-finite cell {cell:?}",
                    header[c]
                )));
            }
            if Some(c) == label_idx {
                labels.push(value);
            } else {
                features.push(value);
            }
        }
        n_rows += 1;
    }
    if n_rows == 0 {
        return Err(fail("no data rows".into()));
    }

    let features = Features::from_row_major(n_rows, dim, features)?;
    Ok(match label_idx {
        Some(_) => Dataset::Labeled(LabeledDataset::new(features, labels, 0)?),
        None => Dataset::Unlabeled(UnlabeledDataset::new(features)?),
    })
}
