//! CSV ingestion, standardization, per-class splitting and synthetic data.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{NpfsError, Result};

/// Which CSV column holds the class labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    /// Non-negative integers are column indices, anything else a header name.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => LabelColumn::Index(i),
            Err(_) => LabelColumn::Name(s.to_string()),
        })
    }
}

impl std::fmt::Display for LabelColumn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LabelColumn::Index(i) => write!(f, "{i}"),
            LabelColumn::Name(n) => f.write_str(n),
        }
    }
}

/// A parsed CSV file before it becomes a [`Dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub samples: Array2<f64>,
    pub labels: Option<Vec<i64>>,
    pub feature_names: Option<Vec<String>>,
}

/// Reads a numeric CSV. Row and column numbers in errors are 1-based and
/// refer to the file (header line included).
pub fn read_table(path: impl AsRef<Path>, label: Option<&LabelColumn>, has_header: bool) -> Result<Table> {
    let file = File::open(path.as_ref())?;
    let mut reader = csv::ReaderBuilder::new().has_headers(has_header).trim(csv::Trim::All).from_reader(file);
    let header: Option<Vec<String>> = if has_header {
        let h = reader.headers().map_err(csv_error)?;
        Some(h.iter().map(str::to_string).collect())
    } else {
        None
    };

    let label_idx: Option<usize> = match (label, &header) {
        (None, _) => None,
        (Some(LabelColumn::Index(i)), _) => Some(*i),
        (Some(LabelColumn::Name(name)), Some(h)) => Some(
            h.iter()
                .position(|c| c == name)
                .ok_or_else(|| NpfsError::MissingLabelColumn(name.clone()))?,
        ),
        (Some(LabelColumn::Name(name)), None) => return Err(NpfsError::MissingLabelColumn(name.clone())),
    };
    let mut width = header.as_ref().map(Vec::len);
    if let (Some(i), Some(w)) = (label_idx, width) {
        if i >= w {
            return Err(NpfsError::MissingLabelColumn(i.to_string()));
        }
    }

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0;
    let line_offset = usize::from(has_header) + 1;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let row = r + line_offset;
        let w = *width.get_or_insert(record.len());
        if let Some(i) = label_idx {
            if i >= w {
                return Err(NpfsError::MissingLabelColumn(i.to_string()));
            }
        }
        if record.len() != w {
            return Err(NpfsError::ParseError {
                row,
                column: record.len().min(w) + 1,
                message: format!("expected {w} fields, found {}", record.len()),
            });
        }
        for (j, field) in record.iter().enumerate() {
            if Some(j) == label_idx {
                let l = field.parse::<i64>().map_err(|_| NpfsError::ParseError {
                    row,
                    column: j + 1,
                    message: format!("label `{field}` is not an integer"),
                })?;
                labels.push(l);
            } else {
                let v = field.parse::<f64>().map_err(|_| NpfsError::ParseError {
                    row,
                    column: j + 1,
                    message: format!("`{field}` is not a number"),
                })?;
                if !v.is_finite() {
                    return Err(NpfsError::ParseError {
                        row,
                        column: j + 1,
                        message: format!("non-finite value `{field}`"),
                    });
                }
                values.push(v);
            }
        }
        rows += 1;
    }
    let width = width.unwrap_or(0);
    let d = width - usize::from(label_idx.is_some()).min(width);
    let samples = Array2::from_shape_vec((rows, d), values)
        .map_err(|e| NpfsError::InvalidDataset(e.to_string()))?;
    let feature_names = header.map(|h| {
        h.into_iter()
            .enumerate()
            .filter_map(|(j, name)| (Some(j) != label_idx).then_some(name))
            .collect()
    });
    Ok(Table { samples, labels: label_idx.map(|_| labels), feature_names })
}

fn csv_error(e: csv::Error) -> NpfsError {
    let row = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => NpfsError::Io(io.to_string()),
        other => NpfsError::ParseError { row, column: 0, message: format!("{other:?}") },
    }
}

/// Loads a labeled dataset from CSV.
pub fn load_csv(path: impl AsRef<Path>, label: &LabelColumn, has_header: bool) -> Result<Dataset> {
    let table = read_table(path, Some(label), has_header)?;
    let labels = table.labels.expect("label column requested");
    Dataset::new(table.samples, &labels, table.feature_names)
}

/// Writes `data` as CSV with the original labels in column 0. A header is
/// written only when the dataset has feature names.
pub fn save_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = std::io::BufWriter::new(File::create(path.as_ref())?);
    if let Some(names) = data.feature_names() {
        write!(out, "label")?;
        for n in names {
            write!(out, ",{n}")?;
        }
        writeln!(out)?;
    }
    let labels = data.original_labels();
    for (row, label) in data.samples().rows().into_iter().zip(labels) {
        write!(out, "{label}")?;
        for v in row {
            // `{:?}` is the shortest representation that parses back exactly
            write!(out, ",{v:?}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Column centering and scaling learned on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub means: Vec<f64>,
    /// Population (1/n) standard deviations; 1 for constant columns.
    pub stds: Vec<f64>,
    pub constant_columns: Vec<usize>,
}

impl StandardizationParams {
    pub fn fit(samples: ArrayView2<'_, f64>) -> Self {
        let n = samples.nrows() as f64;
        let mut means = Vec::with_capacity(samples.ncols());
        let mut stds = Vec::with_capacity(samples.ncols());
        let mut constant_columns = Vec::new();
        for (j, col) in samples.columns().into_iter().enumerate() {
            let mean = col.sum() / n;
            let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            let std = var.sqrt();
            means.push(mean);
            if std <= 1e-12 * mean.abs().max(f64::MIN_POSITIVE) {
                constant_columns.push(j);
                stds.push(1.0);
            } else {
                stds.push(std);
            }
        }
        Self { means, stds, constant_columns }
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn apply(&self, samples: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if samples.ncols() != self.dim() {
            return Err(NpfsError::LengthMismatch { left: samples.ncols(), right: self.dim() });
        }
        let mut out = samples.to_owned();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.means).zip(&self.stds) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }
}

/// Standardizes `train` with its own column statistics and applies the same
/// transform to every dataset in `others`.
pub fn standardize(train: &Dataset, others: &[Dataset]) -> Result<(Dataset, Vec<Dataset>, StandardizationParams)> {
    let params = StandardizationParams::fit(train.samples());
    let train_out = train.with_samples(params.apply(train.samples())?)?;
    let others_out = others
        .iter()
        .map(|o| o.with_samples(params.apply(o.samples())?))
        .collect::<Result<Vec<_>>>()?;
    Ok((train_out, others_out, params))
}

/// Draws exactly `n_per_class` training rows from every class; all other rows
/// form the test set. Both keep the original row order.
pub fn split_per_class(data: &Dataset, n_per_class: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    if n_per_class == 0 {
        return Err(NpfsError::InvalidConfig("n_per_class must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut rows) in data.class_indices().into_iter().enumerate() {
        if rows.len() <= n_per_class {
            return Err(NpfsError::InsufficientClassSamples {
                class: data.class_labels()[class],
                available: rows.len(),
                requested: n_per_class,
            });
        }
        rows.shuffle(&mut rng);
        train.extend_from_slice(&rows[..n_per_class]);
        test.extend_from_slice(&rows[n_per_class..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((data.select_rows(&train)?, data.select_rows(&test)?))
}

/// Parameters of a synthetic Gaussian classification problem.
///
/// Class means differ only on `informative` features: on the `t`-th
/// informative feature, class `c` is centred at
/// `separation * (((c + t) mod C) - (C - 1) / 2)` with unit variance.
/// The remaining (nuisance) features share one zero-mean distribution across
/// classes: a unit-variance AR(1) chain in column order, whose correlation
/// `rho = (sqrt(condition) - 1) / (sqrt(condition) + 1)` makes the nuisance
/// covariance condition number approach `condition` as the chain grows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub dim: usize,
    pub informative: Vec<usize>,
    pub separation: f64,
    pub condition: f64,
    pub n_per_class: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_classes: 3,
            dim: 20,
            informative: vec![0, 1, 2],
            separation: 2.0,
            condition: 10.0,
            n_per_class: 100,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(NpfsError::SpecError(m));
        if self.n_classes < 2 {
            return err(format!("need at least 2 classes, got {}", self.n_classes));
        }
        if self.dim == 0 {
            return err("dimension must be positive".into());
        }
        if self.n_per_class < 2 {
            return err(format!("need at least 2 samples per class, got {}", self.n_per_class));
        }
        let mut seen = vec![false; self.dim];
        for &f in &self.informative {
            if f >= self.dim {
                return err(format!("informative feature {f} outside 0..{}", self.dim));
            }
            if std::mem::replace(&mut seen[f], true) {
                return err(format!("informative feature {f} listed twice"));
            }
        }
        if !(self.separation.is_finite() && self.separation >= 0.0) {
            return err(format!("separation must be finite and >= 0, got {}", self.separation));
        }
        if !(self.condition.is_finite() && self.condition >= 1.0) {
            return err(format!("condition must be finite and >= 1, got {}", self.condition));
        }
        Ok(())
    }

    /// Lag-one correlation of the nuisance chain.
    pub fn nuisance_correlation(&self) -> f64 {
        let r = self.condition.sqrt();
        (r - 1.0) / (r + 1.0)
    }

    /// Population mean of class `class`.
    pub fn class_mean(&self, class: usize) -> Array1<f64> {
        let c = self.n_classes as f64;
        let mut mean = Array1::zeros(self.dim);
        for (t, &f) in self.informative.iter().enumerate() {
            let slot = ((class + t) % self.n_classes) as f64;
            mean[f] = self.separation * (slot - (c - 1.0) / 2.0);
        }
        mean
    }

    fn nuisance(&self) -> Vec<usize> {
        (0..self.dim).filter(|f| !self.informative.contains(f)).collect()
    }

    /// Population covariance, shared by every class.
    pub fn covariance(&self) -> Array2<f64> {
        let mut cov = Array2::eye(self.dim);
        let rho = self.nuisance_correlation();
        let nuisance = self.nuisance();
        for (a, &fa) in nuisance.iter().enumerate() {
            for (b, &fb) in nuisance.iter().enumerate() {
                cov[[fa, fb]] = rho.powi((a as i32 - b as i32).abs());
            }
        }
        cov
    }
}

/// Samples a dataset from `spec`. Rows are grouped by class; labels are
/// `0..n_classes`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let rho = spec.nuisance_correlation();
    let innovation = (1.0 - rho * rho).sqrt();
    let nuisance = spec.nuisance();
    let n = spec.n_classes * spec.n_per_class;
    let mut samples = Array2::zeros((n, spec.dim));
    let mut labels = Vec::with_capacity(n);
    for class in 0..spec.n_classes {
        let mean = spec.class_mean(class);
        for r in 0..spec.n_per_class {
            let i = class * spec.n_per_class + r;
            for &f in &spec.informative {
                let e: f64 = rng.sample(StandardNormal);
                samples[[i, f]] = mean[f] + e;
            }
            let mut prev = 0.0;
            for (pos, &f) in nuisance.iter().enumerate() {
                let e: f64 = rng.sample(StandardNormal);
                prev = if pos == 0 { e } else { rho * prev + innovation * e };
                samples[[i, f]] = prev;
            }
            labels.push(class as i64);
        }
    }
    let names = (0..spec.dim).map(|j| format!("f{j}")).collect();
    Dataset::new(samples, &labels, Some(names))
}
