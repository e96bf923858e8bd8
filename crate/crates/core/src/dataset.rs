use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{NpfsError, Result};

/// Labeled samples: `n` rows by `d` feature columns, with class ids densely
/// remapped to `0..C`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Array2<f64>,
    labels: Vec<usize>,
    class_labels: Vec<i64>,
    class_counts: Vec<usize>,
    feature_names: Option<Vec<String>>,
}

impl Dataset {
    /// Builds a dataset from raw integer labels. Distinct label values are
    /// sorted and mapped to `0..C`; the originals are kept in
    /// [`Dataset::class_labels`].
    pub fn new(
        samples: Array2<f64>,
        raw_labels: &[i64],
        feature_names: Option<Vec<String>>,
    ) -> Result<Self> {
        let mut class_labels: Vec<i64> = raw_labels.to_vec();
        class_labels.sort_unstable();
        class_labels.dedup();
        let labels = raw_labels
            .iter()
            .map(|l| class_labels.binary_search(l).expect("label present"))
            .collect();
        Self::with_classes(samples, labels, class_labels, feature_names)
    }

    /// Builds a dataset from labels that are already dense class ids into
    /// `class_labels`.
    pub fn with_classes(
        samples: Array2<f64>,
        labels: Vec<usize>,
        class_labels: Vec<i64>,
        feature_names: Option<Vec<String>>,
    ) -> Result<Self> {
        let (n, d) = samples.dim();
        if n == 0 || d == 0 {
            return Err(NpfsError::InvalidDataset(format!("empty sample matrix ({n} x {d})")));
        }
        if labels.len() != n {
            return Err(NpfsError::LengthMismatch { left: labels.len(), right: n });
        }
        if class_labels.len() < 2 {
            return Err(NpfsError::InvalidDataset(format!(
                "at least 2 classes are required, found {}",
                class_labels.len()
            )));
        }
        if let Some(names) = &feature_names {
            if names.len() != d {
                return Err(NpfsError::LengthMismatch { left: names.len(), right: d });
            }
        }
        if let Some(((row, column), _)) = samples.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(NpfsError::NonFinite { row, column });
        }
        let mut class_counts = vec![0usize; class_labels.len()];
        for &l in &labels {
            if l >= class_labels.len() {
                return Err(NpfsError::IndexOutOfRange { index: l, bound: class_labels.len() });
            }
            class_counts[l] += 1;
        }
        if let Some(class) = class_counts.iter().position(|&c| c == 0) {
            return Err(NpfsError::InvalidDataset(format!(
                "class {} (label {}) has no samples",
                class, class_labels[class]
            )));
        }
        Ok(Self { samples, labels, class_labels, class_counts, feature_names })
    }

    pub fn n_samples(&self) -> usize {
        self.samples.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.samples.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_labels.len()
    }

    pub fn samples(&self) -> ArrayView2<'_, f64> {
        self.samples.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.samples.row(i)
    }

    /// Dense class ids.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Original label value of each dense class id.
    pub fn class_labels(&self) -> &[i64] {
        &self.class_labels
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    /// Name of column `j`, falling back to its index.
    pub fn feature_name(&self, j: usize) -> String {
        match &self.feature_names {
            Some(names) => names[j].clone(),
            None => j.to_string(),
        }
    }

    /// Per-row labels in their original values.
    pub fn original_labels(&self) -> Vec<i64> {
        self.labels.iter().map(|&l| self.class_labels[l]).collect()
    }

    /// Row indices of each class, in ascending order.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_classes()];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    /// Rows `rows` as a new dataset sharing this dataset's class mapping.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let n = self.n_samples();
        if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
            return Err(NpfsError::IndexOutOfRange { index: bad, bound: n });
        }
        let samples = self.samples.select(Axis(0), rows);
        let labels = rows.iter().map(|&r| self.labels[r]).collect();
        Self::with_classes(samples, labels, self.class_labels.clone(), self.feature_names.clone())
    }

    /// Columns `cols`, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        let d = self.n_features();
        if cols.is_empty() {
            return Err(NpfsError::EmptySelection);
        }
        if let Some(&bad) = cols.iter().find(|&&c| c >= d) {
            return Err(NpfsError::IndexOutOfRange { index: bad, bound: d });
        }
        let samples = self.samples.select(Axis(1), cols);
        let names = self
            .feature_names
            .as_ref()
            .map(|names| cols.iter().map(|&c| names[c].clone()).collect());
        Self::with_classes(samples, self.labels.clone(), self.class_labels.clone(), names)
    }

    /// Replaces the sample matrix, keeping labels and metadata.
    pub(crate) fn with_samples(&self, samples: Array2<f64>) -> Result<Self> {
        Self::with_classes(
            samples,
            self.labels.clone(),
            self.class_labels.clone(),
            self.feature_names.clone(),
        )
    }
}
