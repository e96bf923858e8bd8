//! Versioned JSON model files.

use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{StandardizationParams, Table};
use crate::error::{NpfsError, Result};
use crate::model::GmmModel;

pub const MODEL_FORMAT: &str = "npfs-model";
pub const MODEL_VERSION: u32 = 1;

/// A fitted model over selected input columns, together with everything
/// needed to apply it to raw rows.
///
/// Floats are written in their shortest exact decimal form, so a saved model
/// reloads bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    /// Original label value of each class.
    pub class_labels: Vec<i64>,
    pub class_counts: Vec<usize>,
    pub proportions: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    /// Row-major `p x p` covariance of each class.
    pub covariances: Vec<Vec<f64>>,
    /// Input column indices the model was fitted on, in model order.
    pub selected_features: Vec<usize>,
    pub selected_names: Option<Vec<String>>,
    /// Number and names of the input columns (label column excluded).
    pub input_dim: usize,
    pub input_names: Option<Vec<String>>,
    /// Applied to full input rows before column selection.
    pub standardization: Option<StandardizationParams>,
}

impl ModelFile {
    pub fn new(
        model: &GmmModel,
        class_labels: &[i64],
        selected_features: &[usize],
        input_names: Option<&[String]>,
        input_dim: usize,
        standardization: Option<StandardizationParams>,
    ) -> Result<Self> {
        if model.dim() != selected_features.len() {
            return Err(NpfsError::LengthMismatch { left: model.dim(), right: selected_features.len() });
        }
        if class_labels.len() != model.n_classes() {
            return Err(NpfsError::LengthMismatch { left: class_labels.len(), right: model.n_classes() });
        }
        if let Some(&bad) = selected_features.iter().find(|&&f| f >= input_dim) {
            return Err(NpfsError::IndexOutOfRange { index: bad, bound: input_dim });
        }
        Ok(Self {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            class_labels: class_labels.to_vec(),
            class_counts: model.class_counts().to_vec(),
            proportions: model.proportions().to_vec(),
            means: model.means().iter().map(|m| m.to_vec()).collect(),
            covariances: model.covariances().iter().map(|s| s.iter().copied().collect()).collect(),
            selected_features: selected_features.to_vec(),
            selected_names: input_names.map(|n| selected_features.iter().map(|&f| n[f].clone()).collect()),
            input_dim,
            input_names: input_names.map(<[String]>::to_vec),
            standardization,
        })
    }

    pub fn model(&self) -> Result<GmmModel> {
        let p = self.selected_features.len();
        let covariances = self
            .covariances
            .iter()
            .map(|flat| {
                Array2::from_shape_vec((p, p), flat.clone())
                    .map_err(|_| NpfsError::InvalidModel(format!("covariance is not {p} x {p}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let means = self.means.iter().map(|m| Array1::from(m.clone())).collect();
        GmmModel::from_parameters(self.proportions.clone(), means, covariances, self.class_counts.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| NpfsError::Io(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: Self = serde_json::from_str(text).map_err(|e| NpfsError::InvalidModel(e.to_string()))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(NpfsError::InvalidModel(format!(
                "unsupported model format {} v{}",
                file.format, file.version
            )));
        }
        if let Some(s) = &file.standardization {
            if s.dim() != file.input_dim {
                return Err(NpfsError::InvalidModel("standardization width differs from input width".into()));
            }
        }
        file.model()?;
        Ok(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Rows of `table` standardized and restricted to the model's columns.
    ///
    /// When both sides carry column names, columns are matched by name;
    /// otherwise the table must have exactly `input_dim` columns.
    pub fn prepare(&self, table: &Table) -> Result<Array2<f64>> {
        let full = match (&self.input_names, &table.feature_names) {
            (Some(want), Some(have)) => {
                let order = want
                    .iter()
                    .map(|name| {
                        have.iter()
                            .position(|h| h == name)
                            .ok_or_else(|| NpfsError::SchemaMismatch(format!("column `{name}` not found")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                table.samples.select(Axis(1), &order)
            }
            _ => {
                if table.samples.ncols() != self.input_dim {
                    return Err(NpfsError::SchemaMismatch(format!(
                        "model expects {} feature columns, file has {}",
                        self.input_dim,
                        table.samples.ncols()
                    )));
                }
                table.samples.clone()
            }
        };
        let full = match &self.standardization {
            Some(s) => s.apply(full.view())?,
            None => full,
        };
        Ok(full.select(Axis(1), &self.selected_features))
    }
}
