//! Nonlinear parsimonious feature selection.
//!
//! Forward selection of features for a Gaussian mixture (quadratic
//! discriminant) classifier. Each candidate feature set is scored by
//! cross-validated accuracy, and the per-fold models are never refitted: they
//! are derived from one full fit by closed-form downdates of the class
//! proportions, means and covariances, and candidate sub-models are marginals
//! of those.
//!
//! ```no_run
//! use npfs::{data, selector};
//!
//! let spec = data::SyntheticSpec::default();
//! let ds = data::generate_synthetic(&spec).unwrap();
//! let state = selector::forward_select(&ds, &selector::SelectionConfig::default()).unwrap();
//! println!("selected {:?}", state.selected);
//! ```

pub mod data;
pub mod dataset;
pub mod error;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod persist;
pub mod selector;
pub mod update;

pub use dataset::Dataset;
pub use error::{NpfsError, Result};
pub use model::{fit_full_model, overall_accuracy, ClassScores, GmmModel};
pub use selector::{
    forward_select, loo_forward_select, plan_folds, score_candidate, CvScore, FoldPlan, Folds, SelectionConfig,
    SelectionState, StopReason,
};
