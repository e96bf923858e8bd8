//! Slow reference path: refit-from-scratch cross-validation and explicit
//! matrix inverses.
//!
//! Nothing here uses downdates, marginalization or shared factorizations.
//! Only the maximum-likelihood fit and the model's own prediction are shared
//! with the fast path, so agreement between the two is meaningful. It is also
//! the baseline of the benchmark command.

use ndarray::{Array2, ArrayView1, Axis};
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{NpfsError, Result};
use crate::model::{overall_accuracy, GmmModel};
use crate::selector::{
    plan_folds, CvScore, FoldPlan, Folds, IterationRecord, RejectedCandidate, SelectionConfig, SelectionState,
    StopReason,
};

/// Cross-validated accuracy of `features` by refitting on the retained rows
/// of every fold.
pub fn naive_cv_score(data: &Dataset, plan: &FoldPlan, features: &[usize]) -> Result<CvScore> {
    if features.is_empty() {
        return Err(NpfsError::EmptySelection);
    }
    if let Some(&bad) = features.iter().find(|&&f| f >= data.n_features()) {
        return Err(NpfsError::IndexOutOfRange { index: bad, bound: data.n_features() });
    }
    if plan.assignments.len() != data.n_samples() {
        return Err(NpfsError::LengthMismatch { left: plan.assignments.len(), right: data.n_samples() });
    }
    let columns = data.samples().select(Axis(1), features);
    let mut per_fold = Vec::with_capacity(plan.k);
    for fold in 0..plan.k {
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (i, &f) in plan.assignments.iter().enumerate() {
            if f == fold {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        let train_x = columns.select(Axis(0), &train);
        let train_y: Vec<usize> = train.iter().map(|&i| data.labels()[i]).collect();
        let model = GmmModel::fit_rows(train_x.view(), &train_y, data.n_classes()).map_err(|e| match e {
            NpfsError::EmptyClass { class, count } => NpfsError::DegenerateFold { fold, class, retained: count },
            other => other,
        })?;
        let test_x = columns.select(Axis(0), &test);
        let test_y: Vec<usize> = test.iter().map(|&i| data.labels()[i]).collect();
        let predicted = model.predict(test_x.view()).map_err(|e| e.with_context(format!("fold {fold}")))?;
        per_fold.push(overall_accuracy(&predicted, &test_y)?);
    }
    let mean = per_fold.iter().sum::<f64>() / per_fold.len() as f64;
    Ok(CvScore { mean, per_fold })
}

/// One sample per fold, in row order.
pub fn leave_one_out_plan(n: usize) -> FoldPlan {
    FoldPlan { k: n, assignments: (0..n).collect(), seed: 0, stratified: false }
}

/// Forward selection scored with [`naive_cv_score`], single-threaded.
pub fn naive_forward_select(data: &Dataset, config: &SelectionConfig) -> Result<SelectionState> {
    naive_forward_select_with(data, config, false)
}

/// [`naive_forward_select`] with optional parallel candidate scoring.
pub fn naive_forward_select_with(data: &Dataset, config: &SelectionConfig, parallel: bool) -> Result<SelectionState> {
    config.validate(data.n_features())?;
    if config.folds == Folds::LeaveOneOut {
        if let Some(class) = data.class_counts().iter().position(|&c| c < 3) {
            return Err(NpfsError::DegenerateRemainder {
                class: Some(class),
                reason: format!("leave-one-out needs 3 samples per class, found {}", data.class_counts()[class]),
            });
        }
    }
    // the full fit is part of the procedure even though scoring ignores it
    GmmModel::fit(data)?;

    let mut selected: Vec<usize> = Vec::new();
    let mut available: Vec<usize> = (0..data.n_features()).collect();
    let mut trace = Vec::new();
    let mut previous = 0.0;
    let mut rejected = None;
    let stop_reason = loop {
        if selected.len() >= config.max_variables {
            break StopReason::MaxVariablesReached;
        }
        if available.is_empty() {
            break StopReason::PoolExhausted;
        }
        let plan = match config.folds {
            Folds::LeaveOneOut => leave_one_out_plan(data.n_samples()),
            Folds::KFold(k) => plan_folds(data.labels(), k, config.plan_seed(trace.len()), config.stratified)?,
        };
        let score_one = |s: &usize| -> Result<Option<CvScore>> {
            let mut features = selected.clone();
            features.push(*s);
            match naive_cv_score(data, &plan, &features) {
                Ok(score) => Ok(Some(score)),
                Err(NpfsError::SingularCovariance { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        };
        let scores: Vec<Option<CvScore>> = if parallel {
            available.par_iter().map(score_one).collect::<Result<_>>()?
        } else {
            available.iter().map(score_one).collect::<Result<_>>()?
        };

        let mut best: Option<usize> = None;
        let mut failed = Vec::new();
        for (pos, score) in scores.iter().enumerate() {
            let Some(score) = score else {
                failed.push(available[pos]);
                continue;
            };
            let better = match best {
                None => true,
                Some(b) => score.mean > scores[b].as_ref().expect("scored").mean,
            };
            if better {
                best = Some(pos);
            }
        }
        let Some(pos) = best else {
            if trace.is_empty() {
                return Err(NpfsError::NoFeasibleCandidate);
            }
            break StopReason::DeltaNotMet;
        };
        let score = scores[pos].clone().expect("scored");
        let feature = available[pos];
        if score.mean - previous < config.delta {
            rejected = Some(RejectedCandidate { feature, accuracy: score.mean });
            break StopReason::DeltaNotMet;
        }
        previous = score.mean;
        trace.push(IterationRecord {
            feature,
            accuracy: score.mean,
            fold_accuracies: score.per_fold,
            failed_candidates: failed,
        });
        selected.push(feature);
        available.remove(pos);
    };
    Ok(SelectionState { selected, available, trace, stop_reason, rejected })
}

/// Inverse and determinant by Gauss-Jordan elimination with partial
/// pivoting. `None` for singular input.
pub fn dense_inverse(matrix: &Array2<f64>) -> Option<(Array2<f64>, f64)> {
    let n = matrix.nrows();
    let mut a = matrix.clone();
    let mut inv = Array2::<f64>::eye(n);
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[[i, col]].abs().total_cmp(&a[[j, col]].abs()))?;
        if a[[pivot, col]] == 0.0 {
            return None;
        }
        if pivot != col {
            for j in 0..n {
                a.swap([pivot, j], [col, j]);
                inv.swap([pivot, j], [col, j]);
            }
            det = -det;
        }
        let p = a[[col, col]];
        det *= p;
        for j in 0..n {
            a[[col, j]] /= p;
            inv[[col, j]] /= p;
        }
        for i in 0..n {
            if i != col {
                let f = a[[i, col]];
                if f != 0.0 {
                    for j in 0..n {
                        a[[i, j]] -= f * a[[col, j]];
                        inv[[i, j]] -= f * inv[[col, j]];
                    }
                }
            }
        }
    }
    Some((inv, det))
}

/// Quadratic discriminant scores through an explicit inverse and raw
/// determinant.
pub fn dense_decision_scores(model: &GmmModel, x: ArrayView1<'_, f64>) -> Option<Vec<f64>> {
    (0..model.n_classes())
        .map(|c| {
            let (inv, det) = dense_inverse(&model.covariances()[c])?;
            let diff = &x - &model.means()[c];
            let maha = diff.dot(&inv.dot(&diff));
            Some(-maha - det.ln() + 2.0 * model.proportions()[c].ln())
        })
        .collect()
}

/// Class posteriors from the Gaussian density formula, without log-space
/// normalization.
pub fn density_posterior(model: &GmmModel, x: ArrayView1<'_, f64>) -> Option<Vec<f64>> {
    let d = model.dim() as f64;
    let weighted: Vec<f64> = (0..model.n_classes())
        .map(|c| {
            let (inv, det) = dense_inverse(&model.covariances()[c])?;
            let diff = &x - &model.means()[c];
            let maha = diff.dot(&inv.dot(&diff));
            let density = (-0.5 * maha).exp() / ((2.0 * std::f64::consts::PI).powf(d / 2.0) * det.sqrt());
            Some(model.proportions()[c] * density)
        })
        .collect::<Option<_>>()?;
    let total: f64 = weighted.iter().sum();
    Some(weighted.into_iter().map(|w| w / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn inverse_of_small_matrix() {
        let m = array![[4.0, 1.0], [2.0, 3.0]];
        let (inv, det) = dense_inverse(&m).unwrap();
        assert!((det - 10.0).abs() < 1e-12);
        let id = m.dot(&inv);
        assert!((id[[0, 0]] - 1.0).abs() < 1e-12 && id[[0, 1]].abs() < 1e-12);
        assert!(dense_inverse(&array![[1.0, 2.0], [2.0, 4.0]]).is_none());
    }

    #[test]
    fn mirrored_folds_score_equally() {
        // class 0 at 0, 1, 2, 3, class 1 mirrored at 10, 9, 8, 7 (reflected about 5)
        let x = array![[0.0], [1.0], [2.0], [3.0], [10.0], [9.0], [8.0], [7.0]];
        let ds = Dataset::new(x, &[0, 0, 0, 0, 1, 1, 1, 1], None).unwrap();
        let plan = FoldPlan { k: 2, assignments: vec![0, 1, 0, 1, 0, 1, 0, 1], seed: 0, stratified: true };
        let score = naive_cv_score(&ds, &plan, &[0]).unwrap();
        assert_eq!(score.per_fold[0], score.per_fold[1]);
    }

    #[test]
    fn separable_feature_is_perfect() {
        let x = array![[0.0], [0.5], [0.2], [0.7], [9.0], [9.5], [9.2], [9.7]];
        let ds = Dataset::new(x, &[0, 0, 0, 0, 1, 1, 1, 1], None).unwrap();
        let plan = FoldPlan { k: 2, assignments: vec![0, 1, 0, 1, 0, 1, 0, 1], seed: 0, stratified: true };
        assert_eq!(naive_cv_score(&ds, &plan, &[0]).unwrap().mean, 1.0);
    }

    #[test]
    fn single_feature_runs_one_iteration() {
        let x = array![[0.0], [0.5], [0.2], [0.7], [0.1], [9.0], [9.5], [9.2], [9.7], [9.1]];
        let ds = Dataset::new(x, &[0, 0, 0, 0, 0, 1, 1, 1, 1, 1], None).unwrap();
        let cfg = SelectionConfig { max_variables: 1, folds: Folds::KFold(2), ..Default::default() };
        let state = naive_forward_select(&ds, &cfg).unwrap();
        assert_eq!(state.selected, vec![0]);
        assert_eq!(state.stop_reason, StopReason::MaxVariablesReached);
    }

    #[test]
    fn delta_above_one_selects_nothing() {
        let x = array![[0.0, 1.0], [0.5, 0.0], [0.2, 2.0], [0.7, 1.0], [0.1, 0.5],
                       [9.0, 1.0], [9.5, 0.0], [9.2, 2.0], [9.7, 1.0], [9.1, 0.5]];
        let ds = Dataset::new(x, &[0, 0, 0, 0, 0, 1, 1, 1, 1, 1], None).unwrap();
        let cfg = SelectionConfig { max_variables: 2, delta: 1.5, folds: Folds::KFold(2), ..Default::default() };
        let state = naive_forward_select(&ds, &cfg).unwrap();
        assert!(state.selected.is_empty());
        assert_eq!(state.stop_reason, StopReason::DeltaNotMet);
        assert_eq!(state.rejected.unwrap().feature, 0);
    }
}
