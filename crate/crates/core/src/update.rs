//! Closed-form parameter downdates and sub-model extraction.
//!
//! Removing `nu_c` samples with mean `m` and biased covariance `S` from a
//! class fitted on `n_c` samples gives
//!
//! ```text
//! pi'    = (n pi - nu_c) / (n - nu)
//! mu'    = (n_c mu - nu_c m) / (n_c - nu_c)
//! Sigma' = n_c/(n_c-nu_c) Sigma - nu_c/(n_c-nu_c) S
//!          - n_c nu_c/(n_c-nu_c)^2 (mu - m)(mu - m)^T
//! ```
//!
//! A Gaussian restricted to a subset of its variables is obtained by slicing
//! its mean and covariance, so every sub-model comes from one full fit.

use std::collections::HashSet;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::dataset::Dataset;
use crate::error::{NpfsError, Result};
use crate::model::{class_moments, ClassScores, GmmModel};

/// Slack allowed when checking that a downdated proportion lies in `[0, 1]`.
const PROPORTION_SLACK: f64 = 1e-12;

/// Statistics of the removed samples of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct RemovedStats {
    pub count: usize,
    pub mean: Array1<f64>,
    /// Biased covariance; the zero matrix when `count == 1`.
    pub covariance: Array2<f64>,
}

/// Per-class statistics of a set of removed samples.
#[derive(Debug, Clone, PartialEq)]
pub struct RemovalSummary {
    pub removed: usize,
    /// `None` for classes with no removed sample.
    pub per_class: Vec<Option<RemovedStats>>,
}

impl RemovalSummary {
    pub fn empty(n_classes: usize) -> Self {
        Self { removed: 0, per_class: vec![None; n_classes] }
    }

    pub fn count(&self, class: usize) -> usize {
        self.per_class[class].as_ref().map_or(0, |s| s.count)
    }
}

/// Counts, means and biased covariances of the rows `fold_indices`, per class.
pub fn summarize_removed(data: &Dataset, fold_indices: &[usize]) -> Result<RemovalSummary> {
    summarize_rows(data.samples(), data.labels(), data.n_classes(), fold_indices)
}

pub(crate) fn summarize_rows(
    samples: ArrayView2<'_, f64>,
    labels: &[usize],
    n_classes: usize,
    fold_indices: &[usize],
) -> Result<RemovalSummary> {
    let n = samples.nrows();
    let mut seen = HashSet::with_capacity(fold_indices.len());
    let mut rows_by_class = vec![Vec::new(); n_classes];
    for &i in fold_indices {
        if i >= n {
            return Err(NpfsError::IndexOutOfRange { index: i, bound: n });
        }
        if !seen.insert(i) {
            return Err(NpfsError::InvalidConfig(format!("row {i} listed twice in a fold")));
        }
        rows_by_class[labels[i]].push(i);
    }
    let per_class = rows_by_class
        .iter()
        .map(|rows| {
            (!rows.is_empty()).then(|| {
                let (mean, covariance) = class_moments(samples, rows);
                RemovedStats { count: rows.len(), mean, covariance }
            })
        })
        .collect();
    Ok(RemovalSummary { removed: fold_indices.len(), per_class })
}

fn degenerate(class: Option<usize>, reason: String) -> NpfsError {
    NpfsError::DegenerateRemainder { class, reason }
}

/// Proportion of a class after removing `nu` samples, `nu_c` of them from the
/// class.
pub fn downdate_proportion(proportion: f64, n: usize, nu: usize, nu_c: usize) -> Result<f64> {
    if nu == 0 && nu_c == 0 {
        return Ok(proportion);
    }
    if n < nu + 1 {
        return Err(degenerate(None, format!("removing {nu} of {n} samples leaves nothing")));
    }
    let n_c = n as f64 * proportion;
    if nu_c as f64 > n_c.round() || nu_c > nu {
        return Err(degenerate(None, format!("cannot remove {nu_c} samples from a class of {}", n_c.round())));
    }
    let p = (n_c - nu_c as f64) / (n - nu) as f64;
    if !(-PROPORTION_SLACK..=1.0 + PROPORTION_SLACK).contains(&p) {
        return Err(degenerate(None, format!("downdated proportion {p} outside [0, 1]")));
    }
    Ok(p.clamp(0.0, 1.0))
}

/// Mean of a class after removing `nu_c` samples whose mean is `removed_mean`.
pub fn downdate_mean(
    mean: ArrayView1<'_, f64>,
    n_c: usize,
    nu_c: usize,
    removed_mean: ArrayView1<'_, f64>,
) -> Result<Array1<f64>> {
    if nu_c == 0 {
        return Ok(mean.to_owned());
    }
    if n_c < nu_c + 1 {
        return Err(degenerate(None, format!("removing {nu_c} of {n_c} class samples leaves none")));
    }
    let (n_c, nu_c) = (n_c as f64, nu_c as f64);
    let keep = n_c - nu_c;
    Ok(mean
        .iter()
        .zip(removed_mean.iter())
        .map(|(m, r)| (n_c * m - nu_c * r) / keep)
        .collect())
}

/// Biased covariance of a class after removing `nu_c` samples with mean
/// `removed_mean` and biased covariance `removed_cov`. The result is
/// explicitly symmetrized.
pub fn downdate_covariance(
    cov: ArrayView2<'_, f64>,
    n_c: usize,
    nu_c: usize,
    removed_cov: ArrayView2<'_, f64>,
    mean: ArrayView1<'_, f64>,
    removed_mean: ArrayView1<'_, f64>,
) -> Result<Array2<f64>> {
    if nu_c == 0 {
        return Ok(cov.to_owned());
    }
    if n_c < nu_c + 2 {
        return Err(degenerate(
            None,
            format!("removing {nu_c} of {n_c} class samples leaves fewer than 2"),
        ));
    }
    let d = mean.len();
    let (n_cf, nu_cf) = (n_c as f64, nu_c as f64);
    let keep = n_cf - nu_cf;
    let a = n_cf / keep;
    let b = nu_cf / keep;
    let g = n_cf * nu_cf / (keep * keep);
    let delta: Vec<f64> = mean.iter().zip(removed_mean.iter()).map(|(m, r)| m - r).collect();
    let mut out = Array2::<f64>::zeros((d, d));
    for i in 0..d {
        for j in 0..d {
            out[[i, j]] = a * cov[[i, j]] - b * removed_cov[[i, j]] - g * delta[i] * delta[j];
        }
    }
    symmetrize(&mut out);
    Ok(out)
}

fn symmetrize(m: &mut Array2<f64>) {
    let d = m.nrows();
    for i in 0..d {
        for j in 0..i {
            let v = 0.5 * (m[[i, j]] + m[[j, i]]);
            m[[i, j]] = v;
            m[[j, i]] = v;
        }
    }
}

/// The model refitted without the samples described by `summary`.
pub fn downdate_model(model: &GmmModel, summary: &RemovalSummary) -> Result<GmmModel> {
    let c = model.n_classes();
    if summary.per_class.len() != c {
        return Err(NpfsError::LengthMismatch { left: summary.per_class.len(), right: c });
    }
    let n = model.n_total();
    let nu = summary.removed;
    let mut proportions = Vec::with_capacity(c);
    let mut means = Vec::with_capacity(c);
    let mut covariances = Vec::with_capacity(c);
    let mut counts = Vec::with_capacity(c);
    for k in 0..c {
        let n_c = model.class_counts()[k];
        let annotate = |e: NpfsError| match e {
            NpfsError::DegenerateRemainder { reason, .. } => degenerate(Some(k), reason),
            other => other,
        };
        let nu_c = summary.count(k);
        proportions.push(downdate_proportion(model.proportions()[k], n, nu, nu_c).map_err(annotate)?);
        match &summary.per_class[k] {
            None => {
                means.push(model.means()[k].clone());
                covariances.push(model.covariances()[k].clone());
            }
            Some(removed) => {
                if removed.mean.len() != model.dim() {
                    return Err(NpfsError::LengthMismatch { left: removed.mean.len(), right: model.dim() });
                }
                let mean = model.means()[k].view();
                let cov = downdate_covariance(
                    model.covariances()[k].view(),
                    n_c,
                    nu_c,
                    removed.covariance.view(),
                    mean,
                    removed.mean.view(),
                )
                .map_err(annotate)?;
                means.push(downdate_mean(mean, n_c, nu_c, removed.mean.view()).map_err(annotate)?);
                covariances.push(cov);
            }
        }
        counts.push(n_c - nu_c);
    }
    Ok(GmmModel::from_parts(proportions, means, covariances, counts))
}

/// Mean and covariance of class `class` after removing its sample `x`.
pub(crate) fn loo_class_parameters(
    model: &GmmModel,
    x: ArrayView1<'_, f64>,
    class: usize,
) -> Result<(Array1<f64>, Array2<f64>)> {
    let n_c = model.class_counts()[class];
    if n_c < 3 {
        return Err(degenerate(Some(class), format!("leave-one-out needs 3 samples per class, found {n_c}")));
    }
    let mean = &model.means()[class];
    let cov = &model.covariances()[class];
    let d = mean.len();
    let n_cf = n_c as f64;
    let keep = n_cf - 1.0;
    let new_mean: Array1<f64> = mean.iter().zip(x.iter()).map(|(m, xi)| (n_cf * m - xi) / keep).collect();
    let a = n_cf / keep;
    let g = n_cf / (keep * keep);
    let delta: Vec<f64> = x.iter().zip(mean.iter()).map(|(xi, m)| xi - m).collect();
    let mut new_cov = Array2::<f64>::zeros((d, d));
    for i in 0..d {
        for j in 0..d {
            new_cov[[i, j]] = a * cov[[i, j]] - g * delta[i] * delta[j];
        }
    }
    symmetrize(&mut new_cov);
    Ok((new_mean, new_cov))
}

/// The model refitted without one sample `x` of class `class`.
pub fn loo_downdate(model: &GmmModel, x: ArrayView1<'_, f64>, class: usize) -> Result<GmmModel> {
    if x.len() != model.dim() {
        return Err(NpfsError::LengthMismatch { left: x.len(), right: model.dim() });
    }
    if class >= model.n_classes() {
        return Err(NpfsError::IndexOutOfRange { index: class, bound: model.n_classes() });
    }
    let (mean, cov) = loo_class_parameters(model, x, class)?;
    let n = model.n_total() as f64;
    let proportions = model
        .proportions()
        .iter()
        .enumerate()
        .map(|(k, &p)| if k == class { (n * p - 1.0) / (n - 1.0) } else { n * p / (n - 1.0) })
        .collect();
    let mut means = model.means().to_vec();
    let mut covariances = model.covariances().to_vec();
    let mut counts = model.class_counts().to_vec();
    means[class] = mean;
    covariances[class] = cov;
    counts[class] -= 1;
    Ok(GmmModel::from_parts(proportions, means, covariances, counts))
}

/// Change of `Q_k` for a class that does not own the removed sample when one
/// of `n` samples is left out.
///
/// Only the prior moves, from `pi_k` to `n pi_k / (n - 1)`, so the score
/// gains `2 ln(n / (n - 1))`.
pub fn loo_shift(n: usize) -> f64 {
    let n = n as f64;
    2.0 * (n / (n - 1.0)).ln()
}

/// Applies the leave-one-out prior shift to every class except
/// `removed_class`. The removed sample's own class score is left untouched;
/// callers recompute it from the downdated parameters.
pub fn loo_decision_shift(scores: &ClassScores, removed_class: usize, n: usize) -> Result<ClassScores> {
    if n < 2 {
        return Err(degenerate(None, format!("leave-one-out needs n >= 2, got {n}")));
    }
    if removed_class >= scores.q_values.len() {
        return Err(NpfsError::IndexOutOfRange { index: removed_class, bound: scores.q_values.len() });
    }
    if let Some(column) = scores.q_values.iter().position(|q| q.is_nan()) {
        return Err(NpfsError::NonFinite { row: 0, column });
    }
    let shift = loo_shift(n);
    let q = scores
        .q_values
        .iter()
        .enumerate()
        .map(|(k, &q)| if k == removed_class { q } else { q + shift })
        .collect();
    Ok(ClassScores::from_values(q))
}

pub(crate) fn check_features(features: &[usize], d: usize) -> Result<()> {
    if features.is_empty() {
        return Err(NpfsError::EmptySelection);
    }
    let mut seen = HashSet::with_capacity(features.len());
    for &f in features {
        if f >= d {
            return Err(NpfsError::IndexOutOfRange { index: f, bound: d });
        }
        if !seen.insert(f) {
            return Err(NpfsError::InvalidConfig(format!("feature {f} listed twice")));
        }
    }
    Ok(())
}

/// Gaussian marginal over `features`, kept in the caller's order.
pub fn marginalize(model: &GmmModel, features: &[usize]) -> Result<GmmModel> {
    check_features(features, model.dim())?;
    let means = model.means().iter().map(|m| features.iter().map(|&f| m[f]).collect()).collect();
    let covariances = model
        .covariances()
        .iter()
        .map(|s| Array2::from_shape_fn((features.len(), features.len()), |(i, j)| s[[features[i], features[j]]]))
        .collect();
    Ok(GmmModel::from_parts(
        model.proportions().to_vec(),
        means,
        covariances,
        model.class_counts().to_vec(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2, array};

    fn one_class(values: &[f64]) -> GmmModel {
        let x = Array2::from_shape_vec((values.len(), 1), values.to_vec()).unwrap();
        GmmModel::fit_rows(x.view(), &vec![0; values.len()], 1).unwrap()
    }

    #[test]
    fn empty_summary() {
        let ds = Dataset::new(array![[0.0], [1.0], [2.0], [3.0]], &[0, 0, 1, 1], None).unwrap();
        let s = summarize_removed(&ds, &[]).unwrap();
        assert_eq!(s.removed, 0);
        assert!(s.per_class.iter().all(Option::is_none));
    }

    #[test]
    fn single_removed_row() {
        let ds = Dataset::new(array![[0.0, 5.0], [1.0, 6.0], [2.0, 7.0], [3.0, 8.0]], &[0, 0, 1, 1], None).unwrap();
        let s = summarize_removed(&ds, &[2]).unwrap();
        assert_eq!(s.count(1), 1);
        assert_eq!(s.count(0), 0);
        let r = s.per_class[1].as_ref().unwrap();
        assert_eq!(r.mean, arr1(&[2.0, 7.0]));
        assert_eq!(r.covariance, Array2::<f64>::zeros((2, 2)));
    }

    #[test]
    fn summary_rejects_bad_indices() {
        let ds = Dataset::new(array![[0.0], [1.0], [2.0], [3.0]], &[0, 0, 1, 1], None).unwrap();
        assert!(matches!(summarize_removed(&ds, &[4]), Err(NpfsError::IndexOutOfRange { .. })));
        assert!(summarize_removed(&ds, &[1, 1]).is_err());
    }

    #[test]
    fn proportion_rule() {
        assert!((downdate_proportion(0.3, 10, 2, 1).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(downdate_proportion(0.3, 10, 0, 0).unwrap(), 0.3);
        assert!(downdate_proportion(0.5, 2, 2, 1).is_err());
        assert!(downdate_proportion(0.2, 10, 5, 3).is_err());
    }

    #[test]
    fn mean_rule() {
        let m = downdate_mean(arr1(&[2.0]).view(), 3, 1, arr1(&[5.0]).view()).unwrap();
        assert_eq!(m, arr1(&[0.5]));
        let same = downdate_mean(arr1(&[2.0, 1.0]).view(), 3, 0, arr1(&[0.0, 0.0]).view()).unwrap();
        assert_eq!(same, arr1(&[2.0, 1.0]));
        assert!(downdate_mean(arr1(&[2.0]).view(), 3, 3, arr1(&[2.0]).view()).is_err());
    }

    #[test]
    fn covariance_rule_on_three_points() {
        let full = one_class(&[0.0, 2.0, 4.0]);
        assert!((full.covariances()[0][[0, 0]] - 8.0 / 3.0).abs() < 1e-15);
        let cov = downdate_covariance(
            full.covariances()[0].view(),
            3,
            1,
            arr2(&[[0.0]]).view(),
            full.means()[0].view(),
            arr1(&[4.0]).view(),
        )
        .unwrap();
        assert!((cov[[0, 0]] - 1.0).abs() < 1e-14);
        let same = downdate_covariance(
            full.covariances()[0].view(),
            3,
            0,
            arr2(&[[0.0]]).view(),
            full.means()[0].view(),
            arr1(&[4.0]).view(),
        )
        .unwrap();
        assert_eq!(same, full.covariances()[0]);
    }

    #[test]
    fn covariance_rule_needs_two_remaining() {
        let r = downdate_covariance(
            arr2(&[[1.0]]).view(),
            3,
            2,
            arr2(&[[1.0]]).view(),
            arr1(&[0.0]).view(),
            arr1(&[0.0]).view(),
        );
        assert!(matches!(r, Err(NpfsError::DegenerateRemainder { .. })));
    }

    #[test]
    fn empty_summary_keeps_model_bitwise() {
        let ds = Dataset::new(
            array![[0.0, 1.0], [1.0, 3.0], [2.0, 2.0], [3.0, 9.0], [4.0, 1.0], [7.0, 2.0]],
            &[0, 0, 0, 1, 1, 1],
            None,
        )
        .unwrap();
        let m = GmmModel::fit(&ds).unwrap();
        let d = downdate_model(&m, &RemovalSummary::empty(2)).unwrap();
        assert_eq!(d, m);
    }

    #[test]
    fn downdate_model_names_the_class() {
        let ds = Dataset::new(array![[0.0], [1.0], [2.0], [3.0], [4.0], [5.0]], &[0, 0, 1, 1, 1, 1], None).unwrap();
        let m = GmmModel::fit(&ds).unwrap();
        let s = summarize_removed(&ds, &[0]).unwrap();
        let err = downdate_model(&m, &s).unwrap_err();
        assert!(matches!(err, NpfsError::DegenerateRemainder { class: Some(0), .. }));
    }

    #[test]
    fn loo_on_three_points() {
        let m = one_class(&[0.0, 2.0, 4.0]);
        let (mean, cov) = loo_class_parameters(&m, arr1(&[4.0]).view(), 0).unwrap();
        assert!((mean[0] - 1.0).abs() < 1e-15);
        assert!((cov[[0, 0]] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn loo_proportions_recount() {
        let x = Array2::from_shape_fn((10, 1), |(i, _)| i as f64);
        let labels = [0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        let m = GmmModel::fit_rows(x.view(), &labels, 2).unwrap();
        let d = loo_downdate(&m, x.row(0), 0).unwrap();
        assert!((d.proportions()[0] - 4.0 / 9.0).abs() < 1e-15);
        assert!((d.proportions()[1] - 5.0 / 9.0).abs() < 1e-15);
        assert_eq!(d.class_counts(), &[4, 5]);
    }

    #[test]
    fn loo_rejects_small_class() {
        let x = array![[0.0], [1.0], [2.0], [3.0], [4.0]];
        let m = GmmModel::fit_rows(x.view(), &[0, 0, 1, 1, 1], 2).unwrap();
        assert!(matches!(loo_downdate(&m, x.row(0), 0), Err(NpfsError::DegenerateRemainder { .. })));
    }

    #[test]
    fn shift_values() {
        assert!((loo_shift(2) - 2.0 * 2f64.ln()).abs() < 1e-15);
        assert!(loo_shift(1_000_000_000) < 1e-8);
        let s = ClassScores::from_values(vec![-1.0, -1.2, -5.0]);
        let shifted = loo_decision_shift(&s, 0, 2).unwrap();
        assert_eq!(shifted.q_values[0], -1.0);
        assert_eq!(shifted.q_values[1], -1.2 + loo_shift(2));
        assert_eq!(shifted.predicted, 1);
        assert!(loo_decision_shift(&s, 0, 1).is_err());
        assert!(loo_decision_shift(&ClassScores::from_values(vec![f64::NAN, 0.0]), 1, 5).is_err());
    }

    #[test]
    fn marginal_slices() {
        let m = GmmModel::from_parameters(
            vec![1.0],
            vec![arr1(&[1.0, 2.0])],
            vec![arr2(&[[2.0, 0.5], [0.5, 3.0]])],
            vec![4],
        )
        .unwrap();
        let s = marginalize(&m, &[0]).unwrap();
        assert_eq!(s.means()[0], arr1(&[1.0]));
        assert_eq!(s.covariances()[0], arr2(&[[2.0]]));
        let r = marginalize(&m, &[1, 0]).unwrap();
        assert_eq!(r.covariances()[0], arr2(&[[3.0, 0.5], [0.5, 2.0]]));
        assert_eq!(marginalize(&m, &[0, 1]).unwrap(), m);
        assert_eq!(marginalize(&m, &[]).unwrap_err(), NpfsError::EmptySelection);
        assert!(matches!(marginalize(&m, &[2]), Err(NpfsError::IndexOutOfRange { .. })));
    }
}
