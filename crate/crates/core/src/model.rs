//! Supervised Gaussian mixture: one Gaussian per class with a class prior.
//!
//! Decisions use the quadratic discriminant
//! `Q_c(x) = -(x - mu_c)^T Sigma_c^{-1} (x - mu_c) - ln|Sigma_c| + 2 ln pi_c`,
//! evaluated through a Cholesky factor of `Sigma_c`. Factors are computed
//! lazily, once per class, and dropped whenever a new model is derived.

use std::sync::OnceLock;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::dataset::Dataset;
use crate::error::{NpfsError, Result};
use crate::linalg::CholeskyFactor;

/// Decision scores for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassScores {
    pub q_values: Vec<f64>,
    pub predicted: usize,
}

impl ClassScores {
    pub fn from_values(q_values: Vec<f64>) -> Self {
        let predicted = argmax(&q_values);
        Self { q_values, predicted }
    }
}

/// Index of the largest value; ties go to the lowest index and NaN never wins.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, &v) in values.iter().enumerate() {
        if v > best_value {
            best = i;
            best_value = v;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct GmmModel {
    proportions: Vec<f64>,
    means: Vec<Array1<f64>>,
    covariances: Vec<Array2<f64>>,
    class_counts: Vec<usize>,
    n_total: usize,
    factors: Vec<OnceLock<Option<CholeskyFactor>>>,
}

impl PartialEq for GmmModel {
    fn eq(&self, other: &Self) -> bool {
        self.proportions == other.proportions
            && self.means == other.means
            && self.covariances == other.covariances
            && self.class_counts == other.class_counts
            && self.n_total == other.n_total
    }
}

/// Maximum-likelihood fit on a labeled dataset.
pub fn fit_full_model(data: &Dataset) -> Result<GmmModel> {
    GmmModel::fit(data)
}

impl GmmModel {
    pub fn fit(data: &Dataset) -> Result<Self> {
        Self::fit_rows(data.samples(), data.labels(), data.n_classes())
    }

    /// Fits from a raw sample matrix and dense labels in `0..n_classes`.
    ///
    /// Proportions are `n_c / n`, means the per-class sample means, and
    /// covariances the biased (divide by `n_c`) estimates. Every covariance
    /// entry is accumulated over rows in row order, so fitting a column
    /// slice gives exactly the corresponding sub-block.
    pub fn fit_rows(samples: ArrayView2<'_, f64>, labels: &[usize], n_classes: usize) -> Result<Self> {
        let (n, d) = samples.dim();
        if labels.len() != n {
            return Err(NpfsError::LengthMismatch { left: labels.len(), right: n });
        }
        if d == 0 || n_classes == 0 {
            return Err(NpfsError::InvalidDataset("no features or no classes".into()));
        }
        if let Some(((row, column), _)) = samples.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(NpfsError::NonFinite { row, column });
        }
        let mut rows_by_class = vec![Vec::new(); n_classes];
        for (i, &l) in labels.iter().enumerate() {
            if l >= n_classes {
                return Err(NpfsError::IndexOutOfRange { index: l, bound: n_classes });
            }
            rows_by_class[l].push(i);
        }
        if let Some((class, rows)) = rows_by_class.iter().enumerate().find(|(_, r)| r.len() < 2) {
            return Err(NpfsError::EmptyClass { class, count: rows.len() });
        }

        let (means, covariances): (Vec<_>, Vec<_>) =
            rows_by_class.iter().map(|rows| class_moments(samples, rows)).unzip();
        let class_counts: Vec<usize> = rows_by_class.iter().map(Vec::len).collect();
        let proportions = class_counts.iter().map(|&c| c as f64 / n as f64).collect();
        Ok(Self::from_parts(proportions, means, covariances, class_counts))
    }

    /// Builds a model from explicit parameters, checking the model invariants.
    pub fn from_parameters(
        proportions: Vec<f64>,
        means: Vec<Array1<f64>>,
        covariances: Vec<Array2<f64>>,
        class_counts: Vec<usize>,
    ) -> Result<Self> {
        let c = proportions.len();
        if c == 0 || means.len() != c || covariances.len() != c || class_counts.len() != c {
            return Err(NpfsError::InvalidModel("per-class parameter lengths disagree".into()));
        }
        let d = means[0].len();
        if d == 0 {
            return Err(NpfsError::InvalidModel("zero-dimensional model".into()));
        }
        let sum: f64 = proportions.iter().sum();
        if proportions.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-12 {
            return Err(NpfsError::InvalidModel(format!("proportions must lie in [0,1] and sum to 1 (sum {sum})")));
        }
        for (k, (m, s)) in means.iter().zip(&covariances).enumerate() {
            if m.len() != d || s.dim() != (d, d) {
                return Err(NpfsError::InvalidModel(format!("class {k} has inconsistent dimensions")));
            }
            if m.iter().chain(s.iter()).any(|v| !v.is_finite()) {
                return Err(NpfsError::InvalidModel(format!("class {k} has non-finite parameters")));
            }
            let scale = s.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            for i in 0..d {
                for j in 0..i {
                    if (s[[i, j]] - s[[j, i]]).abs() > 1e-12 * scale {
                        return Err(NpfsError::InvalidModel(format!("covariance of class {k} is not symmetric")));
                    }
                }
            }
        }
        let covariances = covariances.into_iter().map(|s| s.as_standard_layout().into_owned()).collect();
        Ok(Self::from_parts(proportions, means, covariances, class_counts))
    }

    pub(crate) fn from_parts(
        proportions: Vec<f64>,
        means: Vec<Array1<f64>>,
        covariances: Vec<Array2<f64>>,
        class_counts: Vec<usize>,
    ) -> Self {
        let n_total = class_counts.iter().sum();
        let factors = (0..proportions.len()).map(|_| OnceLock::new()).collect();
        Self { proportions, means, covariances, class_counts, n_total, factors }
    }

    pub fn n_classes(&self) -> usize {
        self.proportions.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn proportions(&self) -> &[f64] {
        &self.proportions
    }

    pub fn means(&self) -> &[Array1<f64>] {
        &self.means
    }

    pub fn covariances(&self) -> &[Array2<f64>] {
        &self.covariances
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    /// Cached Cholesky factor of class `class`, computed on first use.
    pub fn factor(&self, class: usize) -> Result<&CholeskyFactor> {
        let d = self.dim();
        self.factors[class]
            .get_or_init(|| {
                let cov = self.covariances[class].as_slice().expect("standard layout");
                CholeskyFactor::with_jitter(cov, d)
            })
            .as_ref()
            .ok_or(NpfsError::SingularCovariance { class, context: None })
    }

    /// Jitter added to each class covariance to factorize it (0 when none).
    pub fn jitter_applied(&self) -> Result<Vec<f64>> {
        (0..self.n_classes()).map(|c| self.factor(c).map(CholeskyFactor::jitter)).collect()
    }

    /// `ln |Sigma_c|` of each class from the cached factors.
    pub fn log_determinants(&self) -> Result<Vec<f64>> {
        (0..self.n_classes()).map(|c| self.factor(c).map(CholeskyFactor::log_det)).collect()
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(NpfsError::LengthMismatch { left: len, right: self.dim() });
        }
        Ok(())
    }

    fn q_value(&self, class: usize, x: ArrayView1<'_, f64>, work: &mut [f64]) -> Result<f64> {
        let factor = self.factor(class)?;
        for (w, (xi, mi)) in work.iter_mut().zip(x.iter().zip(self.means[class].iter())) {
            *w = xi - mi;
        }
        factor.forward_solve(work);
        let maha: f64 = work.iter().map(|t| t * t).sum();
        Ok(-maha - factor.log_det() + 2.0 * self.proportions[class].ln())
    }

    pub fn decision_scores(&self, x: ArrayView1<'_, f64>) -> Result<ClassScores> {
        self.check_dim(x.len())?;
        let mut work = vec![0.0; self.dim()];
        let q = (0..self.n_classes())
            .map(|c| self.q_value(c, x, &mut work))
            .collect::<Result<Vec<_>>>()?;
        Ok(ClassScores::from_values(q))
    }

    /// Class posteriors `p(c|x)`, normalized in log space.
    pub fn posterior(&self, x: ArrayView1<'_, f64>) -> Result<Vec<f64>> {
        let scores = self.decision_scores(x)?;
        // ln(pi_c p(x|c)) = Q_c / 2 + const
        let half: Vec<f64> = scores.q_values.iter().map(|q| 0.5 * q).collect();
        let max = half.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = half.iter().map(|h| (h - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        Ok(weights.into_iter().map(|w| w / total).collect())
    }

    /// MAP class of each row of `batch`.
    pub fn predict(&self, batch: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        self.check_dim(batch.ncols())?;
        for c in 0..self.n_classes() {
            self.factor(c)?;
        }
        let mut work = vec![0.0; self.dim()];
        let mut q = vec![0.0; self.n_classes()];
        batch
            .rows()
            .into_iter()
            .map(|row| {
                for (c, slot) in q.iter_mut().enumerate() {
                    *slot = self.q_value(c, row, &mut work)?;
                }
                Ok(argmax(&q))
            })
            .collect()
    }
}

/// Mean and biased covariance of the rows `rows` of `samples`.
///
/// Entry `(a, b)` of the covariance is a row-ordered sum of
/// `(x_a - mu_a)(x_b - mu_b)`, independent of the other columns.
pub(crate) fn class_moments(samples: ArrayView2<'_, f64>, rows: &[usize]) -> (Array1<f64>, Array2<f64>) {
    let d = samples.ncols();
    let nc = rows.len() as f64;
    let mut mean = Array1::<f64>::zeros(d);
    for &i in rows {
        mean += &samples.row(i);
    }
    mean /= nc;
    let mut centered = vec![0.0; d];
    let mut acc = vec![0.0; d * d];
    for &i in rows {
        for (c, (x, m)) in centered.iter_mut().zip(samples.row(i).iter().zip(mean.iter())) {
            *c = x - m;
        }
        for a in 0..d {
            let va = centered[a];
            let row = &mut acc[a * d..(a + 1) * d];
            for b in a..d {
                row[b] += va * centered[b];
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = acc[a * d + b] / nc;
            acc[a * d + b] = v;
            acc[b * d + a] = v;
        }
    }
    (mean, Array2::from_shape_vec((d, d), acc).expect("square"))
}

/// Fraction of positions where `predicted` equals `truth`.
pub fn overall_accuracy<T: PartialEq>(predicted: &[T], truth: &[T]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(NpfsError::LengthMismatch { left: predicted.len(), right: truth.len() });
    }
    if predicted.is_empty() {
        return Err(NpfsError::LengthMismatch { left: 0, right: 0 });
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / predicted.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2, array};

    fn one_d(props: &[f64], means: &[f64], vars: &[f64]) -> GmmModel {
        GmmModel::from_parameters(
            props.to_vec(),
            means.iter().map(|&m| arr1(&[m])).collect(),
            vars.iter().map(|&v| arr2(&[[v]])).collect(),
            vec![10; props.len()],
        )
        .unwrap()
    }

    #[test]
    fn fit_one_class_biased_covariance() {
        let x = array![[0.0], [2.0]];
        let m = GmmModel::fit_rows(x.view(), &[0, 0], 1).unwrap();
        assert_eq!(m.proportions(), &[1.0]);
        assert_eq!(m.means()[0], arr1(&[1.0]));
        assert_eq!(m.covariances()[0], arr2(&[[1.0]]));
    }

    #[test]
    fn fit_equal_counts_gives_half_proportions() {
        let x = array![[0.0], [1.0], [5.0], [6.0]];
        let ds = Dataset::new(x, &[1, 1, 2, 2], None).unwrap();
        let m = fit_full_model(&ds).unwrap();
        assert_eq!(m.proportions(), &[0.5, 0.5]);
    }

    #[test]
    fn fit_rejects_tiny_class() {
        let x = array![[0.0], [1.0], [5.0]];
        let ds = Dataset::new(x, &[1, 1, 2], None).unwrap();
        assert_eq!(fit_full_model(&ds).unwrap_err(), NpfsError::EmptyClass { class: 1, count: 1 });
    }

    #[test]
    fn fit_rejects_non_finite() {
        let x = array![[0.0], [f64::INFINITY], [5.0], [6.0]];
        let err = GmmModel::fit_rows(x.view(), &[0, 0, 1, 1], 2).unwrap_err();
        assert_eq!(err, NpfsError::NonFinite { row: 1, column: 0 });
    }

    #[test]
    fn standard_normal_at_mean_scores_zero() {
        let m = one_d(&[1.0], &[0.0], &[1.0]);
        let s = m.decision_scores(arr1(&[0.0]).view()).unwrap();
        assert_eq!(s.q_values, vec![0.0]);
    }

    #[test]
    fn score_at_mean_is_prior_and_log_det() {
        let m = one_d(&[0.25, 0.75], &[1.0, 3.0], &[2.0, 5.0]);
        let s = m.decision_scores(arr1(&[3.0]).view()).unwrap();
        assert!((s.q_values[1] - (-(5f64).ln() + 2.0 * 0.75f64.ln())).abs() < 1e-14);
    }

    #[test]
    fn symmetric_tie_goes_to_lowest_class() {
        let m = one_d(&[0.5, 0.5], &[-1.0, 1.0], &[1.0, 1.0]);
        assert_eq!(m.predict(array![[0.0]].view()).unwrap(), vec![0]);
    }

    #[test]
    fn identical_classes_give_prior_posterior() {
        let m = one_d(&[0.5, 0.5], &[0.3, 0.3], &[2.0, 2.0]);
        assert_eq!(m.posterior(arr1(&[-4.0]).view()).unwrap(), vec![0.5, 0.5]);
        let m = one_d(&[0.999, 0.001], &[0.3, 0.3], &[2.0, 2.0]);
        let p = m.posterior(arr1(&[1.5]).view()).unwrap();
        assert!((p[0] - 0.999).abs() < 1e-12 && (p[1] - 0.001).abs() < 1e-12);
    }

    #[test]
    fn class_means_are_predicted_as_their_own_class() {
        let m = one_d(&[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], &[-10.0, 0.0, 10.0], &[1.0, 1.0, 1.0]);
        let batch = array![[-10.0], [0.0], [10.0]];
        assert_eq!(m.predict(batch.view()).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let m = one_d(&[1.0], &[0.0], &[1.0]);
        assert!(matches!(m.decision_scores(arr1(&[0.0, 1.0]).view()), Err(NpfsError::LengthMismatch { .. })));
        assert!(matches!(m.predict(array![[0.0, 1.0]].view()), Err(NpfsError::LengthMismatch { .. })));
    }

    #[test]
    fn singular_covariance_is_reported() {
        let m = one_d(&[0.5, 0.5], &[0.0, 1.0], &[1.0, 0.0]);
        let err = m.decision_scores(arr1(&[0.0]).view()).unwrap_err();
        assert!(matches!(err, NpfsError::SingularCovariance { class: 1, .. }));
    }

    #[test]
    fn rank_deficient_covariance_is_jittered() {
        let cov = arr2(&[[1.0, 1.0], [1.0, 1.0]]);
        let m = GmmModel::from_parameters(
            vec![0.5, 0.5],
            vec![arr1(&[0.0, 0.0]), arr1(&[1.0, 1.0])],
            vec![cov, Array2::eye(2)],
            vec![5, 5],
        )
        .unwrap();
        let jitter = m.jitter_applied().unwrap();
        assert!(jitter[0] > 0.0);
        assert_eq!(jitter[1], 0.0);
    }

    #[test]
    fn from_parameters_rejects_bad_proportions() {
        let r = GmmModel::from_parameters(vec![0.5, 0.6], vec![arr1(&[0.0]); 2], vec![arr2(&[[1.0]]); 2], vec![1, 1]);
        assert!(matches!(r, Err(NpfsError::InvalidModel(_))));
    }

    #[test]
    fn accuracy_counts_matches() {
        assert_eq!(overall_accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(overall_accuracy(&[1, 2], &[0, 0]).unwrap(), 0.0);
        assert_eq!(overall_accuracy(&[1, 2, 3, 4], &[1, 2, 3, 0]).unwrap(), 0.75);
        assert!(matches!(overall_accuracy(&[1], &[1, 2]), Err(NpfsError::LengthMismatch { .. })));
        assert!(overall_accuracy::<usize>(&[], &[]).is_err());
    }
}
