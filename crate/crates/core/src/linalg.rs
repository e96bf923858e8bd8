//! Dense symmetric positive-definite kernels on row-major `f64` buffers.
//!
//! The factorization is computed row by row (Cholesky-Banachiewicz), so the
//! leading `p x p` block of the factor of any matrix equals the factor of its
//! leading `p x p` block, bit for bit. [`append_row`] exploits this to extend a
//! factor by one variable without refactorizing.

/// Diagonal jitter multipliers, applied as `eps * trace / dim`.
pub const JITTER_SCHEDULE: [f64; 3] = [1e-10, 1e-8, 1e-6];

/// Lower-triangular Cholesky factor together with its log-determinant.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    dim: usize,
    lower: Vec<f64>,
    log_det: f64,
    jitter: f64,
}

impl CholeskyFactor {
    /// Factorizes `matrix` (row-major, `dim x dim`), escalating diagonal
    /// jitter through [`JITTER_SCHEDULE`] on failure. Returns `None` when
    /// every attempt fails.
    pub fn with_jitter(matrix: &[f64], dim: usize) -> Option<Self> {
        assert_eq!(matrix.len(), dim * dim);
        if let Some(f) = Self::exact(matrix, dim) {
            return Some(f);
        }
        let trace: f64 = (0..dim).map(|i| matrix[i * dim + i]).sum();
        if !(trace.is_finite() && trace > 0.0) {
            return None;
        }
        let mut work = matrix.to_vec();
        for eps in JITTER_SCHEDULE {
            let jitter = eps * trace / dim as f64;
            work.copy_from_slice(matrix);
            for i in 0..dim {
                work[i * dim + i] += jitter;
            }
            if let Some(mut f) = Self::exact(&work, dim) {
                f.jitter = jitter;
                return Some(f);
            }
        }
        None
    }

    /// Plain factorization without jitter.
    pub fn exact(matrix: &[f64], dim: usize) -> Option<Self> {
        let mut lower = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..=i {
                let mut s = matrix[i * dim + j];
                for k in 0..j {
                    s -= lower[i * dim + k] * lower[j * dim + k];
                }
                if i == j {
                    if !pivot_ok(s, matrix[i * dim + i]) {
                        return None;
                    }
                    lower[i * dim + i] = s.sqrt();
                } else {
                    lower[i * dim + j] = s / lower[j * dim + j];
                }
            }
        }
        let log_det = 2.0 * (0..dim).map(|i| lower[i * dim + i].ln()).sum::<f64>();
        Some(Self { dim, lower, log_det, jitter: 0.0 })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `ln |A|` of the (possibly jittered) factored matrix.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Diagonal jitter that was added before the factorization succeeded.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    /// Solves `L y = b` in place.
    pub fn forward_solve(&self, b: &mut [f64]) {
        forward_solve(&self.lower, self.dim, self.dim, b);
    }

    /// `v^T A^{-1} v` through the factor.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        let mut y = v.to_vec();
        self.forward_solve(&mut y);
        y.iter().map(|t| t * t).sum()
    }
}

/// A pivot fails when it is not clearly positive relative to the original
/// diagonal entry.
#[inline]
pub(crate) fn pivot_ok(pivot: f64, diag: f64) -> bool {
    pivot.is_finite() && diag > 0.0 && pivot > f64::EPSILON * diag
}

/// Forward substitution on the leading `dim x dim` block of a row-major lower
/// factor with row stride `stride`.
#[inline]
pub(crate) fn forward_solve(lower: &[f64], stride: usize, dim: usize, b: &mut [f64]) {
    for i in 0..dim {
        let row = &lower[i * stride..i * stride + i];
        let mut s = b[i];
        for (l, y) in row.iter().zip(&b[..i]) {
            s -= l * y;
        }
        b[i] = s / lower[i * stride + i];
    }
}

/// New last row of a factor extended by one variable.
///
/// Given the factor of `A` and the border `cross = A_{:,new}` with diagonal
/// `diag = A_{new,new}`, writes `l = L^{-1} cross` into `cross` and returns the
/// squared pivot `diag - l.l`, or `None` when the extended matrix is not
/// numerically positive definite. Matches the last row of a fresh
/// factorization exactly.
pub fn append_row(factor: &CholeskyFactor, cross: &mut [f64], diag: f64) -> Option<f64> {
    factor.forward_solve(cross);
    let mut s = diag;
    for l in cross.iter() {
        s -= l * l;
    }
    pivot_ok(s, diag).then_some(s)
}
