use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::{LinalgError, Matrix};

/// Symmetric (positive semi-)definite matrix with an optional cached
/// lower-triangular Cholesky factor.
///
/// Constructors symmetrize their input as `(M + Mᵀ)/2`. Whether the matrix is
/// strictly positive definite is only checked when it is factored.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpdMatrix {
    matrix: Matrix,
    chol: Option<Matrix>,
}

impl SpdMatrix {
    pub fn new(m: Matrix) -> Result<Self, LinalgError> {
        if !m.is_square() {
            return Err(LinalgError::NotSquare { rows: m.rows(), cols: m.cols() });
        }
        if !m.is_finite() {
            return Err(LinalgError::NonFinite);
        }
        Ok(Self { matrix: m.symmetrized(), chol: None })
    }

    pub fn identity(n: usize) -> Self {
        Self { matrix: Matrix::identity(n), chol: Some(Matrix::identity(n)) }
    }

    pub fn zeros(n: usize) -> Self {
        Self { matrix: Matrix::zeros(n, n), chol: None }
    }

    pub fn scaled_identity(n: usize, value: f64) -> Self {
        Self { matrix: Matrix::scaled_identity(n, value), chol: None }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        Self { matrix: Matrix::diagonal(values), chol: None }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> Matrix {
        self.matrix
    }

    /// Cached Cholesky factor, if [`SpdMatrix::factor`] has succeeded.
    pub fn cached_factor(&self) -> Option<&Matrix> {
        self.chol.as_ref()
    }

    /// Factor and cache `L` with `L·Lᵀ = self`.
    pub fn factor(&mut self) -> Result<&Matrix, LinalgError> {
        if self.chol.is_none() {
            self.chol = Some(cholesky_raw(&self.matrix)?);
        }
        Ok(self.chol.as_ref().expect("factor cached above"))
    }

    /// Consuming variant of [`SpdMatrix::factor`].
    pub fn factored(mut self) -> Result<Self, LinalgError> {
        self.factor()?;
        Ok(self)
    }

    pub(crate) fn cholesky_cow(&self) -> Result<alloc::borrow::Cow<'_, Matrix>, LinalgError> {
        match &self.chol {
            Some(l) => Ok(alloc::borrow::Cow::Borrowed(l)),
            None => Ok(alloc::borrow::Cow::Owned(cholesky_raw(&self.matrix)?)),
        }
    }

    /// `self + value·I`. Drops any cached factor.
    pub fn add_diagonal(&self, value: f64) -> Self {
        let mut m = self.matrix.clone();
        m.add_diagonal(value);
        Self { matrix: m, chol: None }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { matrix: self.matrix.scale(s), chol: None }
    }

    /// Exponential moving average `(1−β)·self + β·sample`, kept symmetric.
    pub fn ema_update(&mut self, beta: f64, sample: &Matrix) {
        assert_eq!(self.matrix.shape(), sample.shape(), "ema_update: shape mismatch");
        let n = self.dim();
        for i in 0..n {
            for j in i..n {
                let s = 0.5 * (sample[(i, j)] + sample[(j, i)]);
                let v = (1.0 - beta) * self.matrix[(i, j)] + beta * s;
                self.matrix[(i, j)] = v;
                self.matrix[(j, i)] = v;
            }
        }
        self.chol = None;
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    pub fn log_det(&self) -> Result<f64, LinalgError> {
        let l = self.cholesky_cow()?;
        Ok(2.0 * (0..self.dim()).map(|i| l[(i, i)].ln()).sum::<f64>())
    }

    pub fn inverse(&self) -> Result<SpdMatrix, LinalgError> {
        let l = self.cholesky_cow()?;
        let inv = solve_with_factor(&l, &Matrix::identity(self.dim()));
        Ok(SpdMatrix { matrix: inv.symmetrized(), chol: None })
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        symmetric_eigenvalues(&self.matrix)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().into_iter().fold(f64::INFINITY, f64::min)
    }
}

/// Unpivoted Cholesky `m = L·Lᵀ`; only the lower triangle of `m` is read.
pub(crate) fn cholesky_raw(m: &Matrix) -> Result<Matrix, LinalgError> {
    let n = m.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return Err(LinalgError::NotPositiveDefinite { pivot: j, value: d });
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Solve `L·y = b` in place for each column of `b`.
pub(crate) fn forward_substitute(l: &Matrix, b: &mut Matrix) {
    let n = l.rows();
    for c in 0..b.cols() {
        for i in 0..n {
            let mut s = b[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * b[(k, c)];
            }
            b[(i, c)] = s / l[(i, i)];
        }
    }
}

/// Solve `Lᵀ·x = y` in place for each column of `y`.
pub(crate) fn back_substitute_transpose(l: &Matrix, y: &mut Matrix) {
    let n = l.rows();
    for c in 0..y.cols() {
        for i in (0..n).rev() {
            let mut s = y[(i, c)];
            for k in (i + 1)..n {
                s -= l[(k, i)] * y[(k, c)];
            }
            y[(i, c)] = s / l[(i, i)];
        }
    }
}

pub(crate) fn solve_with_factor(l: &Matrix, b: &Matrix) -> Matrix {
    let mut x = b.clone();
    forward_substitute(l, &mut x);
    back_substitute_transpose(l, &mut x);
    x
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues(m: &Matrix) -> Vec<f64> {
    assert!(m.is_square(), "symmetric_eigenvalues: matrix is not square");
    let n = m.rows();
    let mut a = m.symmetrized();
    let scale = a.frobenius_norm().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[(i, j)] * a[(i, j)];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    eig.sort_by(|x, y| x.partial_cmp(y).unwrap_or(core::cmp::Ordering::Equal));
    eig
}
