//! Dense linear algebra, Kronecker-structured solves and Gaussian sampling.
//!
//! Everything here is small-matrix code: row-major storage, unpivoted
//! Cholesky, and no attempt at blocking. A failed factorization is always a
//! hard error; nothing in this module silently adds jitter.

mod matrix;
mod spd;

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

pub use matrix::{dot, norm2, Matrix};
pub use spd::{symmetric_eigenvalues, SpdMatrix};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("{op}: dimension mismatch, expected {expected:?}, found {found:?}")]
    DimensionMismatch { op: &'static str, expected: (usize, usize), found: (usize, usize) },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix has non-finite entries")]
    NonFinite,
}

/// `scale · (left ⊗ right)`, the Kronecker form of a layer's curvature.
///
/// `left` acts on the output side of a weight matrix (the S-factor, dimension
/// `n2`) and `right` on the input side (the A-factor, dimension `n1`), so a
/// layer gradient of shape `n1 × n2` is the natural right-hand side.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KroneckerPair {
    pub left: SpdMatrix,
    pub right: SpdMatrix,
    pub scale: f64,
}

impl KroneckerPair {
    pub fn new(left: SpdMatrix, right: SpdMatrix, scale: f64) -> Self {
        debug_assert!(scale > 0.0);
        Self { left, right, scale }
    }

    /// Expanded `scale · (left ⊗ right)`; test and oracle use only.
    pub fn to_dense(&self) -> Matrix {
        self.left.matrix().kron(self.right.matrix()).scale(self.scale)
    }

    fn check_shape(&self, op: &'static str, v: &Matrix) -> Result<(), LinalgError> {
        let expected = (self.right.dim(), self.left.dim());
        if v.shape() != expected {
            return Err(LinalgError::DimensionMismatch { op, expected, found: v.shape() });
        }
        Ok(())
    }
}

/// Lower-triangular `L` with `L·Lᵀ = m`.
pub fn cholesky(m: &SpdMatrix) -> Result<Matrix, LinalgError> {
    Ok(m.cholesky_cow()?.into_owned())
}

/// Solve `m · x = b` for a matrix of right-hand sides.
pub fn spd_solve(m: &SpdMatrix, b: &Matrix) -> Result<Matrix, LinalgError> {
    if b.rows() != m.dim() {
        return Err(LinalgError::DimensionMismatch {
            op: "spd_solve",
            expected: (m.dim(), b.cols()),
            found: b.shape(),
        });
    }
    let l = m.cholesky_cow()?;
    Ok(spd::solve_with_factor(&l, b))
}

/// `(scale · left ⊗ right)⁻¹ vec(v)` reshaped back to the shape of `v`, i.e.
/// `right⁻¹ · v · left⁻¹ / scale`.
pub fn kron_solve(k: &KroneckerPair, v: &Matrix) -> Result<Matrix, LinalgError> {
    k.check_shape("kron_solve", v)?;
    let x = spd_solve(&k.right, v)?;
    let mut y = spd_solve(&k.left, &x.transpose())?.transpose();
    y.scale_in_place(1.0 / k.scale);
    Ok(y)
}

/// `vec(v)ᵀ (scale · left ⊗ right) vec(v) = scale · ⟨v, right · v · left⟩`.
pub fn kron_quadratic_form(k: &KroneckerPair, v: &Matrix) -> Result<f64, LinalgError> {
    k.check_shape("kron_quadratic_form", v)?;
    let rv = k.right.matrix().matmul(v);
    let rvl = rv.matmul(k.left.matrix());
    Ok((k.scale * v.frobenius_dot(&rvl)).max(0.0))
}

pub fn standard_normal_vec<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Draw `mean + L·z` with `L·Lᵀ = cov`, `z ~ N(0, I)`.
pub fn sample_gaussian<R: Rng + ?Sized>(mean: &[f64], cov: &SpdMatrix, rng: &mut R) -> Result<Vec<f64>, LinalgError> {
    if mean.len() != cov.dim() {
        return Err(LinalgError::DimensionMismatch {
            op: "sample_gaussian",
            expected: (cov.dim(), 1),
            found: (mean.len(), 1),
        });
    }
    let l = cov.cholesky_cow()?;
    let z = standard_normal_vec(mean.len(), rng);
    Ok(l.mul_vec(&z).iter().zip(mean).map(|(a, m)| a + m).collect())
}

/// Draw from `N(mean, precision⁻¹)` as `mean + L⁻ᵀ·z` with `L·Lᵀ = precision`.
pub fn sample_gaussian_precision<R: Rng + ?Sized>(
    mean: &[f64],
    precision: &SpdMatrix,
    rng: &mut R,
) -> Result<Vec<f64>, LinalgError> {
    if mean.len() != precision.dim() {
        return Err(LinalgError::DimensionMismatch {
            op: "sample_gaussian_precision",
            expected: (precision.dim(), 1),
            found: (mean.len(), 1),
        });
    }
    let l = precision.cholesky_cow()?;
    let mut x = Matrix::column(&standard_normal_vec(mean.len(), rng));
    spd::back_substitute_transpose(&l, &mut x);
    Ok(x.as_slice().iter().zip(mean).map(|(a, m)| a + m).collect())
}

/// Matrix-variate Gaussian draw `M + L_U · Z · L_Vᵀ`, so that
/// `vec(W) ~ N(vec(M), col_cov ⊗ row_cov)`.
pub fn sample_mvg<R: Rng + ?Sized>(
    mean: &Matrix,
    row_cov: &SpdMatrix,
    col_cov: &SpdMatrix,
    rng: &mut R,
) -> Result<Matrix, LinalgError> {
    if row_cov.dim() != mean.rows() || col_cov.dim() != mean.cols() {
        return Err(LinalgError::DimensionMismatch {
            op: "sample_mvg",
            expected: mean.shape(),
            found: (row_cov.dim(), col_cov.dim()),
        });
    }
    let lu = row_cov.cholesky_cow()?;
    let lv = col_cov.cholesky_cow()?;
    Ok(sample_mvg_with_factors(mean, &lu, &lv, 1.0, rng))
}

/// [`sample_mvg`] with precomputed Cholesky factors and an extra scale
/// applied to the noise term.
pub(crate) fn sample_mvg_with_factors<R: Rng + ?Sized>(
    mean: &Matrix,
    row_factor: &Matrix,
    col_factor: &Matrix,
    noise_scale: f64,
    rng: &mut R,
) -> Matrix {
    let (r, c) = mean.shape();
    let z = Matrix::new(r, c, standard_normal_vec(r * c, rng)).expect("shape by construction");
    let noise = row_factor.matmul(&z).matmul(&col_factor.transpose());
    let mut w = mean.clone();
    w.add_scaled(&noise, noise_scale);
    w
}
