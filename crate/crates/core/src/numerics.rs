//! Deterministic numeric primitives shared by all samplers: norm truncation,
//! scalar clipping, and symmetric/PSD matrix functionals.
//!
//! All operations are pure functions of their arguments and safe for
//! unrestricted concurrent use.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid_input, Error, Result};

/// Relative tolerance for treating a matrix as symmetric.
pub const SYMMETRY_REL_TOL: f64 = 1e-9;

/// Relative floor below which an eigenvalue is treated as zero.
pub const EIGENVALUE_REL_FLOOR: f64 = 1e-9;

/// Norm order used by truncation; only these two orders are needed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormOrder {
    L1,
    L2,
}

fn vector_norm(x: &DVector<f64>, order: NormOrder) -> f64 {
    match order {
        NormOrder::L1 => x.iter().map(|v| v.abs()).sum(),
        NormOrder::L2 => x.norm(),
    }
}

fn ensure_finite(x: &DVector<f64>, what: &str) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(invalid_input(format!("{what} contains a non-finite entry")));
    }
    Ok(())
}

/// Rescales `x` onto the norm ball of radius `bound`: returns `x` unchanged
/// when `||x||_p <= bound`, otherwise `x * bound / ||x||_p`.
///
/// The rescale repeats while rounding leaves the computed norm above the
/// bound (at most an ulp or two), so truncating twice returns the first
/// output bit for bit and the computed norm never exceeds the bound.
pub fn trunc_lp(x: &DVector<f64>, bound: f64, order: NormOrder) -> Result<DVector<f64>> {
    if bound.is_nan() || bound <= 0.0 {
        return Err(invalid_input(format!("truncation bound must be positive, got {bound}")));
    }
    ensure_finite(x, "truncation input")?;
    let mut out = x.clone();
    for _ in 0..32 {
        let norm = vector_norm(&out, order);
        if norm <= bound {
            return Ok(out);
        }
        out *= bound / norm;
    }
    Ok(out)
}

/// Nonnegative per-coordinate weights for weighted truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(invalid_input("weight vector must be non-empty"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(invalid_input("weights must be finite and nonnegative"));
        }
        Ok(Self(weights))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Truncation in the weighted l1 norm `||x o w||_1`: identity when the
/// weighted norm is within `bound`, otherwise a radial rescale of `x`.
pub fn trunc_weighted_l1(x: &DVector<f64>, bound: f64, weights: &WeightVector) -> Result<DVector<f64>> {
    if bound.is_nan() || bound <= 0.0 {
        return Err(invalid_input(format!("truncation bound must be positive, got {bound}")));
    }
    if x.len() != weights.len() {
        return Err(invalid_input(format!(
            "dimension mismatch: vector has {}, weights have {}",
            x.len(),
            weights.len()
        )));
    }
    ensure_finite(x, "truncation input")?;
    let weighted_norm = |v: &DVector<f64>| -> f64 {
        v.iter()
            .zip(weights.as_slice())
            .map(|(v, w)| (v * w).abs())
            .sum()
    };
    let mut out = x.clone();
    for _ in 0..32 {
        let norm = weighted_norm(&out);
        if norm <= bound {
            return Ok(out);
        }
        out *= bound / norm;
    }
    Ok(out)
}

/// `max(lo, min(hi, x))`; requires `lo <= hi`.
pub fn clip_scalar(x: f64, lo: f64, hi: f64) -> Result<f64> {
    if lo.is_nan() || hi.is_nan() || lo > hi {
        return Err(invalid_input(format!("clip interval [{lo}, {hi}] is empty")));
    }
    Ok(x.max(lo).min(hi))
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix, returning
/// `(eigenvectors, eigenvalues)` with `V diag(lambda) V^T = M` to machine
/// precision. Used instead of the library QL solver, whose deflation stops
/// short of the accuracy the round-trip contracts here require.
pub(crate) fn jacobi_eigen(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let n = m.nrows();
    let mut a = m.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    if n == 1 {
        return (v, DVector::from_element(1, a[(0, 0)]));
    }
    let scale = a.iter().fold(0.0f64, |acc, x| acc.max(x.abs())).max(1e-300);
    let tol = f64::EPSILON * scale;
    for _sweep in 0..64 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(a[(p, q)].abs());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() <= tol * 1e-2 {
                    continue;
                }
                let tau = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
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
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    (v, a.diagonal())
}

fn check_square_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(invalid_input(format!("{what} must be square and non-empty")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(invalid_input(format!("{what} contains a non-finite entry")));
    }
    let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    let asym = (m - m.transpose()).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if asym > SYMMETRY_REL_TOL * scale {
        return Err(invalid_input(format!(
            "{what} is asymmetric beyond tolerance (relative deviation {:.3e})",
            asym / scale
        )));
    }
    Ok(())
}

/// Smallest eigenvalue of a symmetric matrix. The input is symmetrized
/// before decomposition; asymmetry beyond tolerance is rejected.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    check_square_symmetric(m, "matrix")?;
    let (_, lambda) = jacobi_eigen(&symmetrize(m));
    Ok(lambda.iter().copied().fold(f64::INFINITY, f64::min))
}

/// A validated symmetric positive semi-definite matrix.
///
/// Construction symmetrizes the input (empirical Gram matrices accumulate
/// asymmetric rounding) and rejects matrices whose smallest eigenvalue is
/// below `-EIGENVALUE_REL_FLOOR` times the largest.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdMatrix {
    m: DMatrix<f64>,
}

impl PsdMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_square_symmetric(&m, "PSD matrix")?;
        let sym = symmetrize(&m);
        let (_, lambda) = jacobi_eigen(&sym);
        let max = lambda.iter().copied().fold(0.0f64, f64::max);
        let min = lambda.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -EIGENVALUE_REL_FLOOR * max.max(1.0) {
            return Err(invalid_input(format!(
                "matrix is not positive semi-definite (min eigenvalue {min:.3e})"
            )));
        }
        Ok(Self { m: sym })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            m: DMatrix::identity(dim, dim),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        if diag.is_empty() {
            return Err(invalid_input("diagonal must be non-empty"));
        }
        if diag.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(invalid_input("diagonal entries must be finite and nonnegative"));
        }
        Ok(Self {
            m: DMatrix::from_diagonal(&DVector::from_row_slice(diag)),
        })
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    fn eigen_parts(&self) -> (DMatrix<f64>, DVector<f64>) {
        jacobi_eigen(&self.m)
    }

    /// Symmetric PSD square root; negative rounding noise in the spectrum is
    /// clamped to zero.
    pub fn sqrt(&self) -> PsdMatrix {
        let (v, lambda) = self.eigen_parts();
        let roots = DVector::from_iterator(lambda.len(), lambda.iter().map(|l| l.max(0.0).sqrt()));
        let m = &v * DMatrix::from_diagonal(&roots) * v.transpose();
        PsdMatrix { m: symmetrize(&m) }
    }

    /// Symmetric inverse square root `S` with `S * S * Sigma = I`.
    /// Requires the matrix to be strictly positive definite.
    pub fn inv_sqrt(&self) -> Result<PsdMatrix> {
        let (v, lambda) = self.eigen_parts();
        let max = lambda.iter().copied().fold(0.0f64, f64::max);
        let min = lambda.iter().copied().fold(f64::INFINITY, f64::min);
        if min <= EIGENVALUE_REL_FLOOR * max.max(1e-300) || max == 0.0 {
            return Err(Error::SingularMatrix(format!(
                "inverse square root needs a strictly positive spectrum (min {min:.3e}, max {max:.3e})"
            )));
        }
        let roots = DVector::from_iterator(lambda.len(), lambda.iter().map(|l| 1.0 / l.sqrt()));
        let m = &v * DMatrix::from_diagonal(&roots) * v.transpose();
        Ok(PsdMatrix { m: symmetrize(&m) })
    }

    /// Smallest eigenvalue.
    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.m).expect("validated on construction")
    }
}

/// Symmetric inverse square root of a strictly positive definite matrix.
pub fn inv_sqrt_psd(sigma: &PsdMatrix) -> Result<PsdMatrix> {
    sigma.inv_sqrt()
}

/// Frobenius norm of `Sigma^{-1/2} A Sigma^{-1/2}` for symmetric `A` and
/// strictly positive definite `Sigma`, computed through a Cholesky factor.
pub fn mahalanobis_norm(a: &DMatrix<f64>, sigma: &PsdMatrix) -> Result<f64> {
    check_square_symmetric(a, "matrix A")?;
    if a.nrows() != sigma.dim() {
        return Err(invalid_input(format!(
            "dimension mismatch: A is {} x {}, Sigma is {} x {}",
            a.nrows(),
            a.ncols(),
            sigma.dim(),
            sigma.dim()
        )));
    }
    let max = sigma
        .matrix()
        .diagonal()
        .iter()
        .copied()
        .fold(0.0f64, f64::max)
        .max(1e-300);
    let chol = sigma
        .matrix()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularMatrix("Cholesky factorization failed".into()))?;
    if chol.l().diagonal().iter().any(|d| d * d <= EIGENVALUE_REL_FLOOR * max) {
        return Err(Error::SingularMatrix(
            "matrix is numerically singular in the Mahalanobis norm".into(),
        ));
    }
    // ||L^{-1} A L^{-T}||_F via two triangular solves.
    let l = chol.l();
    let y = l
        .solve_lower_triangular(&symmetrize(a))
        .ok_or_else(|| Error::SingularMatrix("triangular solve failed".into()))?;
    let z = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| Error::SingularMatrix("triangular solve failed".into()))?;
    Ok(z.norm())
}
