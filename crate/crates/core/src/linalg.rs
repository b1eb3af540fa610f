//! Thin bridge between nalgebra matrices and faer's dense decompositions.
//!
//! The public API works with `nalgebra::DMatrix<f64>`; the two expensive kernels
//! that run every solver iteration (full SVD and symmetric eigendecomposition)
//! go through faer, which is several times faster at the sizes used here.

use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, AlrrError, Result};

fn to_faer(m: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn numerical(step: &'static str, detail: impl Into<String>) -> AlrrError {
    AlrrError::NumericalFailure {
        step,
        iteration: 0,
        detail: detail.into(),
    }
}

pub(crate) fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Full eigendecomposition of a symmetric matrix.
///
/// Eigenvalues come back in ascending order; equal eigenvalues keep the
/// order the decomposition produced them in (stable sort on index).
pub(crate) struct SymmetricEigen {
    #[allow(dead_code)]
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

pub(crate) fn symmetric_eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen> {
    if !m.is_square() {
        return invalid(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        ));
    }
    if !all_finite(m) {
        return invalid("eigendecomposition input has non-finite entries");
    }
    let evd = to_faer(m)
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| numerical("eigendecomposition", format!("{e:?}")))?;
    let raw: Vec<f64> = evd.S().column_vector().iter().copied().collect();
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| raw[a].total_cmp(&raw[b]).then(a.cmp(&b)));
    let u = evd.U();
    let n = m.nrows();
    let vectors = DMatrix::from_fn(n, n, |i, j| u[(i, order[j])]);
    let values = order.iter().map(|&j| raw[j]).collect();
    Ok(SymmetricEigen { values, vectors })
}

pub(crate) fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    if !all_finite(m) {
        return invalid("eigendecomposition input has non-finite entries");
    }
    let mut values = to_faer(m)
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| numerical("eigendecomposition", format!("{e:?}")))?;
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// Full SVD `M = U diag(s) Vᵀ` with singular values in nonincreasing order.
pub(crate) struct Svd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v: DMatrix<f64>,
}

pub(crate) fn svd(m: &DMatrix<f64>) -> Result<Svd> {
    if !all_finite(m) {
        return invalid("svd input has non-finite entries");
    }
    let dec = to_faer(m)
        .thin_svd()
        .map_err(|e| numerical("svd", format!("{e:?}")))?;
    Ok(Svd {
        u: from_faer(dec.U()),
        singular_values: DVector::from_iterator(
            dec.S().column_vector().nrows(),
            dec.S().column_vector().iter().copied(),
        ),
        v: from_faer(dec.V()),
    })
}

pub(crate) fn singular_values(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    if !all_finite(m) {
        return invalid("svd input has non-finite entries");
    }
    to_faer(m)
        .singular_values()
        .map_err(|e| numerical("svd", format!("{e:?}")))
}

pub(crate) fn nuclear_norm(m: &DMatrix<f64>) -> Result<f64> {
    Ok(singular_values(m)?.iter().sum())
}

/// Frobenius inner product `⟨A, B⟩ = Σ a_ij b_ij`.
pub(crate) fn frob_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub(crate) fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}
