//! Proximal and spectral kernels used by the ADMM subproblems.

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::linalg;

/// Symmetry tolerance accepted by [`smallest_eigvecs`].
pub const SYMMETRY_TOL: f64 = 1e-8;

/// A nonnegative shrinkage threshold `τ`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ShrinkageThreshold(f64);

impl ShrinkageThreshold {
    pub fn new(tau: f64) -> Result<Self> {
        if tau >= 0.0 && tau.is_finite() {
            Ok(ShrinkageThreshold(tau))
        } else {
            invalid(format!("shrinkage threshold must be finite and nonnegative, got {tau}"))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

#[inline]
pub(crate) fn shrink(v: f64, tau: f64) -> f64 {
    v.signum() * (v.abs() - tau).max(0.0)
}

/// Entrywise shrinkage `sign(m)·max(|m| − τ, 0)`, the prox of `τ‖·‖₁`.
pub fn soft_threshold(m: &DMatrix<f64>, tau: ShrinkageThreshold) -> DMatrix<f64> {
    let t = tau.get();
    m.map(|v| if v == 0.0 { 0.0 } else { shrink(v, t) })
}

/// Singular value thresholding, the prox of `τ‖·‖_*`.
///
/// Takes a full SVD `M = UΣVᵀ` and returns `U max(Σ − τ, 0) Vᵀ`.
pub fn svt(m: &DMatrix<f64>, tau: ShrinkageThreshold) -> Result<DMatrix<f64>> {
    let t = tau.get();
    let dec = linalg::svd(m)?;
    let mut us = dec.u;
    for (j, s) in dec.singular_values.iter().enumerate() {
        let shrunk = (s - t).max(0.0);
        us.column_mut(j).scale_mut(shrunk);
    }
    Ok(us * dec.v.transpose())
}

/// Orthonormal eigenvectors for the `k` smallest eigenvalues of a symmetric
/// matrix, as the columns of an `n × k` matrix.
///
/// Columns follow ascending eigenvalue order. Each column is signed so that
/// its first entry of largest magnitude is positive.
pub fn smallest_eigvecs(l: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    let n = l.nrows();
    if !l.is_square() {
        return invalid(format!("matrix must be square, got {}x{}", n, l.ncols()));
    }
    if k == 0 || k > n {
        return invalid(format!("requested k={k} eigenvectors of an {n}x{n} matrix"));
    }
    let asym = linalg::max_abs(&(l - l.transpose()));
    if asym > SYMMETRY_TOL {
        return invalid(format!("matrix is not symmetric (max asymmetry {asym:e})"));
    }
    let sym = (l + l.transpose()) * 0.5;
    let eig = linalg::symmetric_eigen(&sym)?;
    let mut f = eig.vectors.columns(0, k).into_owned();
    for mut col in f.column_iter_mut() {
        let peak = col.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        if let Some(lead) = col.iter().find(|v| v.abs() >= peak - 1e-12 * peak.max(1.0)) {
            if *lead < 0.0 {
                col.neg_mut();
            }
        }
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{block_diag_regularizer, laplacian};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tau(t: f64) -> ShrinkageThreshold {
        ShrinkageThreshold::new(t).unwrap()
    }

    fn l1_prox_objective(e: &DMatrix<f64>, m: &DMatrix<f64>, t: f64) -> f64 {
        t * e.iter().map(|v| v.abs()).sum::<f64>() + 0.5 * (e - m).norm_squared()
    }

    #[test]
    fn threshold_rejects_negative() {
        assert!(ShrinkageThreshold::new(-0.1).is_err());
        assert!(ShrinkageThreshold::new(f64::NAN).is_err());
    }

    #[test]
    fn soft_threshold_examples() {
        let m = DMatrix::from_row_slice(2, 2, &[1.2, -0.3, 0.5, -2.0]);
        let out = soft_threshold(&m, tau(0.5));
        let expected = DMatrix::from_row_slice(2, 2, &[0.7, 0.0, 0.0, -1.5]);
        assert!((out - expected).abs().max() < 1e-15);
        assert_eq!(soft_threshold(&m, tau(0.0)), m);
    }

    #[test]
    fn soft_threshold_beats_local_perturbations() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        let e = soft_threshold(&m, tau(0.3));
        let best = l1_prox_objective(&e, &m, 0.3);
        for idx in 0..16 {
            for delta in [-1e-3, 1e-3] {
                let mut cand = e.clone();
                cand[idx] += delta;
                assert!(l1_prox_objective(&cand, &m, 0.3) >= best - 1e-15);
            }
        }
    }

    #[test]
    fn svt_examples() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0, 0.2]));
        let out = svt(&m, tau(0.5)).unwrap();
        let expected = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.5, 0.5, 0.0]));
        assert!((out - expected).abs().max() < 1e-12);

        let m = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 2.0, 0.0]);
        let out = svt(&m, tau(1.0)).unwrap();
        assert!((out - DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).abs().max() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = DMatrix::from_fn(5, 3, |_, _| rng.random_range(-1.0..1.0));
        assert!((svt(&m, tau(0.0)).unwrap() - &m).abs().max() < 1e-10);
    }

    #[test]
    fn svt_rejects_non_finite() {
        let m = DMatrix::from_row_slice(1, 2, &[1.0, f64::INFINITY]);
        assert!(svt(&m, tau(0.1)).is_err());
    }

    #[test]
    fn eigvecs_of_two_cliques_span_nullspace() {
        let mut b = DMatrix::zeros(5, 5);
        for (i, j) in [(0, 1), (1, 2), (0, 2), (3, 4)] {
            b[(i, j)] = 1.0;
            b[(j, i)] = 1.0;
        }
        let l = laplacian(&b).unwrap();
        let f = smallest_eigvecs(&l, 2).unwrap();
        assert!((l.values() * &f).abs().max() < 1e-8);
        assert!((f.transpose() * &f - DMatrix::identity(2, 2)).abs().max() < 1e-8);
    }

    #[test]
    fn eigvecs_of_identity_follow_sign_convention() {
        let l = DMatrix::<f64>::identity(3, 3);
        let f = smallest_eigvecs(&l, 1).unwrap();
        assert_abs_diff_eq!((&l * &f - &f).norm(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.norm(), 1.0, epsilon = 1e-12);
        let peak = f.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let lead = f.iter().find(|v| v.abs() >= peak - 1e-12).unwrap();
        assert!(*lead > 0.0);
    }

    #[test]
    fn eigvecs_trace_matches_full_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
        let l = &g * g.transpose();
        let f = smallest_eigvecs(&l, 3).unwrap();
        let trace = (f.transpose() * &l * &f).trace();
        // Oracle: nalgebra's own eigensolver, independent of the faer path.
        let mut spectrum: Vec<f64> = l.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        spectrum.sort_by(f64::total_cmp);
        let expected: f64 = spectrum[..3].iter().sum();
        assert_abs_diff_eq!(trace, expected, epsilon = 1e-8);
    }

    #[test]
    fn eigvecs_trace_matches_regularizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = DMatrix::from_fn(7, 7, |i, j| if i == j { 0.0 } else { rng.random_range(0.0..1.0) });
        let l = laplacian(&s).unwrap();
        let f = smallest_eigvecs(&l, 3).unwrap();
        let trace = (f.transpose() * l.values() * &f).trace();
        assert_abs_diff_eq!(trace, block_diag_regularizer(&s, 3).unwrap(), epsilon = 1e-8);
    }

    #[test]
    fn eigvecs_errors() {
        let l = DMatrix::<f64>::identity(3, 3);
        assert!(smallest_eigvecs(&l, 4).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(smallest_eigvecs(&asym, 1).is_err());
    }
}
