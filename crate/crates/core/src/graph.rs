//! Graph algebra shared by the solver and the clustering pipeline.
//!
//! Every graph here is a dense `n × n` matrix over the `n` samples. A
//! [`SimilarityGraph`] carries the matrix together with the role it plays,
//! and the role decides which invariants the constructor checks.

use std::ops::Deref;

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::linalg;

/// Tolerance on row sums of a constrained graph.
pub const ROW_SUM_TOL: f64 = 1e-6;

/// Eigenvalues of a Laplacian in `[-PSD_CLAMP, 0)` are treated as exact zeros.
pub const PSD_CLAMP: f64 = 1e-8;

/// Which part of the model a graph matrix belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum GraphRole {
    /// The unconstrained self-representation block `Z`.
    Raw,
    /// The auxiliary graph `S`: nonnegative, zero diagonal, rows summing to one.
    Constrained,
    /// A symmetrized graph `W = (|Z| + |Z|ᵀ)/2`.
    Symmetric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    values: DMatrix<f64>,
    role: GraphRole,
}

impl SimilarityGraph {
    /// Wraps `values`, checking the invariants of `role`.
    pub fn new(values: DMatrix<f64>, role: GraphRole) -> Result<Self> {
        if !values.is_square() {
            return invalid(format!(
                "graph must be square, got {}x{}",
                values.nrows(),
                values.ncols()
            ));
        }
        match role {
            GraphRole::Raw => {}
            GraphRole::Constrained => {
                if values.iter().any(|&v| !(v >= 0.0)) {
                    return invalid("constrained graph has a negative or NaN entry");
                }
                for i in 0..values.nrows() {
                    if values[(i, i)] != 0.0 {
                        return invalid(format!("constrained graph has nonzero diagonal at {i}"));
                    }
                    let sum: f64 = values.row(i).iter().sum();
                    if (sum - 1.0).abs() > ROW_SUM_TOL {
                        return invalid(format!("row {i} of constrained graph sums to {sum}"));
                    }
                }
            }
            GraphRole::Symmetric => {
                if values.iter().any(|&v| !(v >= 0.0)) {
                    return invalid("symmetric graph has a negative or NaN entry");
                }
                if values != values.transpose() {
                    return invalid("symmetric graph is not exactly symmetric");
                }
            }
        }
        Ok(SimilarityGraph { values, role })
    }

    /// Wraps an unconstrained matrix without checks beyond squareness.
    pub fn raw(values: DMatrix<f64>) -> Result<Self> {
        Self::new(values, GraphRole::Raw)
    }

    pub(crate) fn new_unchecked(values: DMatrix<f64>, role: GraphRole) -> Self {
        SimilarityGraph { values, role }
    }

    pub fn role(&self) -> GraphRole {
        self.role
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    /// Number of samples (graph nodes).
    pub fn n(&self) -> usize {
        self.values.nrows()
    }
}

impl Deref for SimilarityGraph {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.values
    }
}

/// A graph Laplacian `L = Diag((S1 + Sᵀ1)/2) − (S + Sᵀ)/2`.
///
/// Always symmetric with vanishing row sums, and positive semidefinite when
/// the source graph is entrywise nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianMatrix {
    values: DMatrix<f64>,
}

impl LaplacianMatrix {
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }
}

impl Deref for LaplacianMatrix {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.values
    }
}

fn require_square(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        invalid(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        ))
    }
}

/// Laplacian of an arbitrary square matrix, symmetrizing it first.
pub fn laplacian(s: &DMatrix<f64>) -> Result<LaplacianMatrix> {
    require_square(s, "laplacian input")?;
    let n = s.nrows();
    let mut values = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            values[(i, j)] = -(s[(i, j)] + s[(j, i)]) / 2.0;
        }
    }
    // Diagonal: (row sum + column sum)/2 minus s_ii, which is exactly minus
    // the sum of the off-diagonal entries of the row just written.
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| values[(i, j)]).sum();
        values[(i, i)] = -off;
    }
    Ok(LaplacianMatrix { values })
}

/// `W = (|Z| + |Z|ᵀ)/2`.
pub fn symmetrize(z: &DMatrix<f64>) -> Result<SimilarityGraph> {
    require_square(z, "symmetrize input")?;
    let n = z.nrows();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = (z[(i, j)].abs() + z[(j, i)].abs()) / 2.0;
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    Ok(SimilarityGraph::new_unchecked(w, GraphRole::Symmetric))
}

/// Sum of the `k` smallest eigenvalues of `laplacian(b)`.
///
/// Zero exactly when the graph has at least `k` connected components.
pub fn block_diag_regularizer(b: &DMatrix<f64>, k: usize) -> Result<f64> {
    require_square(b, "block-diagonal regularizer input")?;
    let n = b.nrows();
    if k == 0 || k > n {
        return invalid(format!("block count k={k} must lie in 1..={n}"));
    }
    let l = laplacian(b)?;
    let eig = linalg::symmetric_eigenvalues(&l)?;
    Ok(eig
        .iter()
        .take(k)
        .map(|&v| if (-PSD_CLAMP..0.0).contains(&v) { 0.0 } else { v })
        .sum())
}

/// `D_Y = diag(Y)1ᵀ − Y`, i.e. entry `(i, j)` is `Y_ii − Y_ij`.
pub fn dy_matrix(y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    require_square(y, "D_Y input")?;
    let n = y.nrows();
    Ok(DMatrix::from_fn(n, n, |i, j| y[(i, i)] - y[(i, j)]))
}

/// Weighted squared distances `d_ij = ‖A x_i − A x_j‖²` with `A = diag(a)`.
///
/// `x` is `d × n` with samples in columns; `a` has one weight per feature row.
pub fn da_matrix(x: &DMatrix<f64>, a: &[f64]) -> Result<DMatrix<f64>> {
    if a.len() != x.nrows() {
        return invalid(format!(
            "weight vector has {} entries but data has {} features",
            a.len(),
            x.nrows()
        ));
    }
    let n = x.ncols();
    let mut ax = x.clone();
    for (f, &w) in a.iter().enumerate() {
        ax.row_mut(f).scale_mut(w);
    }
    let gram = ax.transpose() * &ax;
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (gram[(i, i)] + gram[(j, j)] - 2.0 * gram[(i, j)]).max(0.0);
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    Ok(d)
}

/// Squared Euclidean distances between all pairs of sample columns.
pub(crate) fn pairwise_sq_dists(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.ncols();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (x.column(i) - x.column(j)).norm_squared();
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// Row-stochastic k-nearest-neighbor graph with heat-kernel weights.
///
/// Each sample keeps its `k_nn` nearest other samples (ties go to the lower
/// index), weighted by `exp(−‖x_i − x_j‖² / 2σ²)` with `σ` the median pairwise
/// distance, and the row is rescaled to sum to one.
pub fn knn_init_graph(x: &DMatrix<f64>, k_nn: usize) -> Result<SimilarityGraph> {
    let n = x.ncols();
    if k_nn == 0 || k_nn >= n {
        return invalid(format!("k_nn={k_nn} must lie in 1..{n}"));
    }
    if !linalg::all_finite(x) {
        return invalid("data has non-finite entries");
    }
    let d2 = pairwise_sq_dists(x);
    let mut dists: Vec<f64> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| d2[(i, j)].sqrt())
        .collect();
    dists.sort_by(f64::total_cmp);
    let sigma = median_sorted(&dists);
    let two_sigma_sq = 2.0 * sigma * sigma;

    let mut s = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| d2[(i, a)].total_cmp(&d2[(i, b)]).then(a.cmp(&b)));
        let neighbors = &others[..k_nn];
        let weights: Vec<f64> = neighbors
            .iter()
            .map(|&j| {
                if two_sigma_sq > 0.0 {
                    (-d2[(i, j)] / two_sigma_sq).exp()
                } else {
                    1.0
                }
            })
            .collect();
        let total: f64 = weights.iter().sum();
        for (&j, &w) in neighbors.iter().zip(&weights) {
            s[(i, j)] = if total > 0.0 { w / total } else { 1.0 / k_nn as f64 };
        }
    }
    Ok(SimilarityGraph::new_unchecked(s, GraphRole::Constrained))
}

fn median_sorted(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        len if len % 2 == 1 => v[len / 2],
        len => (v[len / 2 - 1] + v[len / 2]) / 2.0,
    }
}
