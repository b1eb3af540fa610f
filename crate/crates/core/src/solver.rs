//! The ALRR ADMM loop.
//!
//! The model learns a self-representation `Z` of the data `X ≈ XZ + E`
//! that is low rank, sparse in its error, and smooth with respect to
//! learned per-feature weights `a`. A block-diagonal penalty on the
//! auxiliary graph `S` pushes the learned graph towards exactly `k`
//! connected components. Each iteration runs, in order: the `Z`, `E`, `U`,
//! `Y`, `S` and `A` updates, then the multiplier and penalty updates.

use nalgebra::DMatrix;

use crate::error::{invalid, AlrrError, Result};
use crate::graph::{self, GraphRole, SimilarityGraph};
use crate::linalg;
use crate::prox::{self, ShrinkageThreshold};

/// How the feature weights evolve during a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    /// Learn the weights with the closed-form `A` update.
    #[default]
    Auto,
    /// Keep uniform weights throughout (the unweighted ablation).
    Identity,
}

impl std::str::FromStr for WeightMode {
    type Err = AlrrError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(WeightMode::Auto),
            "identity" => Ok(WeightMode::Identity),
            other => invalid(format!("unknown weight mode {other:?} (expected auto or identity)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    /// Nuclear-norm weight.
    pub lambda1: f64,
    /// Sparse-error weight.
    pub lambda2: f64,
    /// Block-diagonal weight; zero drops the block constraint entirely.
    pub lambda3: f64,
    /// Number of clusters (diagonal blocks).
    pub k: usize,
    /// Neighbors per sample in the initial graph.
    pub k_nn: usize,
    pub mu0: f64,
    pub rho: f64,
    pub mu_max: f64,
    /// Stopping threshold on the ∞-norm primal residuals.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub weight_mode: WeightMode,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            lambda1: 0.04,
            lambda2: 0.04,
            lambda3: 0.04,
            k: 2,
            k_nn: 5,
            mu0: 0.01,
            rho: 1.1,
            mu_max: 1e8,
            tol: 1e-6,
            max_iter: 200,
            seed: 0,
            weight_mode: WeightMode::Auto,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2), ("lambda3", self.lambda3)] {
            if !(v >= 0.0 && v.is_finite()) {
                return invalid(format!("{name} must be finite and nonnegative, got {v}"));
            }
        }
        if self.k == 0 {
            return invalid("cluster count k must be at least 1");
        }
        if self.k_nn == 0 {
            return invalid("k_nn must be at least 1");
        }
        if !(self.mu0 > 0.0 && self.mu0.is_finite()) {
            return invalid(format!("mu0 must be positive, got {}", self.mu0));
        }
        if !(self.rho > 1.0 && self.rho.is_finite()) {
            return invalid(format!("rho must exceed 1, got {}", self.rho));
        }
        if !(self.mu_max >= self.mu0 && self.mu_max.is_finite()) {
            return invalid(format!("mu_max={} must be finite and at least mu0={}", self.mu_max, self.mu0));
        }
        if !(self.tol > 0.0) {
            return invalid(format!("tol must be positive, got {}", self.tol));
        }
        Ok(())
    }
}

/// Nonnegative per-feature weights summing to one.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FeatureWeights(Vec<f64>);

impl FeatureWeights {
    pub fn new(a: Vec<f64>) -> Result<Self> {
        if a.is_empty() {
            return invalid("feature weights must not be empty");
        }
        if a.iter().any(|&v| !(v >= 0.0)) {
            return invalid("feature weights must be nonnegative");
        }
        let sum: f64 = a.iter().sum();
        if (sum - 1.0).abs() > 1e-10 {
            return invalid(format!("feature weights sum to {sum}, not 1"));
        }
        Ok(FeatureWeights(a))
    }

    pub fn uniform(d: usize) -> Self {
        FeatureWeights(vec![1.0 / d as f64; d])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// All ADMM iterates.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub z: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub s: DMatrix<f64>,
    /// `Y = FFᵀ`; absent until the first `Y` step, and always when `λ3 = 0`.
    pub y: Option<DMatrix<f64>>,
    pub a: FeatureWeights,
    pub c1: DMatrix<f64>,
    pub c2: DMatrix<f64>,
    pub c3: DMatrix<f64>,
    pub mu: f64,
    pub iter: usize,
}

impl SolverState {
    /// Starting point: `Z = S = U` = the kNN graph, everything else zero,
    /// uniform weights and `μ = μ0`.
    pub fn init(x: &DMatrix<f64>, params: &Hyperparams) -> Result<Self> {
        let (d, n) = x.shape();
        let knn = graph::knn_init_graph(x, params.k_nn)?.into_values();
        Ok(SolverState {
            z: knn.clone(),
            u: knn.clone(),
            s: knn,
            e: DMatrix::zeros(d, n),
            y: None,
            a: FeatureWeights::uniform(d),
            c1: DMatrix::zeros(d, n),
            c2: DMatrix::zeros(n, n),
            c3: DMatrix::zeros(n, n),
            mu: params.mu0,
            iter: 0,
        })
    }
}

/// Primal residuals `(‖X − XZ − E‖∞, ‖Z − S‖∞, ‖Z − U‖∞)`.
pub type Residuals = [f64; 3];

#[derive(Debug, Clone)]
pub struct SolverResult {
    pub z: SimilarityGraph,
    pub s: SimilarityGraph,
    /// `symmetrize(Z)`.
    pub w: SimilarityGraph,
    pub a: FeatureWeights,
    pub e: DMatrix<f64>,
    pub y: Option<DMatrix<f64>>,
    /// Objective after each iteration, with the block term on `⟨L_Z, Y⟩`.
    pub objective_trace: Vec<f64>,
    /// The same objective with the block term on `⟨L_S, Y⟩`.
    pub objective_s_trace: Vec<f64>,
    pub residual_trace: Vec<Residuals>,
    /// Penalty `μ` used during each iteration.
    pub mu_trace: Vec<f64>,
    /// Largest `|row sum − 1|` of `S` after each `S` step.
    pub row_sum_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// The iteration-independent linear system of the `Z` step.
///
/// `XᵀX + 2I` is factorized once per solve; its inverse is formed from the
/// Cholesky factor so every iteration is a single matrix product.
pub struct ZSystem {
    inverse: DMatrix<f64>,
}

impl ZSystem {
    pub fn new(x: &DMatrix<f64>) -> Result<Self> {
        let n = x.ncols();
        let gram = x.transpose() * x + DMatrix::identity(n, n) * 2.0;
        let chol = gram.cholesky().ok_or_else(|| AlrrError::NumericalFailure {
            step: "z",
            iteration: 0,
            detail: "XᵀX + 2I is not numerically positive definite".into(),
        })?;
        Ok(ZSystem { inverse: chol.inverse() })
    }

    /// Solves `(XᵀX + 2I) Z = rhs`.
    pub fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        &self.inverse * rhs
    }
}

/// Right-hand side `XᵀM1 + M2 + M3` of the `Z` step.
pub fn z_rhs(state: &SolverState, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mu = state.mu;
    let m1 = x - &state.e + &state.c1 / mu;
    let m2 = &state.s - &state.c2 / mu;
    let m3 = &state.u - &state.c3 / mu;
    x.transpose() * m1 + m2 + m3
}

/// `Z = (XᵀX + 2I)⁻¹(XᵀM1 + M2 + M3)`.
pub fn update_z(system: &ZSystem, state: &SolverState, x: &DMatrix<f64>) -> DMatrix<f64> {
    system.solve(&z_rhs(state, x))
}

/// `E = Ω_{λ2/μ}(X − XZ + C1/μ)`.
pub fn update_e(x: &DMatrix<f64>, z: &DMatrix<f64>, c1: &DMatrix<f64>, mu: f64, lambda2: f64) -> Result<DMatrix<f64>> {
    let target = x - x * z + c1 / mu;
    Ok(prox::soft_threshold(&target, ShrinkageThreshold::new(lambda2 / mu)?))
}

/// `U = Θ_{λ1/μ}(Z + C3/μ)`.
pub fn update_u(z: &DMatrix<f64>, c3: &DMatrix<f64>, mu: f64, lambda1: f64) -> Result<DMatrix<f64>> {
    prox::svt(&(z + c3 / mu), ShrinkageThreshold::new(lambda1 / mu)?)
}

/// `Y = FFᵀ` with `F` the `k` smallest eigenvectors of `L_S`.
pub fn update_y(s: &DMatrix<f64>, k: usize) -> Result<DMatrix<f64>> {
    let l = graph::laplacian(s)?;
    let f = prox::smallest_eigvecs(&l, k)?;
    Ok(&f * f.transpose())
}

/// The unconstrained minimizer `S̄` of the `S` subproblem.
pub fn s_bar(
    z: &DMatrix<f64>,
    c2: &DMatrix<f64>,
    y: Option<&DMatrix<f64>>,
    da: &DMatrix<f64>,
    mu: f64,
    lambda3: f64,
) -> Result<DMatrix<f64>> {
    let mut bar = z + c2 / mu - da / mu;
    if let Some(y) = y {
        if lambda3 > 0.0 {
            let dy = graph::dy_matrix(y)?;
            bar += (&dy + dy.transpose()) * (lambda3 / (2.0 * mu));
        }
    }
    Ok(bar)
}

/// Row-wise `s^i = max(σ^i 1̂_i + s̄^i, 0)` with zero diagonal.
///
/// `σ^i` is the multiplier of the row-sum constraint: the shift that makes
/// the clipped off-diagonal row sum to one. When no entry is clipped it is
/// `(1 − Σ_{j≠i} s̄_ij)/(n − 1)`.
pub fn project_rows(bar: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = bar.nrows();
    if n < 2 || !bar.is_square() {
        return invalid(format!("S step needs a square matrix with n >= 2, got {}x{}", n, bar.ncols()));
    }
    let mut s = DMatrix::zeros(n, n);
    let mut row: Vec<f64> = Vec::with_capacity(n - 1);
    for i in 0..n {
        row.clear();
        row.extend((0..n).filter(|&j| j != i).map(|j| bar[(i, j)]));
        let sigma = simplex_shift(&row);
        for j in (0..n).filter(|&j| j != i) {
            s[(i, j)] = (bar[(i, j)] + sigma).max(0.0);
        }
    }
    Ok(s)
}

/// Shift `σ` with `Σ max(v_j + σ, 0) = 1`.
pub(crate) fn simplex_shift(v: &[f64]) -> f64 {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut prefix = 0.0;
    let mut sigma = (1.0 - sorted[0]) / 1.0;
    for (j, &u) in sorted.iter().enumerate() {
        prefix += u;
        let candidate = (1.0 - prefix) / (j + 1) as f64;
        if u + candidate > 0.0 {
            sigma = candidate;
        } else {
            break;
        }
    }
    sigma
}

/// Full `S` step: builds `D_A` from the current weights and projects `S̄`.
pub fn update_s(
    state: &SolverState,
    z: &DMatrix<f64>,
    x: &DMatrix<f64>,
    mu: f64,
    lambda3: f64,
) -> Result<DMatrix<f64>> {
    let da = graph::da_matrix(x, state.a.as_slice())?;
    project_rows(&s_bar(z, &state.c2, state.y.as_ref(), &da, mu, lambda3)?)
}

/// Relative floor applied to the smoothness scores `w_i` before inversion.
pub const WEIGHT_FLOOR: f64 = 1e-12;

/// Feature smoothness scores `w_i = x^i L_S (x^i)ᵀ` over feature rows.
pub fn feature_scores(x: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<Vec<f64>> {
    let l = graph::laplacian(s)?;
    let lx = l.values() * x.transpose();
    Ok((0..x.nrows()).map(|f| x.row(f).transpose().dot(&lx.column(f))).collect())
}

/// `a_i = 1 / (w_i Σ_j 1/w_j)` with `w` from [`feature_scores`].
pub fn update_a(x: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<FeatureWeights> {
    weights_from_scores(&feature_scores(x, s)?)
}

/// Closed-form weights from smoothness scores. Scores are floored at
/// `WEIGHT_FLOOR · max(w)`; all-zero scores give uniform weights.
pub fn weights_from_scores(w: &[f64]) -> Result<FeatureWeights> {
    if w.iter().any(|v| !v.is_finite()) {
        return Err(AlrrError::NumericalFailure {
            step: "a",
            iteration: 0,
            detail: "feature smoothness score is not finite".into(),
        });
    }
    let d = w.len();
    let peak = w.iter().copied().fold(0.0_f64, f64::max);
    if peak <= 0.0 {
        return Ok(FeatureWeights::uniform(d));
    }
    let floor = WEIGHT_FLOOR * peak;
    let inv: Vec<f64> = w.iter().map(|&v| 1.0 / v.max(floor)).collect();
    let total: f64 = inv.iter().sum();
    Ok(FeatureWeights(inv.iter().map(|v| v / total).collect()))
}

/// Dual ascent on the three constraints, then `μ ← min(μ_max, ρμ)`.
///
/// Multipliers use the `μ` of the current iteration.
pub fn update_multipliers(state: &mut SolverState, x: &DMatrix<f64>, rho: f64, mu_max: f64) {
    let mu = state.mu;
    state.c1 += (x - x * &state.z - &state.e) * mu;
    state.c2 += (&state.z - &state.s) * mu;
    state.c3 += (&state.z - &state.u) * mu;
    state.mu = (rho * mu).min(mu_max);
}

pub fn residuals(state: &SolverState, x: &DMatrix<f64>) -> Residuals {
    [
        linalg::max_abs(&(x - x * &state.z - &state.e)),
        linalg::max_abs(&(&state.z - &state.s)),
        linalg::max_abs(&(&state.z - &state.u)),
    ]
}

/// The individual terms of the monitored objective, before normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveParts {
    /// `⟨D_A, Z⟩ = Σ_ij ‖Ax_i − Ax_j‖² z_ij`.
    pub weighted_penalty: f64,
    pub nuclear_norm: f64,
    pub l1_error: f64,
    /// `⟨L_Z, Y⟩`, zero when `Y` is absent.
    pub block_on_z: f64,
    /// `⟨L_S, Y⟩`, zero when `Y` is absent.
    pub block_on_s: f64,
    pub x_norm: f64,
}

impl ObjectiveParts {
    pub fn compute(state: &SolverState, x: &DMatrix<f64>, params: &Hyperparams) -> Result<Self> {
        let x_norm = x.norm();
        if !(x_norm > 0.0) {
            return invalid("objective undefined for an all-zero data matrix");
        }
        let da = graph::da_matrix(x, state.a.as_slice())?;
        let nuclear_norm = if params.lambda1 != 0.0 {
            linalg::nuclear_norm(&state.z)?
        } else {
            0.0
        };
        let (block_on_z, block_on_s) = match (&state.y, params.lambda3 != 0.0) {
            (Some(y), true) => (
                linalg::frob_dot(graph::laplacian(&state.z)?.values(), y),
                linalg::frob_dot(graph::laplacian(&state.s)?.values(), y),
            ),
            _ => (0.0, 0.0),
        };
        Ok(ObjectiveParts {
            weighted_penalty: linalg::frob_dot(&da, &state.z),
            nuclear_norm,
            l1_error: state.e.iter().map(|v| v.abs()).sum(),
            block_on_z,
            block_on_s,
            x_norm,
        })
    }

    fn total(&self, params: &Hyperparams, block: f64) -> f64 {
        (self.weighted_penalty
            + params.lambda1 * self.nuclear_norm
            + params.lambda2 * self.l1_error
            + params.lambda3 * block)
            / self.x_norm
    }

    /// `(⟨D_A, Z⟩ + λ1‖Z‖_* + λ2‖E‖₁ + λ3⟨L_Z, Y⟩) / ‖X‖_F`.
    pub fn value(&self, params: &Hyperparams) -> f64 {
        self.total(params, self.block_on_z)
    }

    /// Same as [`value`](Self::value) with the block term on `⟨L_S, Y⟩`.
    pub fn value_on_s(&self, params: &Hyperparams) -> f64 {
        self.total(params, self.block_on_s)
    }
}

/// Normalized objective
/// `(⟨D_A, Z⟩ + λ1‖Z‖_* + λ2‖E‖₁ + λ3⟨L_Z, Y⟩) / ‖X‖_F`.
pub fn objective(state: &SolverState, x: &DMatrix<f64>, params: &Hyperparams) -> Result<f64> {
    Ok(ObjectiveParts::compute(state, x, params)?.value(params))
}

fn check_finite(m: &DMatrix<f64>, step: &'static str, iteration: usize) -> Result<()> {
    if linalg::all_finite(m) {
        Ok(())
    } else {
        Err(AlrrError::NumericalFailure {
            step,
            iteration,
            detail: "iterate has non-finite entries".into(),
        })
    }
}

fn at_iteration(err: AlrrError, iteration: usize) -> AlrrError {
    match err {
        AlrrError::NumericalFailure { step, detail, .. } => AlrrError::NumericalFailure { step, iteration, detail },
        other => other,
    }
}

/// Runs the full solver on the `d × n` data matrix `x`.
pub fn solve(x: &DMatrix<f64>, params: &Hyperparams) -> Result<SolverResult> {
    params.validate()?;
    let (d, n) = x.shape();
    if d == 0 {
        return invalid("data needs at least one feature");
    }
    if n < params.k.max(params.k_nn) + 1 {
        return invalid(format!(
            "need n > max(k, k_nn) samples; got n={n}, k={}, k_nn={}",
            params.k, params.k_nn
        ));
    }
    if !linalg::all_finite(x) {
        return invalid("data has non-finite entries");
    }
    if !(x.norm() > 0.0) {
        return invalid("data matrix is identically zero");
    }

    let system = ZSystem::new(x)?;
    let mut state = SolverState::init(x, params)?;
    if params.weight_mode == WeightMode::Identity {
        state.a = FeatureWeights::uniform(d);
    }

    let mut objective_trace = Vec::new();
    let mut objective_s_trace = Vec::new();
    let mut residual_trace = Vec::new();
    let mut mu_trace = Vec::new();
    let mut row_sum_trace = Vec::new();
    let mut converged = false;

    while state.iter < params.max_iter {
        let it = state.iter + 1;
        let mu = state.mu;

        state.z = update_z(&system, &state, x);
        check_finite(&state.z, "z", it)?;

        state.e = update_e(x, &state.z, &state.c1, mu, params.lambda2).map_err(|e| at_iteration(e, it))?;
        check_finite(&state.e, "e", it)?;

        state.u = update_u(&state.z, &state.c3, mu, params.lambda1).map_err(|e| at_iteration(e, it))?;
        check_finite(&state.u, "u", it)?;

        if params.lambda3 > 0.0 {
            let y = update_y(&state.s, params.k).map_err(|e| at_iteration(e, it))?;
            check_finite(&y, "y", it)?;
            state.y = Some(y);
        }

        let z = state.z.clone();
        state.s = update_s(&state, &z, x, mu, params.lambda3).map_err(|e| at_iteration(e, it))?;
        check_finite(&state.s, "s", it)?;
        let worst_row = state
            .s
            .row_iter()
            .map(|r| (r.sum() - 1.0).abs())
            .fold(0.0_f64, f64::max);
        row_sum_trace.push(worst_row);

        if params.weight_mode == WeightMode::Auto {
            state.a = update_a(x, &state.s).map_err(|e| at_iteration(e, it))?;
        }

        let res = residuals(&state, x);
        update_multipliers(&mut state, x, params.rho, params.mu_max);
        for (m, step) in [(&state.c1, "c1"), (&state.c2, "c2"), (&state.c3, "c3")] {
            check_finite(m, step, it)?;
        }
        state.iter = it;

        let parts = ObjectiveParts::compute(&state, x, params).map_err(|e| at_iteration(e, it))?;
        let (obj, obj_s) = (parts.value(params), parts.value_on_s(params));
        if !obj.is_finite() {
            return Err(AlrrError::NumericalFailure {
                step: "objective",
                iteration: it,
                detail: "objective is not finite".into(),
            });
        }
        log::debug!(
            "iter {it}: obj={obj:.6e} obj_s={obj_s:.6e} mu={mu:.3e} res=[{:.2e}, {:.2e}, {:.2e}] row_sum_dev={worst_row:.1e}",
            res[0],
            res[1],
            res[2]
        );
        objective_trace.push(obj);
        objective_s_trace.push(obj_s);
        residual_trace.push(res);
        mu_trace.push(mu);

        if res.iter().all(|&r| r < params.tol) {
            converged = true;
            break;
        }
    }

    let w = graph::symmetrize(&state.z)?;
    Ok(SolverResult {
        z: SimilarityGraph::raw(state.z)?,
        s: SimilarityGraph::new_unchecked(state.s, GraphRole::Constrained),
        w,
        a: state.a,
        e: state.e,
        y: state.y,
        objective_trace,
        objective_s_trace,
        residual_trace,
        mu_trace,
        row_sum_trace,
        iterations: state.iter,
        converged,
    })
}
