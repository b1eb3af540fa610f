//! Auto-weighted low-rank representation (ALRR) for subspace clustering.
//!
//! The crate learns a similarity graph over the columns of a `d × n` data
//! matrix with an ADMM solver ([`solver::solve`]), cuts it into `k` clusters
//! with normalized cuts ([`spectral::ncut`]) and scores the result
//! ([`metrics`]). Synthetic generators and CSV ingestion live in [`data`];
//! the end-to-end commands behind the `alrr` binary live in [`pipeline`].

// `!(v >= 0.0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod graph;
mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod prox;
pub mod solver;
pub mod spectral;

pub use data::{DataMatrix, LabeledDataset, NormalizeMode};
pub use error::{AlrrError, Result};
pub use graph::{GraphRole, LaplacianMatrix, SimilarityGraph};
pub use metrics::MetricsReport;
pub use solver::{FeatureWeights, Hyperparams, SolverResult, SolverState, WeightMode};
pub use spectral::ClusterLabels;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/graphs.md")]
    mod graphs {}
    #[doc = include_str!("../../../book/src/proximal.md")]
    mod proximal {}
    #[doc = include_str!("../../../book/src/solver.md")]
    mod solver {}
    #[doc = include_str!("../../../book/src/clustering.md")]
    mod clustering {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
