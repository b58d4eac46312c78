//! Sparsity-driven weighted ensemble classifier.
//!
//! A pool of bagged CART trees votes on each row; the combination weights are
//! found by iteratively minimizing a convex relaxation of a sign-based fidelity
//! term plus an L1 sparsity term and a non-negativity penalty. Small weights are
//! thresholded to exact zeros afterwards, so only a fraction of the pool is
//! consulted at prediction time.
//!
//! Module map:
//!
//! - [`dataset`]: CSV ingestion, label encoding, seeded splits.
//! - [`tree`]: CART trees, bagged pools, and the ±1 prediction matrix.
//! - [`linalg`]: dense kernels and the Cholesky solver.
//! - [`solver`]: the weight optimizer itself.
//! - [`baselines`]: majority vote, weighted majority vote, single best tree.
//! - [`evaluation`]: repeated-split experiments, sweeps and timing studies.

pub mod baselines;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod linalg;
pub mod math;
pub mod model;
pub mod report;
pub mod solver;
pub mod tree;

pub use error::{Error, Result};
