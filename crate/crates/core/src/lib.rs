//! Multilevel Picard solvers for high-dimensional backward stochastic
//! differential equations.
//!
//! Two estimators are provided for the scalar BSDE
//! `y_t = phi(W_T) + int_t^T f(s, y_s, z_s) ds - int_t^T z_s dW_s`:
//!
//! * [`mlp::estimate_original`], the classical multilevel Picard scheme with
//!   level-dependent sample counts `M^(n-l)`;
//! * [`mlp::estimate_modified`], which averages `M` independent copies of the
//!   previous iterate and adds a single difference correction. Evaluating
//!   `y_(n-1)` at a sample point yields `y_(n-2)` at the same point as an
//!   intermediate, and that value is reused in the correction.
//!
//! Randomness comes from counter-based streams keyed by the recursion path
//! ([`sampling::StreamKey`]), so every estimate is bit-reproducible under any
//! thread schedule. The [`analysis`] module evaluates the a-priori error bound,
//! provides a deterministic Picard oracle in one dimension and aggregates
//! independent replications. [`experiment`] drives parameter sweeps for the
//! `bsde-mlp` command line tool.

pub mod analysis;
pub mod error;
pub mod experiment;
pub mod mlp;
pub mod parallel;
pub mod problem;
pub mod quadrature;
pub mod sampling;

pub use error::{Error, Result};
