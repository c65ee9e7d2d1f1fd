//! Error bounds, the one-dimensional deterministic oracle and replication
//! statistics.

mod bound;
mod oracle;
mod stats;

pub use bound::{c2_constant, epsilon, theorem_bound, BoundComponents, BoundConstants, TheoremBound};
pub use oracle::{deterministic_picard, SpaceQuadrature, MAX_ORACLE_DEPTH};
pub use stats::{run_replications, run_replications_with_seeds, MeanCost, RunStats};
