use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::spec::{Cell, ExperimentSpec};
use crate::analysis::{run_replications, theorem_bound};
use crate::error::{Error, Result};
use crate::mlp::Scheme;
use crate::parallel::Execution;

/// Bound columns of a row: numbers, or the reason they are absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundStatus {
    Computed {
        bias_bound: f64,
        variance_bound: f64,
        quadrature_term: f64,
        mc_term: f64,
        picard_term: f64,
    },
    NotRequested,
    /// Outside the theorem's scope (z-dependent generator, original scheme).
    NotApplicable,
    MissingBounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub cell: Cell,
    pub problem: String,
    pub dim: usize,
    pub replications: usize,
    pub seed: u64,
    pub t: f64,
    pub mean_y: f64,
    pub std_y: f64,
    pub reference: Option<f64>,
    pub abs_error: Option<f64>,
    pub mean_z: Option<Vec<f64>>,
    pub bounds: BoundStatus,
    pub generator_evals: f64,
    pub terminal_evals: f64,
    pub gaussian_draws: f64,
    pub cache_hits: f64,
    pub wall_time_s: f64,
}

/// A cell that could not be completed.
#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub cell: Cell,
    pub error: Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    /// Completed cells in grid order.
    pub rows: Vec<ResultRow>,
    pub failures: Vec<CellFailure>,
}

/// Runs every cell of `spec` in grid order with root seed `seed`.
///
/// Returns an error only when the spec itself is unusable (bad grid, unknown
/// problem); per-cell failures are collected in the outcome.
pub fn run_experiment(spec: &ExperimentSpec, seed: u64, execution: Execution) -> Result<ExperimentOutcome> {
    spec.validate_grid()?;
    let problem = spec.problem.build()?;
    let x = spec.x.resolve(problem.dim())?;
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for cell in spec.cells() {
        let config = spec.config_for(&cell, seed).with_execution(execution);
        let start = Instant::now();
        let stats = match run_replications(&problem, &config, spec.t, &x, spec.replications) {
            Ok(s) => s,
            Err(error) => {
                failures.push(CellFailure { cell, error });
                continue;
            }
        };
        let wall_time_s = start.elapsed().as_secs_f64();
        let bounds = if !spec.theorem_bounds {
            BoundStatus::NotRequested
        } else if cell.scheme == Scheme::Original {
            BoundStatus::NotApplicable
        } else {
            match theorem_bound(&problem, &config, spec.t) {
                Ok(b) => BoundStatus::Computed {
                    bias_bound: b.bias_bound,
                    variance_bound: b.variance_bound,
                    quadrature_term: b.components.quadrature_term,
                    mc_term: b.components.mc_term,
                    picard_term: b.components.picard_term,
                },
                Err(Error::TheoremNotApplicable(_)) => BoundStatus::NotApplicable,
                Err(Error::MissingBounds(_)) => BoundStatus::MissingBounds,
                Err(error) => {
                    failures.push(CellFailure { cell, error });
                    continue;
                }
            }
        };
        rows.push(ResultRow {
            cell,
            problem: problem.name().to_string(),
            dim: problem.dim(),
            replications: stats.replications,
            seed,
            t: spec.t,
            mean_y: stats.mean_y,
            std_y: stats.std_y,
            reference: stats.reference,
            abs_error: stats.abs_error,
            mean_z: stats.mean_z,
            bounds,
            generator_evals: stats.mean_cost.generator_evals,
            terminal_evals: stats.mean_cost.terminal_evals,
            gaussian_draws: stats.mean_cost.gaussian_draws,
            cache_hits: stats.mean_cost.cache_hits,
            wall_time_s,
        });
    }
    Ok(ExperimentOutcome { rows, failures })
}
