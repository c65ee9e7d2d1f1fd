//! Parameter sweeps driven by a JSON spec, with CSV and JSON output.
//!
//! A results CSV has the fixed column order [`COLUMNS`]; absent values are
//! written as `NA`, bound columns outside the theorem's scope as
//! `not-applicable`. Floats carry 17 significant digits so the file parses
//! back to identical values. A JSON sidecar records the resolved spec and seed.

mod output;
mod run;
mod spec;

pub use output::{
    format_f64, read_csv, write_csv, JsonResults, Sidecar, COLUMNS, MISSING, MISSING_BOUNDS,
    NOT_APPLICABLE, TIMING_COLUMNS,
};
pub use run::{run_experiment, BoundStatus, CellFailure, ExperimentOutcome, ResultRow};
pub use spec::{Cell, ExperimentSpec, ProblemSpec, QueryPoint, SCHEMA_VERSION};
