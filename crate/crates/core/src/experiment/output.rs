use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::run::{BoundStatus, ExperimentOutcome, ResultRow};
use super::spec::{Cell, ExperimentSpec, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::mlp::Scheme;

/// CSV columns, in output order.
pub const COLUMNS: [&str; 26] = [
    "cell",
    "scheme",
    "problem",
    "dim",
    "depth",
    "samples",
    "quad_order",
    "cache",
    "replications",
    "seed",
    "t",
    "mean_y",
    "std_y",
    "reference",
    "abs_error",
    "mean_z",
    "bias_bound",
    "variance_bound",
    "quadrature_term",
    "mc_term",
    "picard_term",
    "generator_evals",
    "terminal_evals",
    "gaussian_draws",
    "cache_hits",
    "wall_time_s",
];

/// Columns that vary between otherwise identical runs.
pub const TIMING_COLUMNS: [&str; 1] = ["wall_time_s"];

pub const MISSING: &str = "NA";
pub const NOT_APPLICABLE: &str = "not-applicable";
pub const MISSING_BOUNDS: &str = "missing-bounds";

/// 17 significant digits, enough to round-trip every `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn format_opt(v: Option<f64>) -> String {
    v.map_or_else(|| MISSING.to_string(), format_f64)
}

fn csv_error(e: impl std::fmt::Display) -> Error {
    Error::InvalidConfig(format!("results file: {e}"))
}

fn record(row: &ResultRow) -> Vec<String> {
    let c = &row.cell;
    let bounds: [String; 5] = match &row.bounds {
        BoundStatus::Computed {
            bias_bound,
            variance_bound,
            quadrature_term,
            mc_term,
            picard_term,
        } => [bias_bound, variance_bound, quadrature_term, mc_term, picard_term].map(|v| format_f64(*v)),
        BoundStatus::NotRequested => std::array::from_fn(|_| MISSING.to_string()),
        BoundStatus::NotApplicable => std::array::from_fn(|_| NOT_APPLICABLE.to_string()),
        BoundStatus::MissingBounds => std::array::from_fn(|_| MISSING_BOUNDS.to_string()),
    };
    let mut out = vec![
        c.index.to_string(),
        c.scheme.name().to_string(),
        row.problem.clone(),
        row.dim.to_string(),
        c.depth.to_string(),
        c.samples.to_string(),
        c.quad_order.to_string(),
        match c.cache {
            Some(true) => "on".to_string(),
            Some(false) => "off".to_string(),
            None => MISSING.to_string(),
        },
        row.replications.to_string(),
        row.seed.to_string(),
        format_f64(row.t),
        format_f64(row.mean_y),
        format_f64(row.std_y),
        format_opt(row.reference),
        format_opt(row.abs_error),
        row.mean_z.as_ref().map_or_else(
            || MISSING.to_string(),
            |z| z.iter().map(|v| format_f64(*v)).collect::<Vec<_>>().join(";"),
        ),
    ];
    out.extend(bounds);
    out.extend(
        [
            row.generator_evals,
            row.terminal_evals,
            row.gaussian_draws,
            row.cache_hits,
            row.wall_time_s,
        ]
        .map(format_f64),
    );
    out
}

pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS).map_err(csv_error)?;
    for row in rows {
        w.write_record(record(row)).map_err(csv_error)?;
    }
    w.flush().map_err(csv_error)?;
    Ok(())
}

fn parse<T: std::str::FromStr>(field: &str, column: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| csv_error(format!("bad value `{field}` in column `{column}`")))
}

fn parse_opt(field: &str, column: &str) -> Result<Option<f64>> {
    if field == MISSING {
        Ok(None)
    } else {
        parse(field, column).map(Some)
    }
}

/// Parses a file produced by [`write_csv`].
pub fn read_csv<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(csv_error)?.clone();
    if headers.iter().ne(COLUMNS.iter().copied()) {
        return Err(csv_error("unexpected header"));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_error)?;
        let f = |i: usize| &rec[i];
        let scheme: Scheme = f(1).parse()?;
        let cache = match f(7) {
            "on" => Some(true),
            "off" => Some(false),
            _ => None,
        };
        let bounds = match f(16) {
            MISSING => BoundStatus::NotRequested,
            NOT_APPLICABLE => BoundStatus::NotApplicable,
            MISSING_BOUNDS => BoundStatus::MissingBounds,
            _ => BoundStatus::Computed {
                bias_bound: parse(f(16), COLUMNS[16])?,
                variance_bound: parse(f(17), COLUMNS[17])?,
                quadrature_term: parse(f(18), COLUMNS[18])?,
                mc_term: parse(f(19), COLUMNS[19])?,
                picard_term: parse(f(20), COLUMNS[20])?,
            },
        };
        let mean_z = if f(15) == MISSING {
            None
        } else {
            Some(
                f(15)
                    .split(';')
                    .map(|v| parse(v, COLUMNS[15]))
                    .collect::<Result<Vec<f64>>>()?,
            )
        };
        rows.push(ResultRow {
            cell: Cell {
                index: parse(f(0), COLUMNS[0])?,
                scheme,
                depth: parse(f(4), COLUMNS[4])?,
                samples: parse(f(5), COLUMNS[5])?,
                quad_order: parse(f(6), COLUMNS[6])?,
                cache,
            },
            problem: f(2).to_string(),
            dim: parse(f(3), COLUMNS[3])?,
            replications: parse(f(8), COLUMNS[8])?,
            seed: parse(f(9), COLUMNS[9])?,
            t: parse(f(10), COLUMNS[10])?,
            mean_y: parse(f(11), COLUMNS[11])?,
            std_y: parse(f(12), COLUMNS[12])?,
            reference: parse_opt(f(13), COLUMNS[13])?,
            abs_error: parse_opt(f(14), COLUMNS[14])?,
            mean_z,
            bounds,
            generator_evals: parse(f(21), COLUMNS[21])?,
            terminal_evals: parse(f(22), COLUMNS[22])?,
            gaussian_draws: parse(f(23), COLUMNS[23])?,
            cache_hits: parse(f(24), COLUMNS[24])?,
            wall_time_s: parse(f(25), COLUMNS[25])?,
        });
    }
    Ok(rows)
}

/// Reproduction record written next to the results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub schema_version: u32,
    /// The spec with the seed actually used filled in.
    pub spec: ExperimentSpec,
    pub seed: u64,
    pub columns: Vec<String>,
    pub rows: usize,
    pub failed_cells: Vec<String>,
    pub crate_version: String,
}

impl Sidecar {
    pub fn new(spec: &ExperimentSpec, seed: u64, outcome: &ExperimentOutcome) -> Sidecar {
        let mut spec = spec.clone();
        spec.seed = Some(seed);
        Sidecar {
            schema_version: SCHEMA_VERSION,
            spec,
            seed,
            columns: COLUMNS.iter().map(|c| c.to_string()).collect(),
            rows: outcome.rows.len(),
            failed_cells: outcome
                .failures
                .iter()
                .map(|f| format!("cell {}: {}", f.cell.index, f.error))
                .collect(),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// Results as a single JSON document (`--format json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonResults {
    pub schema_version: u32,
    pub spec: ExperimentSpec,
    pub seed: u64,
    pub rows: Vec<ResultRow>,
    pub failed_cells: Vec<String>,
}

impl JsonResults {
    pub fn new(spec: &ExperimentSpec, seed: u64, outcome: &ExperimentOutcome) -> JsonResults {
        let side = Sidecar::new(spec, seed, outcome);
        JsonResults {
            schema_version: SCHEMA_VERSION,
            spec: side.spec,
            seed,
            rows: outcome.rows.clone(),
            failed_cells: side.failed_cells,
        }
    }
}
