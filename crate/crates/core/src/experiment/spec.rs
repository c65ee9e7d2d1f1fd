use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::{MlpConfig, Scheme, MAX_DEPTH};
use crate::problem::{builtin_problem, BsdeProblem, ProblemOptions};
use crate::quadrature::MAX_ORDER;

/// Version written to every results file and required in every config.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub name: String,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_dim() -> usize {
    1
}

fn default_horizon() -> f64 {
    1.0
}

fn default_alpha() -> f64 {
    0.3
}

impl ProblemSpec {
    pub fn named(name: &str) -> Self {
        ProblemSpec {
            name: name.to_string(),
            dim: default_dim(),
            horizon: default_horizon(),
            alpha: default_alpha(),
        }
    }

    pub fn options(&self) -> ProblemOptions {
        ProblemOptions {
            dim: self.dim,
            horizon: self.horizon,
            alpha: self.alpha,
        }
    }

    pub fn build(&self) -> Result<BsdeProblem> {
        builtin_problem(&self.name, &self.options())
    }
}

/// Query point: one value broadcast to every coordinate, or a full vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QueryPoint {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Default for QueryPoint {
    fn default() -> Self {
        QueryPoint::Scalar(0.0)
    }
}

impl QueryPoint {
    pub fn resolve(&self, dim: usize) -> Result<Vec<f64>> {
        match self {
            QueryPoint::Scalar(v) => Ok(vec![*v; dim]),
            QueryPoint::Vector(v) if v.len() == dim => Ok(v.clone()),
            QueryPoint::Vector(v) => Err(Error::InvalidConfig(format!(
                "query point has {} coordinates, problem has d = {dim}",
                v.len()
            ))),
        }
    }
}

/// A parameter sweep. Cells are the product `schemes x depths x samples x
/// quad_orders x cache`, enumerated in that nesting order; the cache axis
/// applies to the modified scheme only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub schema_version: u32,
    pub problem: ProblemSpec,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<Scheme>,
    pub depths: Vec<usize>,
    pub samples: Vec<usize>,
    pub quad_orders: Vec<usize>,
    #[serde(default = "default_cache")]
    pub cache: Vec<bool>,
    #[serde(default)]
    pub t: f64,
    #[serde(default)]
    pub x: QueryPoint,
    pub replications: usize,
    /// Root seed; the command line `--seed` applies only when this is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Results path; `--out` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub estimate_z: bool,
    #[serde(default)]
    pub strict_printed_form: bool,
    #[serde(default = "default_true")]
    pub theorem_bounds: bool,
}

fn default_schemes() -> Vec<Scheme> {
    vec![Scheme::Modified]
}

fn default_cache() -> Vec<bool> {
    vec![true]
}

fn default_true() -> bool {
    true
}

/// One point of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub index: usize,
    pub scheme: Scheme,
    pub depth: usize,
    pub samples: usize,
    pub quad_order: usize,
    /// `None` for the original scheme.
    pub cache: Option<bool>,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ExperimentSpec =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Ok(spec)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serialises")
    }

    pub fn seed_or(&self, fallback: u64) -> u64 {
        self.seed.unwrap_or(fallback)
    }

    /// Checks everything except the problem name.
    pub fn validate_grid(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let axes: [(&str, bool); 5] = [
            ("schemes", self.schemes.is_empty()),
            ("depths", self.depths.is_empty()),
            ("samples", self.samples.is_empty()),
            ("quad_orders", self.quad_orders.is_empty()),
            ("cache", self.cache.is_empty()),
        ];
        for (name, empty) in axes {
            if empty {
                return Err(Error::InvalidConfig(format!("grid axis `{name}` is empty")));
            }
        }
        if let Some(&d) = self.depths.iter().find(|&&d| d > MAX_DEPTH) {
            return Err(Error::InvalidConfig(format!("depth {d} exceeds {MAX_DEPTH}")));
        }
        if self.samples.contains(&0) {
            return Err(Error::InvalidConfig("sample counts must be at least 1".into()));
        }
        if let Some(&q) = self.quad_orders.iter().find(|&&q| q == 0 || q > MAX_ORDER) {
            return Err(Error::InvalidConfig(format!(
                "quadrature order {q} outside 1..={MAX_ORDER}"
            )));
        }
        if self.replications < 2 {
            return Err(Error::InvalidConfig("replications must be at least 2".into()));
        }
        if self.problem.dim == 0 {
            return Err(Error::InvalidConfig("dimension must be at least 1".into()));
        }
        if !(self.problem.horizon > 0.0 && self.problem.horizon.is_finite()) {
            return Err(Error::InvalidConfig("horizon must be positive".into()));
        }
        if !(self.t >= 0.0 && self.t < self.problem.horizon) {
            return Err(Error::InvalidConfig(format!(
                "query time {} outside [0, {})",
                self.t, self.problem.horizon
            )));
        }
        self.x.resolve(self.problem.dim)?;
        Ok(())
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &scheme in &self.schemes {
            for &depth in &self.depths {
                for &samples in &self.samples {
                    for &quad_order in &self.quad_orders {
                        let cache_axis: Vec<Option<bool>> = match scheme {
                            Scheme::Original => vec![None],
                            Scheme::Modified => self.cache.iter().map(|&c| Some(c)).collect(),
                        };
                        for cache in cache_axis {
                            out.push(Cell {
                                index: out.len(),
                                scheme,
                                depth,
                                samples,
                                quad_order,
                                cache,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn config_for(&self, cell: &Cell, seed: u64) -> MlpConfig {
        let mut c = MlpConfig::new(cell.scheme, cell.depth, cell.samples, cell.quad_order, seed)
            .with_z(self.estimate_z)
            .with_reuse(cell.cache.unwrap_or(false));
        c.strict_printed_form = self.strict_printed_form;
        c
    }
}
