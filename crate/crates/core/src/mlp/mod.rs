//! Multilevel Picard estimators of `(y_n, z_n)` at a space-time point.
//!
//! Both schemes share the depth-one estimate
//! `y_1 = M^-1 sum_i phi(x + W^i_(T-t)) + sum_j w_j f(t_j, 0, 0)`
//! and differ above it:
//!
//! * original: `y_n = M^-n sum phi(...) + sum_(l<n) sum_j w_j M^-(n-l) sum_i
//!   [f(y_l) - 1(l>0) f(y_(l-1))](t_j, x + W^i_(t_j - t))`, with `y_l` and
//!   `y_(l-1)` drawn independently;
//! * modified: `y_n = M^-1 sum_i y^i_(n-1)(t, x) + sum_j w_j M^-1 sum_i
//!   [f(y_(n-1)) - f(y_(n-2))](t_j, x + W^i_(t_j - t))`, where the pair at each
//!   point comes out of a single recursion when `reuse` is on.
//!
//! The z estimates use the kernel `W_(s-t) / (s-t)`, with the control variate
//! `phi(x + W) - phi(x)` on the terminal term.

mod cost;
mod engine;

use serde::{Deserialize, Serialize};

pub use cost::{
    modified_cache_hits, modified_generator_evals, original_generator_evals, CostCounters,
};

use crate::error::{Error, Result};
use crate::parallel::Execution;
use crate::problem::BsdeProblem;
use crate::quadrature::MAX_ORDER;
use crate::sampling::StreamKey;
use engine::Engine;

/// Largest supported iteration depth; cost grows like `(MQ)^n`.
pub const MAX_DEPTH: usize = 10;

// Slots of the child keys a frame derives from its own key.
/// Stream of a depth-one frame.
pub const SLOT_BASE: u32 = 0;
/// `i`-th copy of `y_(n-1)(t, x)` in the modified scheme.
pub const SLOT_COPY: u32 = 1;
/// `i`-th Brownian path of a difference term.
pub const SLOT_PATH: u32 = 2;
/// Terminal samples of the original scheme.
pub const SLOT_TERMINAL: u32 = 3;
/// Level-zero kernel paths of the original scheme (z only).
pub const SLOT_LEVEL0: u32 = 4;
/// First slot of the per-node recursions; node `j` uses `SLOT_POINT + j`
/// (modified) or `SLOT_POINT + 2j`, `SLOT_POINT + 2j + 1` (original).
pub const SLOT_POINT: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Original,
    Modified,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Original => "original",
            Scheme::Modified => "modified",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(Scheme::Original),
            "modified" => Ok(Scheme::Modified),
            other => Err(Error::InvalidConfig(format!("unknown scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub scheme: Scheme,
    /// Picard depth `n`.
    pub depth: usize,
    /// Base sample count `M`.
    pub samples: usize,
    /// Gauss–Legendre order `Q`.
    pub quad_order: usize,
    pub seed: u64,
    pub estimate_z: bool,
    /// Take `y_(n-2)` at each sampled point from the `y_(n-1)` recursion
    /// (modified scheme only). Values are identical either way.
    pub reuse: bool,
    /// Modified scheme only: weight the leading z copies by
    /// `W_(T-t) / (T-t)` instead of averaging them.
    pub strict_printed_form: bool,
    pub execution: Execution,
}

impl MlpConfig {
    pub fn new(scheme: Scheme, depth: usize, samples: usize, quad_order: usize, seed: u64) -> Self {
        MlpConfig {
            scheme,
            depth,
            samples,
            quad_order,
            seed,
            estimate_z: false,
            reuse: true,
            strict_printed_form: false,
            execution: Execution::default(),
        }
    }

    pub fn with_z(mut self, estimate_z: bool) -> Self {
        self.estimate_z = estimate_z;
        self
    }

    pub fn with_reuse(mut self, reuse: bool) -> Self {
        self.reuse = reuse;
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth > MAX_DEPTH {
            return Err(Error::InvalidConfig(format!(
                "depth {} exceeds the maximum of {MAX_DEPTH}",
                self.depth
            )));
        }
        if self.samples == 0 {
            return Err(Error::InvalidConfig("sample count M must be at least 1".into()));
        }
        if self.quad_order == 0 || self.quad_order > MAX_ORDER {
            return Err(Error::InvalidOrder(self.quad_order));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub y: f64,
    /// Present when `estimate_z` was requested.
    pub z: Option<Vec<f64>>,
    /// Sum of all generator contributions, i.e. `y` minus the Monte-Carlo
    /// mean of the terminal values. Exactly zero when `f` vanishes.
    pub generator_part: f64,
    pub cost: CostCounters,
}

/// `y_k` and `y_(k-1)` at the same point from one recursion tree.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedEstimate {
    pub upper: Estimate,
    /// The first i.i.d. copy inside `upper`; its cost is part of `upper.cost`.
    pub lower: Estimate,
}

fn check_query(p: &BsdeProblem, t: f64, x: &[f64]) -> Result<()> {
    if !(t >= 0.0 && t < p.horizon()) {
        return Err(Error::InvalidTime {
            t,
            horizon: p.horizon(),
        });
    }
    if x.len() != p.dim() {
        return Err(Error::InvalidDimension(x.len()));
    }
    if let Some(v) = x.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "query point",
            value: *v,
        });
    }
    Ok(())
}

fn finish(v: engine::Value) -> Result<Estimate> {
    if !v.y.is_finite() {
        return Err(Error::NonFinite {
            context: "y estimate",
            value: v.y,
        });
    }
    if let Some(bad) = v.z.iter().flatten().find(|c| !c.is_finite()) {
        return Err(Error::NonFinite {
            context: "z estimate",
            value: *bad,
        });
    }
    Ok(Estimate {
        y: v.y,
        z: v.z,
        generator_part: v.generator_part,
        cost: v.cost,
    })
}

fn engine<'a>(p: &'a BsdeProblem, c: &MlpConfig) -> Result<Engine<'a>> {
    c.validate()?;
    Engine::new(
        p,
        c.samples,
        c.quad_order,
        c.reuse,
        c.strict_printed_form,
        c.execution,
    )
}

/// Runs the scheme selected by `c.scheme`.
pub fn estimate(p: &BsdeProblem, c: &MlpConfig, t: f64, x: &[f64]) -> Result<Estimate> {
    match c.scheme {
        Scheme::Original => estimate_original(p, c, t, x),
        Scheme::Modified => estimate_modified(p, c, t, x),
    }
}

pub fn estimate_original(p: &BsdeProblem, c: &MlpConfig, t: f64, x: &[f64]) -> Result<Estimate> {
    estimate_original_with_key(p, c, t, x, &StreamKey::root(c.seed))
}

pub fn estimate_original_with_key(
    p: &BsdeProblem,
    c: &MlpConfig,
    t: f64,
    x: &[f64],
    key: &StreamKey,
) -> Result<Estimate> {
    check_query(p, t, x)?;
    let e = engine(p, c)?;
    finish(e.original(c.depth, t, x, key, c.estimate_z)?)
}

pub fn estimate_modified(p: &BsdeProblem, c: &MlpConfig, t: f64, x: &[f64]) -> Result<Estimate> {
    estimate_modified_with_key(p, c, t, x, &StreamKey::root(c.seed))
}

pub fn estimate_modified_with_key(
    p: &BsdeProblem,
    c: &MlpConfig,
    t: f64,
    x: &[f64],
    key: &StreamKey,
) -> Result<Estimate> {
    check_query(p, t, x)?;
    let e = engine(p, c)?;
    finish(e.modified(c.depth, t, x, key, c.estimate_z)?)
}

/// `y_k(t, x)` and `y_(k-1)(t, x)` of the modified scheme from a single
/// recursion rooted at `StreamKey::root(c.seed)`; `c.depth` is ignored.
pub fn paired_recursion(p: &BsdeProblem, c: &MlpConfig, t: f64, x: &[f64], k: usize) -> Result<PairedEstimate> {
    paired_recursion_with_key(p, c, t, x, k, &StreamKey::root(c.seed))
}

/// The lower value equals `estimate_modified_with_key` at depth `k - 1` with
/// key `key.child(k, 0, SLOT_COPY)`.
pub fn paired_recursion_with_key(
    p: &BsdeProblem,
    c: &MlpConfig,
    t: f64,
    x: &[f64],
    k: usize,
    key: &StreamKey,
) -> Result<PairedEstimate> {
    if k == 0 {
        return Err(Error::InvalidConfig("paired recursion needs depth k >= 1".into()));
    }
    check_query(p, t, x)?;
    let e = engine(p, &MlpConfig { depth: k, ..*c })?;
    let (upper, lower) = e.modified_frame(k, t, x, key, c.estimate_z)?;
    Ok(PairedEstimate {
        upper: finish(upper)?,
        lower: finish(lower)?,
    })
}
