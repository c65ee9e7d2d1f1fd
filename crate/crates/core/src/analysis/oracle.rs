//! Deterministic Picard iteration in one space dimension.
//!
//! `y^(k)(s, x) = E[phi(x + W_(T-s))] + sum_j w_j E[f(t_j, y^(k-1)(t_j, x + W_(t_j - s)))]`
//! with `y^(0) = 0`, the same Gauss–Legendre rule in time as the stochastic
//! schemes, and Gaussian expectations by composite Gauss–Legendre in space.
//! Each level's `y^(k-1)(t_j, .)` is tabulated once per time node on a
//! uniform grid and interpolated, so the work grows like `Q^depth` grids
//! rather than `(Q * nodes)^depth` point evaluations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::BsdeProblem;
use crate::quadrature::{build_rule, normal_expectation_rule, QuadratureRule};

/// Largest supported oracle depth.
pub const MAX_ORACLE_DEPTH: usize = 6;

/// Interpolation stencil width.
const STENCIL: usize = 6;

/// Space discretisation of the oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpaceQuadrature {
    /// Panels of the composite rule on `[-half_width, half_width]`.
    pub panels: usize,
    /// Gauss–Legendre order per panel.
    pub order: usize,
    /// Truncation in standard deviations.
    pub half_width: f64,
    /// Spacing of the interpolation grids.
    pub grid_step: f64,
}

impl Default for SpaceQuadrature {
    fn default() -> Self {
        SpaceQuadrature {
            panels: 10,
            order: 20,
            half_width: 8.0,
            grid_step: 0.05,
        }
    }
}

struct Oracle<'a> {
    problem: &'a BsdeProblem,
    reference: QuadratureRule,
    normal: Vec<(f64, f64)>,
    half_width: f64,
    step: f64,
}

/// Values on the grid `x_i = (first + i) * step`.
struct Grid {
    first: i64,
    step: f64,
    values: Vec<f64>,
}

impl Grid {
    /// Six-point Lagrange interpolation.
    fn interpolate(&self, x: f64) -> f64 {
        let pos = x / self.step - self.first as f64;
        let n = self.values.len();
        let base = (pos.floor() as i64 - (STENCIL as i64 / 2 - 1)).clamp(0, (n - STENCIL) as i64) as usize;
        let u = pos - base as f64;
        let mut sum = 0.0;
        for i in 0..STENCIL {
            let mut w = 1.0;
            for k in 0..STENCIL {
                if k != i {
                    w *= (u - k as f64) / (i as f64 - k as f64);
                }
            }
            sum += w * self.values[base + i];
        }
        sum
    }
}

impl Oracle<'_> {
    /// `y^(depth)(s, p)` for each `p` in `points`.
    fn values(&self, depth: usize, s: f64, points: &[f64]) -> Result<Vec<f64>> {
        if depth == 0 {
            return Ok(vec![0.0; points.len()]);
        }
        let p = self.problem;
        let horizon = p.horizon();
        let sigma = (horizon - s).sqrt();
        let mut out: Vec<f64> = points
            .iter()
            .map(|&x| {
                self.normal
                    .iter()
                    .map(|&(xi, w)| w * p.terminal(&[x + sigma * xi]))
                    .sum()
            })
            .collect();

        let rule = self.reference.remap(s, horizon)?;
        let zero = [0.0];
        for (t_j, w_j) in rule.iter() {
            if depth == 1 {
                let f = p.generator(t_j, 0.0, &zero);
                out.iter_mut().for_each(|v| *v += w_j * f);
                continue;
            }
            let sigma_j = (t_j - s).sqrt();
            let grid = self.tabulate(depth - 1, t_j, points, sigma_j)?;
            for (v, &x) in out.iter_mut().zip(points) {
                let e: f64 = self
                    .normal
                    .iter()
                    .map(|&(xi, w)| w * p.generator(t_j, grid.interpolate(x + sigma_j * xi), &zero))
                    .sum();
                *v += w_j * e;
            }
        }
        if let Some(bad) = out.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "deterministic Picard oracle",
                value: *bad,
            });
        }
        Ok(out)
    }

    /// `y^(depth)(s, .)` on a grid covering every `x + sigma * xi` needed.
    fn tabulate(&self, depth: usize, s: f64, points: &[f64], sigma: f64) -> Result<Grid> {
        let lo = points.iter().copied().fold(f64::INFINITY, f64::min) - self.half_width * sigma;
        let hi = points.iter().copied().fold(f64::NEG_INFINITY, f64::max) + self.half_width * sigma;
        let margin = STENCIL as i64;
        let first = (lo / self.step).floor() as i64 - margin;
        let last = (hi / self.step).ceil() as i64 + margin;
        let grid_points: Vec<f64> = (first..=last).map(|i| i as f64 * self.step).collect();
        Ok(Grid {
            first,
            step: self.step,
            values: self.values(depth, s, &grid_points)?,
        })
    }
}

/// Depth-`depth` deterministic Picard iterate at `(t, x)` for a problem in
/// one dimension whose generator ignores `z`.
pub fn deterministic_picard(
    p: &BsdeProblem,
    depth: usize,
    quad_order: usize,
    t: f64,
    x: f64,
    space: &SpaceQuadrature,
) -> Result<f64> {
    if p.dim() != 1 {
        return Err(Error::OracleUnavailable(format!(
            "requires d = 1, problem has d = {}",
            p.dim()
        )));
    }
    if p.generator_uses_z() {
        return Err(Error::OracleUnavailable("generator depends on z".into()));
    }
    if depth > MAX_ORACLE_DEPTH {
        return Err(Error::OracleUnavailable(format!(
            "depth {depth} exceeds the maximum of {MAX_ORACLE_DEPTH}"
        )));
    }
    if !(t >= 0.0 && t < p.horizon()) {
        return Err(Error::InvalidTime {
            t,
            horizon: p.horizon(),
        });
    }
    if !(space.grid_step > 0.0) || !(space.half_width > 0.0) {
        return Err(Error::InvalidConfig("space quadrature needs positive step and width".into()));
    }
    let oracle = Oracle {
        problem: p,
        reference: build_rule(quad_order, -1.0, 1.0)?,
        normal: normal_expectation_rule(space.panels, space.order, space.half_width)?,
        half_width: space.half_width,
        step: space.grid_step,
    };
    Ok(oracle.values(depth, t, &[x])?[0])
}
