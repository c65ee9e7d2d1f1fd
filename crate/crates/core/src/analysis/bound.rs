//! A-priori error bound for the modified scheme with a `z`-free generator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::MlpConfig;
use crate::problem::BsdeProblem;
use crate::quadrature::quadrature_error_bound;

const SCAN_CUTOFF: f64 = 1e-300;
const SCAN_MAX_TERMS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundComponents {
    /// `n C2 C_d sqrt(Q) (e / 8Q)^(2Q)`
    pub quadrature_term: f64,
    /// `(C1 / sqrt M)^n exp(C_f sqrt(M) (T-t) (1 + 1/C1))`
    pub mc_term: f64,
    /// `C_y (T-t)^n C_f^n / n!`
    pub picard_term: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    /// `1 + 1/sqrt(M)`
    pub a: f64,
    /// `max(2a, C_phi + C_0 T)`
    pub c1: f64,
    pub c2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremBound {
    /// Bound on `|y(t, x) - E[y_n(t, x)]|`; the sum of the three components.
    pub bias_bound: f64,
    /// Bound on the standard deviation of `y_n(t, x)`:
    /// `(C1 / sqrt M) exp(C_f sqrt(M) (T-t))`.
    pub variance_bound: f64,
    pub components: BoundComponents,
    pub constants: BoundConstants,
    /// Time-quadrature error `epsilon(t)` for the declared `C_d`.
    pub epsilon: f64,
}

/// `C2 = e^(1/3) sqrt(pi) / 2 * sup_(k>=1) C_f^(k-1) T^(2Q+k) / ((2Q+1)...(2Q+k))`.
///
/// The terms first grow while `C_f T > 2Q + k` and then decay factorially,
/// so the scan stops once they fall below `1e-300` past the peak.
pub fn c2_constant(c_f: f64, horizon: f64, q: usize) -> f64 {
    let two_q = 2.0 * q as f64;
    let ln_first = (two_q + 1.0) * horizon.ln() - (two_q + 1.0).ln();
    let mut ln_term = ln_first;
    let mut ln_best = ln_first;
    if c_f > 0.0 {
        let ln_step = (c_f * horizon).ln();
        for k in 2..SCAN_MAX_TERMS {
            ln_term += ln_step - (two_q + k as f64).ln();
            ln_best = ln_best.max(ln_term);
            let past_peak = c_f * horizon < two_q + k as f64;
            if past_peak && ln_term < SCAN_CUTOFF.ln() {
                break;
            }
        }
    }
    let prefactor = (1.0f64 / 3.0).exp() * std::f64::consts::PI.sqrt() / 2.0;
    prefactor * ln_best.exp()
}

/// Time-quadrature error on `[t, T]`; the same formula as the quadrature
/// error bound with derivative bound `C_d`, independent of the depth.
pub fn epsilon(q: usize, t: f64, horizon: f64, c_d: f64) -> Result<f64> {
    quadrature_error_bound(q, t, horizon, c_d)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Evaluates the bias and standard-deviation bounds for `c` at time `t`.
pub fn theorem_bound(p: &BsdeProblem, c: &MlpConfig, t: f64) -> Result<TheoremBound> {
    if p.generator_uses_z() {
        return Err(Error::TheoremNotApplicable(format!(
            "generator of `{}` depends on z",
            p.name()
        )));
    }
    let b = p.bounds();
    let mut missing = Vec::new();
    for (name, v) in [
        ("C_f", b.lipschitz),
        ("C_0", b.generator_at_zero),
        ("C_phi", b.terminal),
        ("C_y", b.solution),
        ("C_d", b.derivative),
    ] {
        if v.is_none() {
            missing.push(name);
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingBounds(format!("{} for `{}`", missing.join(", "), p.name())));
    }
    let (c_f, c_0, c_phi, c_y, c_d) = (
        b.lipschitz.unwrap(),
        b.generator_at_zero.unwrap(),
        b.terminal.unwrap(),
        b.solution.unwrap(),
        b.derivative.unwrap(),
    );
    c.validate()?;
    let horizon = p.horizon();
    if !(t >= 0.0 && t <= horizon) {
        return Err(Error::InvalidTime { t, horizon });
    }
    let n = c.depth;
    let q = c.quad_order;
    let m = c.samples as f64;
    let rem = horizon - t;
    let sqrt_m = m.sqrt();

    let a = 1.0 + 1.0 / sqrt_m;
    let c1 = (2.0 * a).max(c_phi + c_0 * horizon);
    let c2 = c2_constant(c_f, horizon, q);

    let qf = q as f64;
    let quadrature_term =
        n as f64 * c2 * c_d * qf.sqrt() * (std::f64::consts::E / (8.0 * qf)).powf(2.0 * qf);
    let mc_term = (c1 / sqrt_m).powi(n as i32) * (c_f * sqrt_m * rem * (1.0 + 1.0 / c1)).exp();
    let picard_term = c_y * rem.powi(n as i32) * c_f.powi(n as i32) / factorial(n);
    let variance_bound = c1 / sqrt_m * (c_f * sqrt_m * rem).exp();

    Ok(TheoremBound {
        bias_bound: quadrature_term + mc_term + picard_term,
        variance_bound,
        components: BoundComponents {
            quadrature_term,
            mc_term,
            picard_term,
        },
        constants: BoundConstants { a, c1, c2 },
        epsilon: epsilon(q, t, horizon, c_d)?,
    })
}
