//! Gauss–Legendre quadrature on arbitrary intervals.
//!
//! Nodes are the roots of the Legendre polynomial `P_q`, found by Newton
//! iteration from Chebyshev-type initial guesses. Weights use the derivative
//! identity `w = 2 / ((1 - x^2) P_q'(x)^2)`, which agrees with integrating the
//! Lagrange basis polynomials over `[-1, 1]`.

use crate::error::{Error, Result};

/// Largest supported number of nodes.
pub const MAX_ORDER: usize = 64;

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 100;

/// A `Q`-point Gauss–Legendre rule mapped onto `[a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    order: usize,
    a: f64,
    b: f64,
    reference_nodes: Vec<f64>,
    reference_weights: Vec<f64>,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    /// Nodes in `(a, b)`, strictly increasing.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Legendre roots on `[-1, 1]` the nodes were mapped from.
    pub fn reference_nodes(&self) -> &[f64] {
        &self.reference_nodes
    }

    /// The same rule mapped onto `[a, b]`, without re-solving for the roots.
    /// Gives bit-identical results to `build_rule(self.order(), a, b)`.
    pub fn remap(&self, a: f64, b: f64) -> Result<QuadratureRule> {
        map_rule(self.reference_nodes.clone(), self.reference_weights.clone(), a, b)
    }

    /// Iterates over `(node, weight)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Evaluates `(P_q(x), P_q'(x))` with the three-term recurrence.
pub(crate) fn legendre(q: usize, x: f64) -> (f64, f64) {
    if q == 0 {
        return (1.0, 0.0);
    }
    let mut prev = 1.0;
    let mut cur = x;
    for k in 1..q {
        let k = k as f64;
        let next = ((2.0 * k + 1.0) * x * cur - k * prev) / (k + 1.0);
        prev = cur;
        cur = next;
    }
    // Valid away from x = +-1, which never holds at a root.
    let deriv = q as f64 * (x * cur - prev) / (x * x - 1.0);
    (cur, deriv)
}

fn check_order(q: usize) -> Result<()> {
    if q == 0 || q > MAX_ORDER {
        return Err(Error::InvalidOrder(q));
    }
    Ok(())
}

/// Roots and reference weights on `[-1, 1]`, ascending.
fn reference_rule(q: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    check_order(q)?;
    let mut roots = vec![0.0; q];
    let mut weights = vec![0.0; q];
    let qf = q as f64;
    // Only the non-negative half is iterated; the rest follows by symmetry.
    for j in 1..=q.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (j as f64 - 0.25) / (qf + 0.5)).cos();
        let mut iter = 0;
        loop {
            let (p, dp) = legendre(q, x);
            let step = p / dp;
            x -= step;
            iter += 1;
            if step.abs() < NEWTON_TOL || iter >= NEWTON_MAX_ITER {
                break;
            }
        }
        if q % 2 == 1 && j == q.div_ceil(2) {
            x = 0.0;
        }
        let (_, dp) = legendre(q, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // The guess for index j approximates the j-th largest root.
        roots[j - 1] = -x;
        roots[q - j] = x;
        weights[j - 1] = w;
        weights[q - j] = w;
    }
    Ok((roots, weights))
}

/// Roots of the degree-`q` Legendre polynomial, sorted ascending.
pub fn legendre_roots(q: usize) -> Result<Vec<f64>> {
    reference_rule(q).map(|(roots, _)| roots)
}

/// Builds the `q`-point rule on `[a, b]`.
pub fn build_rule(q: usize, a: f64, b: f64) -> Result<QuadratureRule> {
    check_interval(a, b)?;
    let (reference_nodes, reference_weights) = reference_rule(q)?;
    map_rule(reference_nodes, reference_weights, a, b)
}

fn check_interval(a: f64, b: f64) -> Result<()> {
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::DegenerateInterval { a, b });
    }
    Ok(())
}

fn map_rule(
    reference_nodes: Vec<f64>,
    reference_weights: Vec<f64>,
    a: f64,
    b: f64,
) -> Result<QuadratureRule> {
    check_interval(a, b)?;
    let half = 0.5 * (b - a);
    let nodes = reference_nodes
        .iter()
        .map(|&c| (c * (b - a) + (a + b)) / 2.0)
        .collect();
    let weights = reference_weights.iter().map(|&w| w * half).collect();
    Ok(QuadratureRule {
        order: reference_nodes.len(),
        a,
        b,
        reference_nodes,
        reference_weights,
        nodes,
        weights,
    })
}

/// Applies the rule: `sum_j w_j g(t_j)`.
pub fn integrate<G>(rule: &QuadratureRule, mut g: G) -> Result<f64>
where
    G: FnMut(f64) -> f64,
{
    let mut sum = 0.0;
    for (t, w) in rule.iter() {
        let v = g(t);
        if !v.is_finite() {
            return Err(Error::NonFinite {
                context: "quadrature integrand",
                value: v,
            });
        }
        sum += w * v;
    }
    Ok(sum)
}

/// Worst-case error of the `q`-point rule on `[a, b]` for an integrand whose
/// `2q`-th derivative is bounded by `deriv_bound`:
/// `[q!]^4 (b-a)^(2q+1) / ((2q+1) [(2q)!]^3) * deriv_bound`.
pub fn quadrature_error_bound(q: usize, a: f64, b: f64, deriv_bound: f64) -> Result<f64> {
    if q == 0 {
        return Err(Error::InvalidOrder(q));
    }
    if !(a <= b) {
        return Err(Error::DegenerateInterval { a, b });
    }
    if !(deriv_bound >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "derivative bound must be non-negative, got {deriv_bound}"
        )));
    }
    if a == b || deriv_bound == 0.0 {
        return Ok(0.0);
    }
    // [q!]^4 / [(2q)!]^3 accumulated as a product of ratios, which stays in
    // range for every supported order.
    let mut ratio = 1.0_f64;
    for k in 1..=q {
        let kf = k as f64;
        let pair = (2.0 * kf) * (2.0 * kf - 1.0);
        ratio *= kf.powi(4) / (pair * pair * pair);
    }
    let exponent = (2 * q + 1) as i32;
    let width = b - a;
    let power = width.powi(exponent);
    let denom = (2 * q + 1) as f64;
    if power.is_finite() && power > 0.0 {
        Ok(ratio * power / denom * deriv_bound)
    } else {
        let ln = ratio.ln() + exponent as f64 * width.ln() - denom.ln() + deriv_bound.ln();
        Ok(ln.exp())
    }
}

/// Nodes and weights for `E[g(Z)]`, `Z ~ N(0, 1)`: composite Gauss–Legendre
/// on `[-half_width, half_width]` with the normal density folded into the
/// weights. The truncated tail mass is `erfc(half_width / sqrt 2)`.
pub fn normal_expectation_rule(
    panels: usize,
    order: usize,
    half_width: f64,
) -> Result<Vec<(f64, f64)>> {
    if panels == 0 {
        return Err(Error::InvalidConfig("at least one panel required".into()));
    }
    let step = 2.0 * half_width / panels as f64;
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let mut out = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let a = -half_width + p as f64 * step;
        let rule = build_rule(order, a, a + step)?;
        out.extend(
            rule.iter()
                .map(|(x, w)| (x, w * norm * (-0.5 * x * x).exp())),
        );
    }
    Ok(out)
}
