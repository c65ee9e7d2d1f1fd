//! BSDE problem definitions, built-in test problems and assumption checks.
//!
//! A problem is the scalar BSDE driven by a `d`-dimensional Brownian motion
//! with terminal value `phi(W_T)` and generator `f(t, y, z)`. When a closed
//! form `u(t, x)` is known it solves `u_t + 0.5 * Laplace(u) + f(t, u, grad u) = 0`
//! with `u(T, .) = phi`, and `y_t = u(t, W_t)`, `z_t = grad u(t, W_t)`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::normal_expectation_rule;
use crate::sampling::{GaussianStream, StreamKey};

pub type TerminalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GeneratorFn = Arc<dyn Fn(f64, f64, &[f64]) -> f64 + Send + Sync>;
pub type ValueFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;

/// Closed-form solution `u(t, x)` and its spatial gradient.
#[derive(Clone)]
pub struct AnalyticSolution {
    value: ValueFn,
    gradient: GradientFn,
}

impl AnalyticSolution {
    pub fn new(value: ValueFn, gradient: GradientFn) -> Self {
        AnalyticSolution { value, gradient }
    }

    pub fn value(&self, t: f64, x: &[f64]) -> f64 {
        (self.value)(t, x)
    }

    pub fn gradient(&self, t: f64, x: &[f64]) -> Vec<f64> {
        (self.gradient)(t, x)
    }
}

/// Constants a problem declares for the error analysis. Each is optional; a
/// missing constant disables the checks and bounds that need it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DeclaredBounds {
    /// Lipschitz constant of `f` in `y` (`C_f`).
    pub lipschitz: Option<f64>,
    /// Bound on `|f(s, 0, 0)|` (`C_0`).
    pub generator_at_zero: Option<f64>,
    /// Bound on `|phi|` (`C_phi`).
    pub terminal: Option<f64>,
    /// Bound on the true solution `|u|` (`C_y`).
    pub solution: Option<f64>,
    /// Bound on all time derivatives of the expected generator along the
    /// Brownian flow (`C_d`).
    pub derivative: Option<f64>,
}

#[derive(Clone)]
pub struct BsdeProblem {
    name: String,
    dim: usize,
    horizon: f64,
    terminal: TerminalFn,
    generator: GeneratorFn,
    generator_uses_z: bool,
    reference: Option<AnalyticSolution>,
    bounds: DeclaredBounds,
}

impl fmt::Debug for BsdeProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BsdeProblem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("horizon", &self.horizon)
            .field("generator_uses_z", &self.generator_uses_z)
            .field("has_reference", &self.reference.is_some())
            .field("bounds", &self.bounds)
            .finish()
    }
}

impl BsdeProblem {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        horizon: f64,
        terminal: TerminalFn,
        generator: GeneratorFn,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidProblem("dimension must be at least 1".into()));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidProblem(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        Ok(BsdeProblem {
            name: name.into(),
            dim,
            horizon,
            terminal,
            generator,
            generator_uses_z: false,
            reference: None,
            bounds: DeclaredBounds::default(),
        })
    }

    /// Marks the generator as depending on `z`.
    pub fn with_z_dependence(mut self, uses_z: bool) -> Self {
        self.generator_uses_z = uses_z;
        self
    }

    pub fn with_reference(mut self, reference: AnalyticSolution) -> Self {
        self.reference = Some(reference);
        self
    }

    pub fn with_bounds(mut self, bounds: DeclaredBounds) -> Self {
        self.bounds = bounds;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn generator_uses_z(&self) -> bool {
        self.generator_uses_z
    }

    pub fn reference(&self) -> Option<&AnalyticSolution> {
        self.reference.as_ref()
    }

    pub fn bounds(&self) -> &DeclaredBounds {
        &self.bounds
    }

    #[inline]
    pub fn terminal(&self, x: &[f64]) -> f64 {
        (self.terminal)(x)
    }

    #[inline]
    pub fn generator(&self, t: f64, y: f64, z: &[f64]) -> f64 {
        (self.generator)(t, y, z)
    }
}

/// Overrides applied to the built-in problems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProblemOptions {
    pub dim: usize,
    pub horizon: f64,
    /// Coefficient of the linear generator `f = alpha * y`.
    pub alpha: f64,
}

impl Default for ProblemOptions {
    fn default() -> Self {
        ProblemOptions {
            dim: 1,
            horizon: 1.0,
            alpha: 0.3,
        }
    }
}

pub const ZERO_GENERATOR: &str = "zero-gen";
pub const LINEAR_Y: &str = "linear-y";
pub const BOUNDED_NONLINEAR: &str = "bounded-nonlinear";
pub const Z_COUPLED: &str = "z-coupled";

/// Names accepted by [`builtin_problem`], with a one-line description.
pub const BUILTIN_PROBLEMS: [(&str, &str); 4] = [
    (ZERO_GENERATOR, "f = 0, phi(x) = cos(sum x); u = exp(-d(T-t)/2) cos(sum x)"),
    (LINEAR_Y, "f = alpha*y, phi(x) = cos(sum x); u = exp((alpha-d/2)(T-t)) cos(sum x)"),
    (BOUNDED_NONLINEAR, "f = sin(y), phi(x) = cos(sum x); no closed form"),
    (Z_COUPLED, "f = sin(y) + cos(sum z)/d, phi(x) = cos(sum x); no closed form"),
];

fn cos_sum() -> TerminalFn {
    Arc::new(|x: &[f64]| x.iter().sum::<f64>().cos())
}

/// `u(t, x) = exp(rate * (T - t)) cos(sum x)`.
fn exponential_cosine(horizon: f64, rate: f64, dim: usize) -> AnalyticSolution {
    AnalyticSolution::new(
        Arc::new(move |t, x| (rate * (horizon - t)).exp() * x.iter().sum::<f64>().cos()),
        Arc::new(move |t, x| {
            let g = -(rate * (horizon - t)).exp() * x.iter().sum::<f64>().sin();
            vec![g; dim]
        }),
    )
}

/// Builds one of the [`BUILTIN_PROBLEMS`].
pub fn builtin_problem(name: &str, opts: &ProblemOptions) -> Result<BsdeProblem> {
    let d = opts.dim;
    let horizon = opts.horizon;
    let half_d = 0.5 * d as f64;
    match name {
        ZERO_GENERATOR => Ok(BsdeProblem::new(
            name,
            d,
            horizon,
            cos_sum(),
            Arc::new(|_, _, _| 0.0),
        )?
        .with_reference(exponential_cosine(horizon, -half_d, d))
        .with_bounds(DeclaredBounds {
            lipschitz: Some(0.0),
            generator_at_zero: Some(0.0),
            terminal: Some(1.0),
            solution: Some(1.0),
            derivative: Some(0.0),
        })),
        LINEAR_Y => {
            let alpha = opts.alpha;
            if !alpha.is_finite() {
                return Err(Error::InvalidProblem(format!("alpha must be finite, got {alpha}")));
            }
            let rate = alpha - half_d;
            let sup_u = (rate * horizon).exp().max(1.0);
            // The expected generator along the flow is alpha * u(...) with
            // k-th time derivative (-alpha)^k times itself, so every order is
            // bounded only when |alpha| <= 1.
            let derivative = (alpha.abs() <= 1.0).then(|| alpha.abs() * sup_u);
            Ok(BsdeProblem::new(
                name,
                d,
                horizon,
                cos_sum(),
                Arc::new(move |_, y, _| alpha * y),
            )?
            .with_reference(exponential_cosine(horizon, rate, d))
            .with_bounds(DeclaredBounds {
                lipschitz: Some(alpha.abs()),
                generator_at_zero: Some(0.0),
                terminal: Some(1.0),
                solution: Some(sup_u),
                derivative,
            }))
        }
        BOUNDED_NONLINEAR => Ok(BsdeProblem::new(
            name,
            d,
            horizon,
            cos_sum(),
            Arc::new(|_, y, _| y.sin()),
        )?
        .with_bounds(DeclaredBounds {
            lipschitz: Some(1.0),
            generator_at_zero: Some(0.0),
            terminal: Some(1.0),
            solution: Some(1.0 + horizon),
            derivative: None,
        })),
        Z_COUPLED => {
            let inv_d = 1.0 / d as f64;
            Ok(BsdeProblem::new(
                name,
                d,
                horizon,
                cos_sum(),
                Arc::new(move |_, y, z| y.sin() + z.iter().sum::<f64>().cos() * inv_d),
            )?
            .with_z_dependence(true)
            .with_bounds(DeclaredBounds {
                lipschitz: Some(1.0),
                generator_at_zero: Some(inv_d),
                terminal: Some(1.0),
                solution: Some(1.0 + (1.0 + inv_d) * horizon),
                derivative: None,
            }))
        }
        other => Err(Error::UnknownProblem(other.to_string())),
    }
}

/// All built-in problems with the given overrides.
pub fn builtin_problems(opts: &ProblemOptions) -> Result<Vec<BsdeProblem>> {
    BUILTIN_PROBLEMS
        .iter()
        .map(|(name, _)| builtin_problem(name, opts))
        .collect()
}

/// Outcome of one assumption check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "detail", rename_all = "lowercase")]
pub enum CheckStatus {
    Satisfied,
    Violated,
    Skipped(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub name: String,
    /// Declared constant (or tolerance) the probes were measured against.
    pub constant: Option<f64>,
    pub probes: usize,
    /// Largest amount by which a probe exceeded the constant; 0 when none did.
    pub max_violation: f64,
    /// Largest raw quantity observed, for reference.
    pub max_observed: f64,
    /// Probe coordinates of the worst violation, check-specific layout.
    pub worst_probe: Option<Vec<f64>>,
    pub status: CheckStatus,
}

impl AssumptionCheck {
    fn skipped(name: &str, reason: impl Into<String>) -> Self {
        AssumptionCheck {
            name: name.to_string(),
            constant: None,
            probes: 0,
            max_violation: 0.0,
            max_observed: 0.0,
            worst_probe: None,
            status: CheckStatus::Skipped(reason.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub problem: String,
    pub checks: Vec<AssumptionCheck>,
}

impl AssumptionReport {
    pub fn check(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn all_satisfied(&self) -> bool {
        self.checks
            .iter()
            .all(|c| !matches!(c.status, CheckStatus::Violated))
    }
}

pub const CHECK_TERMINAL_BOUND: &str = "terminal-bound";
pub const CHECK_LIPSCHITZ: &str = "generator-lipschitz";
pub const CHECK_GENERATOR_AT_ZERO: &str = "generator-at-zero";
pub const CHECK_SOLUTION_BOUND: &str = "solution-bound";
pub const CHECK_DERIVATIVE_BOUND: &str = "derivative-bound";
pub const CHECK_TERMINAL_MATCH: &str = "reference-terminal-match";
pub const CHECK_PDE_RESIDUAL: &str = "reference-pde-residual";

/// Tolerance for `|u(T, x) - phi(x)|`.
pub const TERMINAL_MATCH_TOL: f64 = 1e-10;
/// Tolerance for the finite-difference PDE residual of a reference solution.
pub const PDE_RESIDUAL_TOL: f64 = 1e-4;
const PDE_FD_STEP: f64 = 1e-4;

/// Running maximum of `observed - limit` over probes.
struct Probe {
    name: &'static str,
    limit: f64,
    probes: usize,
    max_violation: f64,
    max_observed: f64,
    worst: Option<Vec<f64>>,
}

impl Probe {
    fn new(name: &'static str, limit: f64) -> Self {
        Probe {
            name,
            limit,
            probes: 0,
            max_violation: 0.0,
            max_observed: 0.0,
            worst: None,
        }
    }

    fn record(&mut self, observed: f64, scale: f64, at: impl FnOnce() -> Vec<f64>) {
        self.probes += 1;
        self.max_observed = self.max_observed.max(observed);
        let allowed = self.limit * scale;
        let excess = observed - allowed;
        // Rounding in `observed` must not register as a violation.
        let slack = 1e-12 * (1.0 + allowed.abs());
        if (excess > slack && excess > self.max_violation) || observed.is_nan() {
            self.max_violation = if observed.is_nan() { f64::INFINITY } else { excess };
            self.worst = Some(at());
        }
    }

    fn finish(self) -> AssumptionCheck {
        let status = if self.max_violation > 0.0 {
            CheckStatus::Violated
        } else {
            CheckStatus::Satisfied
        };
        AssumptionCheck {
            name: self.name.to_string(),
            constant: Some(self.limit),
            probes: self.probes,
            max_violation: self.max_violation,
            max_observed: self.max_observed,
            worst_probe: self.worst,
            status,
        }
    }
}

fn normal_vec(stream: &mut GaussianStream, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| scale * stream.standard_normal()).collect()
}

/// `|u(T, x) - phi(x)|` maximised over `samples` random points, if a reference exists.
pub fn terminal_mismatch(p: &BsdeProblem, samples: usize, seed: u64) -> Option<f64> {
    let reference = p.reference()?;
    let mut stream = GaussianStream::new(&StreamKey::root(seed));
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let x = normal_vec(&mut stream, p.dim(), 2.0);
        worst = worst.max((reference.value(p.horizon(), &x) - p.terminal(&x)).abs());
    }
    Some(worst)
}

/// Residual `u_t + 0.5 * Laplace(u) + f(t, u, grad u)` at `(t, x)` via central
/// differences with step `1e-4`. `t` must leave room for the step inside `[0, T]`.
pub fn pde_residual(p: &BsdeProblem, t: f64, x: &[f64]) -> Option<f64> {
    let reference = p.reference()?;
    let h = PDE_FD_STEP;
    let u = reference.value(t, x);
    let u_t = (reference.value(t + h, x) - reference.value(t - h, x)) / (2.0 * h);
    let mut shifted = x.to_vec();
    let mut laplacian = 0.0;
    for i in 0..x.len() {
        shifted[i] = x[i] + h;
        let up = reference.value(t, &shifted);
        shifted[i] = x[i] - h;
        let down = reference.value(t, &shifted);
        shifted[i] = x[i];
        laplacian += (up - 2.0 * u + down) / (h * h);
    }
    let grad = reference.gradient(t, x);
    Some(u_t + 0.5 * laplacian + p.generator(t, u, &grad))
}

/// Largest `|pde_residual|` over random interior points.
pub fn max_pde_residual(p: &BsdeProblem, samples: usize, seed: u64) -> Option<f64> {
    p.reference()?;
    let mut stream = GaussianStream::new(&StreamKey::root(seed).child(0, 0, 1));
    let h = PDE_FD_STEP;
    let span = p.horizon() - 4.0 * h;
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let t = 2.0 * h + span * stream.uniform();
        let x = normal_vec(&mut stream, p.dim(), 1.0);
        worst = worst.max(pde_residual(p, t, &x)?.abs());
    }
    Some(worst)
}

/// Probes every declared constant with `samples` random points.
///
/// Missing constants and checks that cannot run on this problem are reported
/// as skipped entries rather than failures.
pub fn validate_assumptions(p: &BsdeProblem, samples: usize, seed: u64) -> AssumptionReport {
    let bounds = *p.bounds();
    let d = p.dim();
    let horizon = p.horizon();
    let root = StreamKey::root(seed);
    let mut checks = Vec::new();

    match bounds.terminal {
        Some(c_phi) => {
            let mut stream = GaussianStream::new(&root.child(0, 0, 0));
            let mut probe = Probe::new(CHECK_TERMINAL_BOUND, c_phi);
            for _ in 0..samples {
                let x = normal_vec(&mut stream, d, 2.0);
                let v = p.terminal(&x).abs();
                probe.record(v, 1.0, || x.clone());
            }
            checks.push(probe.finish());
        }
        None => checks.push(AssumptionCheck::skipped(CHECK_TERMINAL_BOUND, "C_phi not declared")),
    }

    match bounds.lipschitz {
        Some(c_f) => {
            let mut stream = GaussianStream::new(&root.child(0, 0, 1));
            let mut probe = Probe::new(CHECK_LIPSCHITZ, c_f);
            for _ in 0..samples {
                let s = horizon * stream.uniform();
                let y1 = 3.0 * stream.standard_normal();
                let y2 = 3.0 * stream.standard_normal();
                let z = normal_vec(&mut stream, d, 1.0);
                let gap = (y1 - y2).abs();
                let diff = (p.generator(s, y1, &z) - p.generator(s, y2, &z)).abs();
                probe.record(diff, gap, || vec![s, y1, y2]);
            }
            checks.push(probe.finish());
        }
        None => checks.push(AssumptionCheck::skipped(CHECK_LIPSCHITZ, "C_f not declared")),
    }

    match bounds.generator_at_zero {
        Some(c0) => {
            let mut stream = GaussianStream::new(&root.child(0, 0, 2));
            let zeros = vec![0.0; d];
            let mut probe = Probe::new(CHECK_GENERATOR_AT_ZERO, c0);
            for _ in 0..samples {
                let s = horizon * stream.uniform();
                probe.record(p.generator(s, 0.0, &zeros).abs(), 1.0, || vec![s]);
            }
            checks.push(probe.finish());
        }
        None => checks.push(AssumptionCheck::skipped(CHECK_GENERATOR_AT_ZERO, "C_0 not declared")),
    }

    match (bounds.solution, p.reference()) {
        (Some(c_y), Some(reference)) => {
            let mut stream = GaussianStream::new(&root.child(0, 0, 3));
            let mut probe = Probe::new(CHECK_SOLUTION_BOUND, c_y);
            for _ in 0..samples {
                let t = horizon * stream.uniform();
                let x = normal_vec(&mut stream, d, 2.0);
                let v = reference.value(t, &x).abs();
                probe.record(v, 1.0, || {
                    let mut at = vec![t];
                    at.extend_from_slice(&x);
                    at
                });
            }
            checks.push(probe.finish());
        }
        (None, _) => checks.push(AssumptionCheck::skipped(CHECK_SOLUTION_BOUND, "C_y not declared")),
        (Some(_), None) => checks.push(AssumptionCheck::skipped(
            CHECK_SOLUTION_BOUND,
            "no analytic solution to probe",
        )),
    }

    checks.push(derivative_check(p, samples, &root));

    if let (Some(mismatch), Some(residual)) = (
        terminal_mismatch(p, samples, seed ^ 0x5eed),
        max_pde_residual(p, samples, seed ^ 0xfeed),
    ) {
        let mut t = Probe::new(CHECK_TERMINAL_MATCH, TERMINAL_MATCH_TOL);
        t.record(mismatch, 1.0, Vec::new);
        t.probes = samples;
        checks.push(t.finish());
        let mut r = Probe::new(CHECK_PDE_RESIDUAL, PDE_RESIDUAL_TOL);
        r.record(residual, 1.0, Vec::new);
        r.probes = samples;
        checks.push(r.finish());
    }

    AssumptionReport {
        problem: p.name().to_string(),
        checks,
    }
}

const DERIVATIVE_ORDERS: usize = 4;

/// Finite-difference check of the derivative bound on
/// `F_t(s) = E[f(s, u(s, x + W_(s-t)))]` and `G_t(s) = E[f(...) W_(s-t) / (s-t)]`
/// for orders `0..=4`. Needs a reference solution, `d = 1` and a generator
/// that ignores `z`.
fn derivative_check(p: &BsdeProblem, samples: usize, root: &StreamKey) -> AssumptionCheck {
    let Some(c_d) = p.bounds().derivative else {
        return AssumptionCheck::skipped(CHECK_DERIVATIVE_BOUND, "C_d not declared");
    };
    let Some(reference) = p.reference() else {
        return AssumptionCheck::skipped(CHECK_DERIVATIVE_BOUND, "no analytic solution");
    };
    if p.dim() != 1 {
        return AssumptionCheck::skipped(
            CHECK_DERIVATIVE_BOUND,
            "finite-difference check implemented for d = 1 only",
        );
    }
    if p.generator_uses_z() {
        return AssumptionCheck::skipped(CHECK_DERIVATIVE_BOUND, "generator depends on z");
    }
    let rule = match normal_expectation_rule(10, 20, 8.0) {
        Ok(r) => r,
        Err(e) => return AssumptionCheck::skipped(CHECK_DERIVATIVE_BOUND, e.to_string()),
    };
    let horizon = p.horizon();
    let flows = |t: f64, x: f64, s: f64| -> (f64, f64) {
        let sigma = (s - t).sqrt();
        let zeros = [0.0];
        let mut f_val = 0.0;
        let mut g_val = 0.0;
        for &(xi, w) in &rule {
            let point = [x + sigma * xi];
            let val = p.generator(s, reference.value(s, &point), &zeros);
            f_val += w * val;
            g_val += w * val * xi / sigma;
        }
        (f_val, g_val)
    };
    // Central-difference stencils for orders 0..=4 (offsets -2..=2).
    const STENCILS: [[f64; 5]; DERIVATIVE_ORDERS + 1] = [
        [0.0, 0.0, 1.0, 0.0, 0.0],
        [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0],
        [-1.0 / 12.0, 4.0 / 3.0, -5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0],
        [-0.5, 1.0, 0.0, -1.0, 0.5],
        [1.0, -4.0, 6.0, -4.0, 1.0],
    ];
    let h = 0.02 * horizon;
    let mut stream = GaussianStream::new(&root.child(0, 0, 4));
    let mut probe = Probe::new(CHECK_DERIVATIVE_BOUND, c_d);
    for _ in 0..samples.min(2000) {
        let t = 0.5 * horizon * stream.uniform();
        let lo = t + 0.25 * (horizon - t) + 2.0 * h;
        let hi = horizon - 2.0 * h;
        if lo >= hi {
            continue;
        }
        let s = lo + (hi - lo) * stream.uniform();
        let x = 2.0 * stream.standard_normal();
        let values: Vec<(f64, f64)> = (-2..=2).map(|k| flows(t, x, s + k as f64 * h)).collect();
        for (order, stencil) in STENCILS.iter().enumerate() {
            let scale = h.powi(order as i32);
            let df: f64 = stencil.iter().zip(&values).map(|(c, v)| c * v.0).sum::<f64>() / scale;
            let dg: f64 = stencil.iter().zip(&values).map(|(c, v)| c * v.1).sum::<f64>() / scale;
            probe.record(df.abs().max(dg.abs()), 1.0, || vec![t, x, s, order as f64]);
        }
    }
    probe.finish()
}
