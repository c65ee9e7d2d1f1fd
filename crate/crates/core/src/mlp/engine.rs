//! Recursive evaluation of both schemes.
//!
//! Every frame derives its randomness from child keys of its own key, so a
//! value depends only on `(problem, parameters, t, x, key)`. Fan-outs go
//! through [`map_indexed`](crate::parallel::map_indexed) and are reduced in
//! index order.

use super::cost::CostCounters;
use super::{SLOT_BASE, SLOT_COPY, SLOT_LEVEL0, SLOT_PATH, SLOT_POINT, SLOT_TERMINAL};
use crate::error::{Error, Result};
use crate::parallel::{try_map_indexed, Execution};
use crate::problem::BsdeProblem;
use crate::quadrature::{build_rule, QuadratureRule};
use crate::sampling::{GaussianStream, StreamKey};

/// Smallest admissible kernel denominator `s - t`.
pub(crate) const MIN_KERNEL_GAP: f64 = 1e-12;

#[derive(Debug, Clone)]
pub(crate) struct Value {
    pub y: f64,
    pub z: Option<Vec<f64>>,
    /// Everything except the terminal Monte-Carlo mean.
    pub generator_part: f64,
    pub cost: CostCounters,
}

impl Value {
    fn zero(dim: usize, need_z: bool) -> Value {
        Value {
            y: 0.0,
            z: need_z.then(|| vec![0.0; dim]),
            generator_part: 0.0,
            cost: CostCounters::default(),
        }
    }
}

pub(crate) struct Engine<'a> {
    problem: &'a BsdeProblem,
    samples: usize,
    reference: QuadratureRule,
    reuse: bool,
    strict: bool,
    exec: Execution,
}

/// Contribution of one sampled path to a difference term.
struct PathSample {
    y: f64,
    z: Option<Vec<f64>>,
    /// `W_(T-t)` along the same path, drawn only for the literal z form.
    terminal: Option<Vec<f64>>,
    cost: CostCounters,
}

fn guard_gap(gap: f64) -> Result<()> {
    if gap > MIN_KERNEL_GAP {
        Ok(())
    } else {
        Err(Error::SingularKernel(gap))
    }
}

fn add_scaled(acc: &mut [f64], v: &[f64], scale: f64) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += scale * b;
    }
}

impl<'a> Engine<'a> {
    pub fn new(
        problem: &'a BsdeProblem,
        samples: usize,
        quad_order: usize,
        reuse: bool,
        strict: bool,
        exec: Execution,
    ) -> Result<Self> {
        Ok(Engine {
            problem,
            samples,
            reference: build_rule(quad_order, -1.0, 1.0)?,
            reuse,
            strict,
            exec,
        })
    }

    fn dim(&self) -> usize {
        self.problem.dim()
    }

    /// Rule on `[t, T]` and the offsets `tau_j = t_j - t`, all checked positive.
    fn frame_rule(&self, t: f64) -> Result<(QuadratureRule, Vec<f64>)> {
        let horizon = self.problem.horizon();
        guard_gap(horizon - t)?;
        let rule = self.reference.remap(t, horizon)?;
        let taus: Vec<f64> = rule.nodes().iter().map(|&s| s - t).collect();
        for &tau in &taus {
            guard_gap(tau)?;
        }
        Ok((rule, taus))
    }

    fn generator(&self, s: f64, v: &Value, zeros: &[f64]) -> f64 {
        self.problem.generator(s, v.y, v.z.as_deref().unwrap_or(zeros))
    }

    /// Depth-one estimate shared by both schemes. One stream per frame:
    /// `W_(T-t)` for each sample first, then (for z) the path at the nodes
    /// by Brownian bridge, so `y` does not depend on whether z is requested.
    fn base(&self, t: f64, x: &[f64], key: &StreamKey, need_z: bool) -> Result<Value> {
        let d = self.dim();
        let m = self.samples;
        let dt = self.problem.horizon() - t;
        let (rule, taus) = self.frame_rule(t)?;
        let q = taus.len();
        let mut stream = GaussianStream::new(&key.child(1, 0, SLOT_BASE));
        let mut cost = CostCounters::default();

        let mut w = vec![0.0; d];
        let mut point = vec![0.0; d];
        let mut bridge = vec![0.0; d];
        let mut phi_sum = 0.0;
        let phi_x = if need_z {
            cost.terminal_evals += 1;
            self.problem.terminal(x)
        } else {
            0.0
        };
        let mut z_terminal = vec![0.0; if need_z { d } else { 0 }];
        let mut kernels = vec![0.0; if need_z { q * d } else { 0 }];

        // All terminal increments come first in the stream; they are kept
        // only when the bridge pass below needs them.
        let mut terminals = Vec::with_capacity(if need_z { m * d } else { 0 });
        for _ in 0..m {
            stream.fill_increment(dt, &mut w);
            for k in 0..d {
                point[k] = x[k] + w[k];
            }
            let v = self.problem.terminal(&point);
            phi_sum += v;
            if need_z {
                add_scaled(&mut z_terminal, &w, (v - phi_x) / dt);
                terminals.extend_from_slice(&w);
            }
        }
        for w in terminals.chunks_exact(d) {
            bridge.iter_mut().for_each(|b| *b = 0.0);
            let mut prev_tau = 0.0;
            for (j, &tau) in taus.iter().enumerate() {
                let span = dt - prev_tau;
                let frac = (tau - prev_tau) / span;
                let sd = ((tau - prev_tau) * (dt - tau) / span).sqrt();
                let row = &mut kernels[j * d..(j + 1) * d];
                for k in 0..d {
                    bridge[k] += frac * (w[k] - bridge[k]) + sd * stream.standard_normal();
                    row[k] += bridge[k] / tau;
                }
                prev_tau = tau;
            }
        }
        cost.terminal_evals += m as u64;
        cost.gaussian_draws += stream.draws();

        let zeros = vec![0.0; d];
        let mut generator_part = 0.0;
        let mut f_nodes = Vec::with_capacity(q);
        for (s, weight) in rule.iter() {
            let f = self.problem.generator(s, 0.0, &zeros);
            f_nodes.push(f);
            generator_part += weight * f;
        }
        cost.generator_evals += q as u64;

        let inv_m = 1.0 / m as f64;
        let z = need_z.then(|| {
            let mut z: Vec<f64> = z_terminal.iter().map(|v| v * inv_m).collect();
            for (j, (&f, &weight)) in f_nodes.iter().zip(rule.weights()).enumerate() {
                add_scaled(&mut z, &kernels[j * d..(j + 1) * d], weight * f * inv_m);
            }
            z
        });
        Ok(Value {
            y: phi_sum * inv_m + generator_part,
            z,
            generator_part,
            cost,
        })
    }

    /// Brownian path at the offsets `taus` (and optionally at `T - t`),
    /// flattened row-major as `taus.len()` rows of `d`.
    fn sample_path(
        &self,
        stream: &mut GaussianStream,
        taus: &[f64],
        terminal_dt: Option<f64>,
    ) -> (Vec<f64>, Option<Vec<f64>>) {
        let d = self.dim();
        let mut path = vec![0.0; taus.len() * d];
        let mut inc = vec![0.0; d];
        let mut prev_tau = 0.0;
        for (j, &tau) in taus.iter().enumerate() {
            stream.fill_increment(tau - prev_tau, &mut inc);
            for k in 0..d {
                let before = if j == 0 { 0.0 } else { path[(j - 1) * d + k] };
                path[j * d + k] = before + inc[k];
            }
            prev_tau = tau;
        }
        let terminal = terminal_dt.map(|dt| {
            let last = &path[(taus.len() - 1) * d..];
            stream.fill_increment(dt - prev_tau, &mut inc);
            last.iter().zip(&inc).map(|(a, b)| a + b).collect()
        });
        (path, terminal)
    }

    // ---------------------------------------------------------------- modified

    pub fn modified(&self, depth: usize, t: f64, x: &[f64], key: &StreamKey, need_z: bool) -> Result<Value> {
        Ok(self.modified_frame(depth, t, x, key, need_z)?.0)
    }

    /// Returns `y_depth(t, x)` together with `y_(depth-1)(t, x)`: the latter
    /// is the first of the i.i.d. copies the former averages, so it comes at
    /// no extra cost. Its own cost is already included in the upper value.
    pub fn modified_frame(
        &self,
        depth: usize,
        t: f64,
        x: &[f64],
        key: &StreamKey,
        need_z: bool,
    ) -> Result<(Value, Value)> {
        let d = self.dim();
        match depth {
            0 => return Ok((Value::zero(d, need_z), Value::zero(d, need_z))),
            1 => return Ok((self.base(t, x, key, need_z)?, Value::zero(d, need_z))),
            _ => {}
        }
        let level = depth as u32;
        let m = self.samples;
        let horizon = self.problem.horizon();
        let (rule, taus) = self.frame_rule(t)?;

        let copies = try_map_indexed(self.exec, m, |i| {
            self.modified(depth - 1, t, x, &key.child(level, i as u64, SLOT_COPY), need_z)
        })?;
        let strict_z = self.strict && need_z;
        let samples = try_map_indexed(self.exec, m, |i| {
            self.modified_path(depth, i, &rule, &taus, x, key, need_z, strict_z.then_some(horizon - t))
        })?;

        let inv_m = 1.0 / m as f64;
        let mut cost = CostCounters::default();
        let mut lead = 0.0;
        let mut lead_part = 0.0;
        for c in &copies {
            lead += c.y;
            lead_part += c.generator_part;
            cost += c.cost;
        }
        let mut diff = 0.0;
        for s in &samples {
            diff += s.y;
            cost += s.cost;
        }
        let z = need_z.then(|| {
            let mut z = vec![0.0; d];
            for (c, s) in copies.iter().zip(&samples) {
                let cz = c.z.as_deref().expect("copies carry z when requested");
                match &s.terminal {
                    // Literal form: z^i (t, x) * W^(i)_(T-t) / (T - t), componentwise.
                    Some(w) => {
                        let dt = horizon - t;
                        for k in 0..d {
                            z[k] += cz[k] * w[k] / dt;
                        }
                    }
                    None => add_scaled(&mut z, cz, 1.0),
                }
            }
            for s in &samples {
                add_scaled(&mut z, s.z.as_deref().expect("difference z"), 1.0);
            }
            z.iter_mut().for_each(|v| *v *= inv_m);
            z
        });
        let value = Value {
            y: lead * inv_m + diff * inv_m,
            z,
            generator_part: lead_part * inv_m + diff * inv_m,
            cost,
        };
        let first = copies.into_iter().next().expect("at least one copy");
        Ok((value, first))
    }

    /// Difference term `sum_j w_j [f(y_(n-1)) - f(y_(n-2))]` along path `i`.
    #[allow(clippy::too_many_arguments)]
    fn modified_path(
        &self,
        depth: usize,
        i: usize,
        rule: &QuadratureRule,
        taus: &[f64],
        x: &[f64],
        key: &StreamKey,
        need_z: bool,
        terminal_dt: Option<f64>,
    ) -> Result<PathSample> {
        let d = self.dim();
        let level = depth as u32;
        let uses_z = self.problem.generator_uses_z();
        let mut stream = GaussianStream::new(&key.child(level, i as u64, SLOT_PATH));
        let (path, terminal) = self.sample_path(&mut stream, taus, terminal_dt);
        let mut cost = CostCounters {
            gaussian_draws: stream.draws(),
            ..CostCounters::default()
        };
        let zeros = vec![0.0; d];
        let mut point = vec![0.0; d];
        let mut y = 0.0;
        let mut z = need_z.then(|| vec![0.0; d]);
        for (j, ((s, weight), &tau)) in rule.iter().zip(taus).enumerate() {
            let w = &path[j * d..(j + 1) * d];
            for k in 0..d {
                point[k] = x[k] + w[k];
            }
            let pkey = key.child(level, i as u64, SLOT_POINT + j as u32);
            let (hi, lo) = if self.reuse {
                let (hi, lo) = self.modified_frame(depth - 1, s, &point, &pkey, uses_z)?;
                cost += hi.cost;
                // Reusing y_0 = 0 saves nothing.
                if depth >= 3 {
                    cost.cache_hits += 1;
                }
                (hi, lo)
            } else {
                let hi = self.modified(depth - 1, s, &point, &pkey, uses_z)?;
                let lo_key = pkey.child(level - 1, 0, SLOT_COPY);
                let lo = self.modified(depth - 2, s, &point, &lo_key, uses_z)?;
                cost += hi.cost + lo.cost;
                (hi, lo)
            };
            let fd = self.generator(s, &hi, &zeros) - self.generator(s, &lo, &zeros);
            cost.generator_evals += 2;
            y += weight * fd;
            if let Some(z) = z.as_mut() {
                add_scaled(z, w, weight * fd / tau);
            }
        }
        Ok(PathSample { y, z, terminal, cost })
    }

    // ---------------------------------------------------------------- original

    pub fn original(&self, depth: usize, t: f64, x: &[f64], key: &StreamKey, need_z: bool) -> Result<Value> {
        let d = self.dim();
        match depth {
            0 => return Ok(Value::zero(d, need_z)),
            1 => return self.base(t, x, key, need_z),
            _ => {}
        }
        let m = self.samples as u64;
        let horizon = self.problem.horizon();
        let dt = horizon - t;
        let (rule, taus) = self.frame_rule(t)?;
        let mut cost = CostCounters::default();
        let zeros = vec![0.0; d];

        // Terminal mean over M^n samples, with the control variate for z.
        let n_terminal = m.pow(depth as u32);
        let mut stream = GaussianStream::new(&key.child(depth as u32, 0, SLOT_TERMINAL));
        let mut w = vec![0.0; d];
        let mut point = vec![0.0; d];
        let phi_x = if need_z {
            cost.terminal_evals += 1;
            self.problem.terminal(x)
        } else {
            0.0
        };
        let mut phi_sum = 0.0;
        let mut z = need_z.then(|| vec![0.0; d]);
        for _ in 0..n_terminal {
            stream.fill_increment(dt, &mut w);
            for k in 0..d {
                point[k] = x[k] + w[k];
            }
            let v = self.problem.terminal(&point);
            phi_sum += v;
            if let Some(z) = z.as_mut() {
                add_scaled(z, &w, (v - phi_x) / dt / n_terminal as f64);
            }
        }
        cost.terminal_evals += n_terminal;
        cost.gaussian_draws += stream.draws();

        // Level 0: f(t_j, 0, 0) is deterministic.
        let mut generator_part = 0.0;
        let mut f_nodes = Vec::with_capacity(taus.len());
        for (s, weight) in rule.iter() {
            let f = self.problem.generator(s, 0.0, &zeros);
            f_nodes.push(f);
            generator_part += weight * f;
        }
        cost.generator_evals += taus.len() as u64;
        if let Some(z) = z.as_mut() {
            let mut stream = GaussianStream::new(&key.child(depth as u32, 0, SLOT_LEVEL0));
            let scale = 1.0 / n_terminal as f64;
            for _ in 0..n_terminal {
                let (path, _) = self.sample_path(&mut stream, &taus, None);
                for (j, (&f, &weight)) in f_nodes.iter().zip(rule.weights()).enumerate() {
                    add_scaled(z, &path[j * d..(j + 1) * d], weight * f / taus[j] * scale);
                }
            }
            cost.gaussian_draws += stream.draws();
        }

        for l in 1..depth {
            let count = m.pow((depth - l) as u32);
            let samples = try_map_indexed(self.exec, count as usize, |i| {
                self.original_path(l, i, &rule, &taus, x, key, need_z)
            })?;
            let inv = 1.0 / count as f64;
            let mut level_sum = 0.0;
            for s in &samples {
                level_sum += s.y;
                cost += s.cost;
            }
            generator_part += level_sum * inv;
            if let Some(z) = z.as_mut() {
                for s in &samples {
                    add_scaled(z, s.z.as_deref().expect("difference z"), inv);
                }
            }
        }

        Ok(Value {
            y: phi_sum / n_terminal as f64 + generator_part,
            z,
            generator_part,
            cost,
        })
    }

    /// Level-`l` difference along path `i`: independent estimates of `y_l`
    /// and `y_(l-1)` at each node.
    #[allow(clippy::too_many_arguments)]
    fn original_path(
        &self,
        l: usize,
        i: usize,
        rule: &QuadratureRule,
        taus: &[f64],
        x: &[f64],
        key: &StreamKey,
        need_z: bool,
    ) -> Result<PathSample> {
        let d = self.dim();
        let level = l as u32;
        let uses_z = self.problem.generator_uses_z();
        let mut stream = GaussianStream::new(&key.child(level, i as u64, SLOT_PATH));
        let (path, _) = self.sample_path(&mut stream, taus, None);
        let mut cost = CostCounters {
            gaussian_draws: stream.draws(),
            ..CostCounters::default()
        };
        let zeros = vec![0.0; d];
        let mut point = vec![0.0; d];
        let mut y = 0.0;
        let mut z = need_z.then(|| vec![0.0; d]);
        for (j, ((s, weight), &tau)) in rule.iter().zip(taus).enumerate() {
            let w = &path[j * d..(j + 1) * d];
            for k in 0..d {
                point[k] = x[k] + w[k];
            }
            let slot = SLOT_POINT + 2 * j as u32;
            let hi = self.original(l, s, &point, &key.child(level, i as u64, slot), uses_z)?;
            let lo = self.original(l - 1, s, &point, &key.child(level, i as u64, slot + 1), uses_z)?;
            cost += hi.cost + lo.cost;
            let fd = self.generator(s, &hi, &zeros) - self.generator(s, &lo, &zeros);
            cost.generator_evals += 2;
            y += weight * fd;
            if let Some(z) = z.as_mut() {
                add_scaled(z, w, weight * fd / tau);
            }
        }
        Ok(PathSample {
            y,
            z,
            terminal: None,
            cost,
        })
    }
}
