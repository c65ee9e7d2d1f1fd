//! Acceptance suite. Runs every criterion, prints one `[PASS]` or `[FAIL]`
//! line each, and exits non-zero if any failed.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use bsde_mlp::analysis::{deterministic_picard, run_replications, theorem_bound, SpaceQuadrature};
use bsde_mlp::mlp::{estimate, modified_generator_evals, MlpConfig, Scheme};
use bsde_mlp::problem::{builtin_problem, BsdeProblem, ProblemOptions, BOUNDED_NONLINEAR, LINEAR_Y, ZERO_GENERATOR};
use bsde_mlp::quadrature::{build_rule, integrate, quadrature_error_bound};
use bsde_mlp::sampling::{GaussianStream, StreamKey};

type Outcome = Result<String, String>;

fn problem(name: &str, dim: usize) -> BsdeProblem {
    builtin_problem(
        name,
        &ProblemOptions {
            dim,
            ..ProblemOptions::default()
        },
    )
    .unwrap()
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn uniform_source(seed: u64) -> GaussianStream {
    GaussianStream::new(&StreamKey::root(seed))
}

fn quadrature_exactness() -> Outcome {
    let mut rng = uniform_source(11);
    let mut worst: f64 = 0.0;
    for q in 1..=12usize {
        for _ in 0..50 {
            let degree = (rng.uniform() * (2 * q) as f64) as usize;
            let coeffs: Vec<f64> = (0..=degree).map(|_| 2.0 * rng.uniform() - 1.0).collect();
            let a = 3.0 * rng.uniform() - 2.0;
            let b = a + 0.1 + 2.9 * rng.uniform();
            let rule = build_rule(q, a, b).map_err(|e| e.to_string())?;
            let value = integrate(&rule, |t| coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c))
                .map_err(|e| e.to_string())?;
            let exact: f64 = coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| c * (b.powi(k as i32 + 1) - a.powi(k as i32 + 1)) / (k + 1) as f64)
                .sum();
            let rel = (value - exact).abs() / exact.abs();
            worst = worst.max(rel);
            ensure(rel <= 1e-10, || format!("q={q} degree={degree}: relative error {rel:e}"))?;
        }
    }
    Ok(format!("worst relative error {worst:.1e}"))
}

fn quadrature_one_sided() -> Outcome {
    let mut rng = uniform_source(12);
    type Case = (&'static str, fn(f64) -> f64, fn(f64) -> f64);
    let cases: [Case; 4] = [
        ("exp", f64::exp, f64::exp),
        ("cosh", f64::cosh, f64::sinh),
        ("t^4", |t| t.powi(4), |t| t.powi(5) / 5.0),
        ("t^10", |t| t.powi(10), |t| t.powi(11) / 11.0),
    ];
    let mut worst = f64::NEG_INFINITY;
    let mut worst_case = String::new();
    let (mut checked, mut violations) = (0, 0);
    for _ in 0..20 {
        let u = 5.0 * rng.uniform();
        let v = 5.0 * rng.uniform();
        let (a, b) = (u.min(v), u.max(v));
        if b - a < 1e-9 {
            continue;
        }
        for q in 1..=8 {
            let rule = build_rule(q, a, b).map_err(|e| e.to_string())?;
            for (name, g, antiderivative) in cases {
                let value = integrate(&rule, g).map_err(|e| e.to_string())?;
                let exact = antiderivative(b) - antiderivative(a);
                let excess = value - exact;
                checked += 1;
                if excess > 1e-12 {
                    violations += 1;
                }
                if excess > worst {
                    worst = excess;
                    worst_case = format!(
                        "{name} on [{a:.4}, {b:.4}], q={q}, integral {exact:.3e}, relative {:.1e}",
                        excess / exact
                    );
                }
            }
        }
    }
    ensure(violations == 0, || {
        format!("{violations} of {checked} cases exceed the integral by more than 1e-12; worst {worst:.2e} ({worst_case})")
    })?;
    Ok(format!("{checked} cases, largest rule - integral {worst:.1e}"))
}

fn error_bound_formula() -> Outcome {
    let mut tightest: f64 = 0.0;
    for q in 1..=6usize {
        let p = 2 * q + 2;
        let rule = build_rule(q, 0.0, 1.0).map_err(|e| e.to_string())?;
        let value = integrate(&rule, |t| t.powi(p as i32)).map_err(|e| e.to_string())?;
        let error = (value - 1.0 / (p + 1) as f64).abs();
        // g^(2q)(t) = p! / 2 * t^2, largest at t = 1.
        let deriv: f64 = (3..=p).map(|k| k as f64).product();
        let bound = quadrature_error_bound(q, 0.0, 1.0, deriv).map_err(|e| e.to_string())?;
        tightest = tightest.max(error / bound);
        ensure(error <= bound, || format!("q={q}: error {error:e} > bound {bound:e}"))?;
    }
    Ok(format!("largest error/bound {tightest:.3}"))
}

/// Sample count per depth so that `M^n` is close to 10^4.
fn collapse_samples(depth: usize) -> usize {
    match depth {
        1 => 10_000,
        2 => 100,
        3 => 22,
        _ => 10,
    }
}

fn zero_generator_collapse() -> Outcome {
    let t = 0.0;
    let mut worst: f64 = 0.0;
    for dim in [1usize, 10, 50] {
        let p = problem(ZERO_GENERATOR, dim);
        let x = vec![0.1; dim];
        let s: f64 = x.iter().sum();
        let v = dim as f64 * (p.horizon() - t);
        let exact = (-v / 2.0).exp() * s.cos();
        // std of cos(s + sqrt(v) Z)
        let second = 0.5 * (1.0 + (-2.0 * v).exp() * (2.0 * s).cos());
        let std = (second - exact * exact).sqrt();
        for scheme in [Scheme::Original, Scheme::Modified] {
            for depth in 1..=4 {
                let m = collapse_samples(depth);
                let c = MlpConfig::new(scheme, depth, m, 2, 1000 + depth as u64);
                let e = estimate(&p, &c, t, &x).map_err(|e| e.to_string())?;
                ensure(e.generator_part == 0.0, || {
                    format!("{} d={dim} n={depth}: generator part {:e}", scheme.name(), e.generator_part)
                })?;
                let effective = (m as f64).powi(depth as i32);
                let band = 4.0 * std / effective.sqrt();
                let dev = (e.y - exact).abs();
                worst = worst.max(dev / band);
                ensure(dev <= band, || {
                    format!("{} d={dim} n={depth}: |y - u| = {dev:e} > {band:e}", scheme.name())
                })?;
            }
        }
    }
    Ok(format!("largest deviation {worst:.2} of the 4-sigma band"))
}

fn linear_oracle() -> Outcome {
    let p = problem(LINEAR_Y, 1);
    let (t, x) = (0.0, 0.5);
    let space = SpaceQuadrature::default();
    let mut worst: f64 = 0.0;
    for depth in 1..=3 {
        let c = MlpConfig::new(Scheme::Modified, depth, 16, 8, 2000 + depth as u64);
        let stats = run_replications(&p, &c, t, &[x], 400).map_err(|e| e.to_string())?;
        let oracle = deterministic_picard(&p, depth, 8, t, x, &space).map_err(|e| e.to_string())?;
        let band = 4.0 * stats.std_y / 20.0;
        let dev = (stats.mean_y - oracle).abs();
        worst = worst.max(dev / band);
        ensure(dev <= band, || {
            format!("n={depth}: mean {} vs oracle {oracle}, |diff| {dev:e} > {band:e}", stats.mean_y)
        })?;
    }
    Ok(format!("largest deviation {worst:.2} of the 4-sigma band"))
}

fn variance_decay() -> Outcome {
    let p = problem(LINEAR_Y, 1);
    let samples = [4usize, 16, 64];
    let mut points = Vec::new();
    for &m in &samples {
        let c = MlpConfig::new(Scheme::Modified, 3, m, 2, 3000 + m as u64);
        let stats = run_replications(&p, &c, 0.0, &[0.5], 400).map_err(|e| e.to_string())?;
        points.push(((m as f64).ln(), stats.std_y.ln()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let stds: Vec<String> = samples
        .iter()
        .zip(&points)
        .map(|(m, p)| format!("M={m}: {:.3e}", p.1.exp()))
        .collect();
    let detail = format!("slope {slope:.3} (std {})", stds.join(", "));
    ensure((slope + 0.5).abs() <= 0.15, || format!("{detail}, need -0.5 +- 0.15"))?;
    Ok(detail)
}

fn bias_domination() -> Outcome {
    let mut cells = 0;
    let mut tightest = f64::NEG_INFINITY;
    for name in [ZERO_GENERATOR, LINEAR_Y] {
        for dim in [1usize, 5] {
            let p = problem(name, dim);
            let x = vec![0.2; dim];
            for depth in 1..=4 {
                let c = MlpConfig::new(Scheme::Modified, depth, 4, 4, 4000 + depth as u64);
                let stats = run_replications(&p, &c, 0.0, &x, 400).map_err(|e| e.to_string())?;
                let bound = theorem_bound(&p, &c, 0.0).map_err(|e| e.to_string())?;
                let u = stats.reference.ok_or("no reference solution")?;
                let observed = (stats.mean_y - u).abs() - 4.0 * stats.std_y / 20.0;
                tightest = tightest.max(observed / bound.bias_bound);
                cells += 1;
                ensure(observed <= bound.bias_bound, || {
                    format!("{name} d={dim} n={depth}: {observed:e} > bound {:e}", bound.bias_bound)
                })?;
            }
        }
    }
    Ok(format!("{cells} cells, largest observed/bound {tightest:.3}"))
}

fn reuse_saving() -> Outcome {
    let p = problem(BOUNDED_NONLINEAR, 1);
    let (m, q) = (2, 2);
    let mut ratios = Vec::new();
    for depth in 3..=5 {
        let base = MlpConfig::new(Scheme::Modified, depth, m, q, 5000 + depth as u64);
        let on = estimate(&p, &base.with_reuse(true), 0.0, &[0.3]).map_err(|e| e.to_string())?;
        let off = estimate(&p, &base.with_reuse(false), 0.0, &[0.3]).map_err(|e| e.to_string())?;
        ensure(on.y.to_bits() == off.y.to_bits(), || {
            format!("n={depth}: y differs with cache on/off ({} vs {})", on.y, off.y)
        })?;
        ratios.push(on.cost.generator_evals as f64 / off.cost.generator_evals as f64);
    }
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
    ensure(ratios.iter().all(|&r| r <= 0.67), || {
        format!("y bit-identical; generator_evals ratios on/off = [{}], need <= 0.67", shown.join(", "))
    })?;
    Ok(format!("ratios [{}]", shown.join(", ")))
}

fn complexity_growth() -> Outcome {
    let p = problem(BOUNDED_NONLINEAR, 1);
    let (m, q) = (4usize, 2usize);
    let mut costs = Vec::new();
    for depth in 1..=5 {
        let c = MlpConfig::new(Scheme::Modified, depth, m, q, 6000);
        let e = estimate(&p, &c, 0.0, &[0.0]).map_err(|e| e.to_string())?;
        let expected = modified_generator_evals(depth, m as u64, q as u64, true);
        ensure(u128::from(e.cost.generator_evals) == expected, || {
            format!("n={depth}: counted {} vs recurrence {expected}", e.cost.generator_evals)
        })?;
        costs.push(e.cost.generator_evals as f64);
    }
    let ratio = costs[4] / costs[3];
    let mq = (m * q) as f64;
    ensure(ratio >= mq / 2.0 && ratio <= 2.0 * mq, || format!("cost(5)/cost(4) = {ratio:.3}, MQ = {mq}"))?;
    Ok(format!("cost(5)/cost(4) = {ratio:.3}, MQ = {mq}"))
}

const SWEEP_CONFIG: &str = r#"{
    "schema_version": 1,
    "problem": {"name": "bounded-nonlinear", "dim": 3},
    "schemes": ["original", "modified"],
    "depths": [1, 2, 3],
    "samples": [3, 5],
    "quad_orders": [2, 3],
    "cache": [true, false],
    "t": 0.1,
    "x": [0.2, -0.1, 0.4],
    "replications": 6,
    "seed": 77,
    "estimate_z": true
}"#;

/// CSV text with the timing column removed.
fn numeric_columns(text: &str) -> Result<Vec<String>, String> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or("empty CSV")?.split(',').collect();
    let drop = header
        .iter()
        .position(|c| *c == "wall_time_s")
        .ok_or("no wall_time_s column")?;
    Ok(text
        .lines()
        .map(|l| {
            let mut fields: Vec<&str> = l.split(',').collect();
            fields.remove(drop);
            fields.join(",")
        })
        .collect())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("sweep.json");
    std::fs::write(&config, SWEEP_CONFIG).map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for threads in ["1", "auto"] {
        let out = dir.path().join(format!("threads-{threads}.csv"));
        let status = Command::new(env!("CARGO_BIN_EXE_bsde-mlp"))
            .args(["sweep", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .args(["--threads", threads])
            .env_remove("BSDE_MLP_THREADS")
            .status()
            .map_err(|e| e.to_string())?;
        ensure(status.success(), || format!("sweep with --threads {threads} exited with {status}"))?;
        outputs.push(std::fs::read_to_string(&out).map_err(|e| e.to_string())?);
    }
    let a = numeric_columns(&outputs[0])?;
    let b = numeric_columns(&outputs[1])?;
    ensure(a.len() > 1, || "sweep produced no rows".into())?;
    ensure(a == b, || "CSV numeric columns differ between 1 and auto threads".into())?;
    Ok(format!("{} rows identical", a.len() - 1))
}

fn propositions() -> Outcome {
    for n in 1..=20u32 {
        let nf = f64::from(n);
        let base = (2.0 * std::f64::consts::PI * nf).sqrt() * (nf / std::f64::consts::E).powf(nf);
        let f: f64 = (1..=n).map(f64::from).product();
        ensure(base <= f && f <= base * (1.0f64 / 12.0).exp(), || format!("Stirling fails at n={n}"))?;
    }
    for n in 1..=30u32 {
        let mut c: u64 = 1;
        for k in 0..n {
            ensure(c < 1u64 << n, || format!("C({n},{k}) >= 2^{n}"))?;
            c = c * u64::from(n - k) / u64::from(k + 1);
        }
    }
    Ok("Stirling n <= 20, binomial n <= 30".into())
}

struct Criterion {
    id: usize,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() -> ExitCode {
    let secs = Duration::from_secs;
    let criteria = [
        Criterion { id: 1, name: "quadrature exactness", budget: secs(1), run: quadrature_exactness },
        Criterion { id: 2, name: "quadrature one-sidedness", budget: secs(1), run: quadrature_one_sided },
        Criterion { id: 3, name: "quadrature error bound", budget: secs(1), run: error_bound_formula },
        Criterion { id: 4, name: "zero-generator collapse", budget: secs(60), run: zero_generator_collapse },
        Criterion { id: 5, name: "linear generator vs oracle", budget: secs(120), run: linear_oracle },
        Criterion { id: 6, name: "variance decay", budget: secs(300), run: variance_decay },
        Criterion { id: 7, name: "bias bound domination", budget: secs(300), run: bias_domination },
        Criterion { id: 8, name: "reuse saving", budget: secs(120), run: reuse_saving },
        Criterion { id: 9, name: "complexity growth", budget: secs(60), run: complexity_growth },
        Criterion { id: 10, name: "thread-count determinism", budget: secs(60), run: determinism },
        Criterion { id: 11, name: "Stirling and binomial bounds", budget: secs(1), run: propositions },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let mut result = (c.run)();
        let elapsed = start.elapsed();
        if result.is_ok() && elapsed > c.budget {
            result = Err(format!("took {elapsed:.2?}, budget {:?}", c.budget));
        }
        match result {
            Ok(detail) => println!("[PASS] {:>2} {}: {detail} ({elapsed:.2?})", c.id, c.name),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {:>2} {}: {detail} ({elapsed:.2?})", c.id, c.name);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
