//! Command-line front end: single solves, grid sweeps, assumption reports and
//! the one-dimensional deterministic oracle.
//!
//! Exit status: 0 success, 1 other error, 2 usage, 3 unknown problem,
//! 4 invalid grid or config, 5 unwritable output, 6 some cells failed,
//! 7 a declared assumption is violated.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use bsde_mlp::analysis::{deterministic_picard, SpaceQuadrature};
use bsde_mlp::experiment::{
    run_experiment, write_csv, ExperimentOutcome, ExperimentSpec, JsonResults, ProblemSpec, QueryPoint, Sidecar,
    SCHEMA_VERSION,
};
use bsde_mlp::mlp::Scheme;
use bsde_mlp::parallel::{with_threads, Execution};
use bsde_mlp::problem::{validate_assumptions, CheckStatus, BUILTIN_PROBLEMS};
use bsde_mlp::Error;

/// Seed used when neither the config nor `--seed` provides one.
const DEFAULT_SEED: u64 = 0;

#[derive(Parser)]
#[command(name = "bsde-mlp", version, about = "Multilevel Picard solvers for BSDEs")]
struct Cli {
    /// Experiment config (JSON). Its contents take precedence over flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Root seed, used when the config does not set one.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output file; stdout when absent. Overrides the config's `output`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads: a positive count or `auto`.
    #[arg(long, global = true, env = "BSDE_MLP_THREADS", value_parser = parse_threads)]
    threads: Option<Threads>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug)]
enum Threads {
    Auto,
    Fixed(usize),
}

fn parse_threads(s: &str) -> Result<Threads, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(Threads::Auto);
    }
    match s.parse::<usize>() {
        Ok(0) | Err(_) => Err(format!("expected a positive integer or `auto`, got `{s}`")),
        Ok(k) => Ok(Threads::Fixed(k)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single cell.
    Solve(SolveArgs),
    /// Run every cell of the config's grid.
    Sweep,
    /// Probe a problem's declared constants.
    Validate(ValidateArgs),
    /// Deterministic Picard iterate (d = 1, generator free of z).
    Oracle(OracleArgs),
    /// List the built-in problems.
    ListProblems,
}

#[derive(Args)]
struct ProblemArgs {
    #[arg(long)]
    problem: Option<String>,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    #[arg(long, default_value_t = 1.0)]
    horizon: f64,
    #[arg(long, default_value_t = 0.3)]
    alpha: f64,
}

impl ProblemArgs {
    fn spec(&self) -> Result<ProblemSpec, CliError> {
        let name = self
            .problem
            .clone()
            .ok_or_else(|| CliError::Config("pass --problem or --config".into()))?;
        Ok(ProblemSpec {
            name,
            dim: self.dim,
            horizon: self.horizon,
            alpha: self.alpha,
        })
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, value_parser = parse_scheme, default_value = "modified")]
    scheme: Scheme,
    #[arg(long, default_value_t = 3)]
    depth: usize,
    #[arg(long, default_value_t = 16)]
    samples: usize,
    #[arg(long, default_value_t = 4)]
    quad_order: usize,
    #[arg(long, default_value_t = 0.0)]
    t: f64,
    /// Query point, broadcast to every coordinate.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    x: f64,
    #[arg(long, default_value_t = 100)]
    replications: usize,
    /// Recompute the lower level instead of reusing it.
    #[arg(long)]
    no_cache: bool,
    /// Also estimate z.
    #[arg(long)]
    z: bool,
    #[arg(long)]
    strict_printed_form: bool,
    #[arg(long)]
    no_bounds: bool,
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Random probes per check.
    #[arg(long, default_value_t = 500)]
    probes: usize,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, default_value_t = 3)]
    depth: usize,
    #[arg(long, default_value_t = 4)]
    quad_order: usize,
    #[arg(long, default_value_t = 0.0)]
    t: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    x: f64,
}

#[derive(Debug)]
enum CliError {
    UnknownProblem(String),
    Config(String),
    Output(String),
    PartialFailure(usize),
    Violated(String),
    Other(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Other(_) => 1,
            CliError::UnknownProblem(_) => 3,
            CliError::Config(_) => 4,
            CliError::Output(_) => 5,
            CliError::PartialFailure(_) => 6,
            CliError::Violated(_) => 7,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::UnknownProblem(name) => {
                let known: Vec<&str> = BUILTIN_PROBLEMS.iter().map(|(n, _)| *n).collect();
                write!(f, "unknown problem `{name}` (known: {})", known.join(", "))
            }
            CliError::Config(m) => write!(f, "invalid config: {m}"),
            CliError::Output(m) => write!(f, "cannot write output: {m}"),
            CliError::PartialFailure(n) => write!(f, "{n} cell(s) failed"),
            CliError::Violated(m) => write!(f, "assumption violated: {m}"),
            CliError::Other(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::UnknownProblem(name) => CliError::UnknownProblem(name),
            Error::InvalidConfig(m) => CliError::Config(m),
            e @ (Error::InvalidOrder(_)
            | Error::InvalidDimension(_)
            | Error::InvalidTime { .. }
            | Error::DegenerateInterval { .. }
            | Error::InvalidProblem(_)) => CliError::Config(e.to_string()),
            e => CliError::Other(e.to_string()),
        }
    }
}

fn output_error(path: Option<&Path>, e: impl std::fmt::Display) -> CliError {
    match path {
        Some(p) => CliError::Output(format!("{}: {e}", p.display())),
        None => CliError::Output(format!("stdout: {e}")),
    }
}

/// Destination opened up front, so an unwritable path fails before any work.
struct Sink {
    path: Option<PathBuf>,
    writer: Box<dyn Write>,
}

impl Sink {
    fn open(path: Option<PathBuf>) -> Result<Sink, CliError> {
        let writer: Box<dyn Write> = match &path {
            Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| output_error(Some(p), e))?)),
            None => Box::new(io::stdout().lock()),
        };
        Ok(Sink { path, writer })
    }

    fn json<T: Serialize>(&mut self, value: &T) -> Result<(), CliError> {
        serde_json::to_writer_pretty(&mut self.writer, value).map_err(|e| output_error(self.path.as_deref(), e))?;
        self.finish_line()
    }

    fn finish_line(&mut self) -> Result<(), CliError> {
        writeln!(self.writer)
            .and_then(|_| self.writer.flush())
            .map_err(|e| output_error(self.path.as_deref(), e))
    }
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

struct Context {
    seed: Option<u64>,
    out: Option<PathBuf>,
    format: Format,
    threads: Option<usize>,
    execution: Execution,
}

fn load_config(path: &Path) -> Result<ExperimentSpec, CliError> {
    Ok(ExperimentSpec::from_path(path)?)
}

fn emit_outcome(ctx: &Context, spec: &ExperimentSpec, seed: u64, outcome: &ExperimentOutcome) -> Result<(), CliError> {
    let out = ctx.out.clone().or_else(|| spec.output.clone());
    if let Some(p) = &out {
        if p.as_os_str().is_empty() {
            return Err(CliError::Output("empty output path".into()));
        }
    }
    match ctx.format {
        Format::Json => Sink::open(out)?.json(&JsonResults::new(spec, seed, outcome))?,
        Format::Csv => {
            let mut sink = Sink::open(out.clone())?;
            write_csv(&outcome.rows, &mut sink.writer).map_err(|e| output_error(out.as_deref(), e))?;
            if let Some(p) = &out {
                Sink::open(Some(sidecar_path(p)))?.json(&Sidecar::new(spec, seed, outcome))?;
            }
        }
    }
    for f in &outcome.failures {
        eprintln!("cell {} failed: {}", f.cell.index, f.error);
    }
    if outcome.failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::PartialFailure(outcome.failures.len()))
    }
}

fn run_spec(ctx: &Context, spec: &ExperimentSpec) -> Result<(), CliError> {
    let seed = spec.seed.or(ctx.seed).unwrap_or(DEFAULT_SEED);
    spec.validate_grid()?;
    spec.problem.build()?;
    // Fail on an unwritable destination before the (possibly long) run.
    if let Some(p) = ctx.out.as_ref().or(spec.output.as_ref()) {
        Sink::open(Some(p.clone()))?;
    }
    let outcome = with_threads(ctx.threads, || run_experiment(spec, seed, ctx.execution))?;
    emit_outcome(ctx, spec, seed, &outcome)
}

fn solve(ctx: &Context, config: Option<&Path>, args: &SolveArgs) -> Result<(), CliError> {
    let spec = match config {
        Some(path) => load_config(path)?,
        None => ExperimentSpec {
            schema_version: SCHEMA_VERSION,
            problem: args.problem.spec()?,
            schemes: vec![args.scheme],
            depths: vec![args.depth],
            samples: vec![args.samples],
            quad_orders: vec![args.quad_order],
            cache: vec![!args.no_cache],
            t: args.t,
            x: QueryPoint::Scalar(args.x),
            replications: args.replications,
            seed: None,
            output: None,
            estimate_z: args.z,
            strict_printed_form: args.strict_printed_form,
            theorem_bounds: !args.no_bounds,
        },
    };
    let cells = spec.cells().len();
    if cells != 1 {
        return Err(CliError::Config(format!("solve needs exactly one cell, the grid has {cells}; use sweep")));
    }
    run_spec(ctx, &spec)
}

fn sweep(ctx: &Context, config: Option<&Path>) -> Result<(), CliError> {
    let path = config.ok_or_else(|| CliError::Config("sweep requires --config".into()))?;
    run_spec(ctx, &load_config(path)?)
}

fn problem_spec(config: Option<&Path>, args: &ProblemArgs) -> Result<(Option<ExperimentSpec>, ProblemSpec), CliError> {
    match config {
        Some(path) => {
            let spec = load_config(path)?;
            let problem = spec.problem.clone();
            Ok((Some(spec), problem))
        }
        None => Ok((None, args.spec()?)),
    }
}

fn validate(ctx: &Context, config: Option<&Path>, args: &ValidateArgs) -> Result<(), CliError> {
    let (spec, problem) = problem_spec(config, &args.problem)?;
    let p = problem.build()?;
    let seed = spec.and_then(|s| s.seed).or(ctx.seed).unwrap_or(DEFAULT_SEED);
    let report = validate_assumptions(&p, args.probes, seed);
    let mut sink = Sink::open(ctx.out.clone())?;
    match ctx.format {
        Format::Json => sink.json(&report)?,
        Format::Csv => {
            let path = sink.path.clone();
            let err = |e: csv::Error| output_error(path.as_deref(), e);
            let mut w = csv::Writer::from_writer(&mut sink.writer);
            w.write_record(["problem", "check", "status", "constant", "probes", "max_violation", "max_observed", "detail"])
                .map_err(err)?;
            for c in &report.checks {
                let (status, detail) = match &c.status {
                    CheckStatus::Satisfied => ("satisfied", String::new()),
                    CheckStatus::Violated => ("violated", String::new()),
                    CheckStatus::Skipped(why) => ("skipped", why.clone()),
                };
                w.write_record([
                    report.problem.clone(),
                    c.name.clone(),
                    status.to_string(),
                    c.constant.map_or_else(|| "NA".into(), bsde_mlp::experiment::format_f64),
                    c.probes.to_string(),
                    bsde_mlp::experiment::format_f64(c.max_violation),
                    bsde_mlp::experiment::format_f64(c.max_observed),
                    detail,
                ])
                .map_err(err)?;
            }
            w.flush().map_err(|e| output_error(path.as_deref(), e))?;
            drop(w);
            sink.writer.flush().map_err(|e| output_error(path.as_deref(), e))?;
        }
    }
    if report.all_satisfied() {
        Ok(())
    } else {
        let bad: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| c.status == CheckStatus::Violated)
            .map(|c| c.name.as_str())
            .collect();
        Err(CliError::Violated(bad.join(", ")))
    }
}

#[derive(Serialize)]
struct OracleRow {
    problem: String,
    depth: usize,
    quad_order: usize,
    t: f64,
    x: f64,
    value: f64,
}

fn oracle(ctx: &Context, config: Option<&Path>, args: &OracleArgs) -> Result<(), CliError> {
    let (spec, problem) = problem_spec(config, &args.problem)?;
    let p = problem.build()?;
    // A config supplies the depth and order grids and the query point.
    let (depths, orders, t, x) = match &spec {
        Some(s) => {
            let x = s.x.resolve(p.dim())?;
            (s.depths.clone(), s.quad_orders.clone(), s.t, x[0])
        }
        None => (vec![args.depth], vec![args.quad_order], args.t, args.x),
    };
    let space = SpaceQuadrature::default();
    let mut rows = Vec::new();
    for &depth in &depths {
        for &q in &orders {
            let value = with_threads(ctx.threads, || deterministic_picard(&p, depth, q, t, x, &space))?;
            rows.push(OracleRow {
                problem: p.name().to_string(),
                depth,
                quad_order: q,
                t,
                x,
                value,
            });
        }
    }
    let mut sink = Sink::open(ctx.out.clone())?;
    match ctx.format {
        Format::Json => sink.json(&rows),
        Format::Csv => {
            let mut text = String::from("problem,depth,quad_order,t,x,value\n");
            for r in &rows {
                text.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.problem,
                    r.depth,
                    r.quad_order,
                    bsde_mlp::experiment::format_f64(r.t),
                    bsde_mlp::experiment::format_f64(r.x),
                    bsde_mlp::experiment::format_f64(r.value)
                ));
            }
            let path = sink.path.clone();
            sink.writer
                .write_all(text.as_bytes())
                .and_then(|_| sink.writer.flush())
                .map_err(|e| output_error(path.as_deref(), e))
        }
    }
}

fn list_problems(ctx: &Context) -> Result<(), CliError> {
    let mut sink = Sink::open(ctx.out.clone())?;
    let path = sink.path.clone();
    match ctx.format {
        Format::Json => {
            let list: Vec<serde_json::Value> = BUILTIN_PROBLEMS
                .iter()
                .map(|(name, about)| serde_json::json!({"name": name, "description": about}))
                .collect();
            sink.json(&list)
        }
        Format::Csv => {
            let mut text = String::new();
            for (name, about) in BUILTIN_PROBLEMS {
                text.push_str(&format!("{name:<18} {about}\n"));
            }
            sink.writer
                .write_all(text.as_bytes())
                .and_then(|_| sink.writer.flush())
                .map_err(|e| output_error(path.as_deref(), e))
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (threads, execution) = match cli.threads {
        Some(Threads::Fixed(1)) => (Some(1), Execution::Sequential),
        Some(Threads::Fixed(k)) => (Some(k), Execution::Parallel),
        Some(Threads::Auto) | None => (None, Execution::Parallel),
    };
    let ctx = Context {
        seed: cli.seed,
        out: cli.out,
        format: cli.format,
        threads,
        execution,
    };
    let config = cli.config.as_deref();
    match &cli.command {
        Command::Solve(args) => solve(&ctx, config, args),
        Command::Sweep => sweep(&ctx, config),
        Command::Validate(args) => validate(&ctx, config, args),
        Command::Oracle(args) => oracle(&ctx, config, args),
        Command::ListProblems => list_problems(&ctx),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bsde-mlp: {e}");
            ExitCode::from(e.code())
        }
    }
}
