//! Command-line front end. Scalar reports go to stdout as JSON; sweeps are
//! written as CSV or JSON. Every command can write a [`RunManifest`].

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::critical::{solve_u_star, solve_xi, solve_zeta, zeta_or_zero, DEFAULT_TOL};
use crate::engine::{configured_threads, derive_stream, thread_pool};
use crate::error::{Error, Result};
use crate::experiments::{
    hitting_and_vacancy_report, size_relation_check, sweep_vacant_structure, write_sweep_csv, VacancyConfig,
};
use crate::exploration::{default_burn_in, er_law_check};
use crate::gw::{
    sample_capacities, CapacityConfig, CapacityMethod, DEFAULT_DEPTH_MARGIN, DEFAULT_EXACT_LEVELS, DEFAULT_NODE_BUDGET,
    DEFAULT_RADIUS,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Stream ids of the commands, so different commands never share streams.
mod stream_ids {
    pub const SOLVE: u64 = 1;
    pub const SIMULATE: u64 = 2;
    pub const ER_CHECK: u64 = 3;
    pub const CAPACITY: u64 = 4;
    pub const HITTING: u64 = 5;
    pub const SIZE_CHECK: u64 = 6;
}

#[derive(Debug, Parser)]
#[command(name = "vacantlab", version = VERSION, about = "Vacant set of random walk on supercritical Erdos-Renyi graphs")]
pub struct Cli {
    /// Write a run manifest (command, arguments, seed, version, duration,
    /// outputs) as JSON to this path.
    #[arg(long, global = true, value_name = "PATH")]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for xi and u*, optionally zeta(u) and the functional at u.
    Solve(SolveArgs),
    /// Sweep u and record vacant component sizes per trial.
    Simulate(SimulateArgs),
    /// Test the exploration's vacant graph against G(N, p).
    ErCheck(ErCheckArgs),
    /// Estimate E[exp(-u cap)] over conditioned Galton-Watson trees.
    Capacity(CapacityArgs),
    /// Per-vertex vacancy prediction and hitting-time tail diagnostics.
    Hitting(HittingArgs),
    /// Compare exploration and giant-walk vacant sizes.
    SizeCheck(SizeCheckArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    /// Exact top levels plus population-dynamics pools.
    Pooled,
    /// Whole trees materialised to the radius.
    Exact,
}

#[derive(Debug, Args, Serialize)]
pub struct TreeArgs {
    /// Number of conditioned trees.
    #[arg(long, default_value_t = 100_000)]
    pub trees: usize,
    /// Truncation depth of the trees.
    #[arg(long, default_value_t = DEFAULT_RADIUS + DEFAULT_DEPTH_MARGIN)]
    pub depth: usize,
    /// Radius of the capacity computation (must be below --depth).
    #[arg(long, default_value_t = DEFAULT_RADIUS)]
    pub radius: usize,
    #[arg(long, value_enum, default_value_t = MethodArg::Pooled)]
    pub method: MethodArg,
    /// Levels sampled exactly below each root with --method pooled.
    #[arg(long, default_value_t = DEFAULT_EXACT_LEVELS)]
    pub exact_levels: usize,
    /// Pool size per height with --method pooled (default: max(trees, 10000)).
    #[arg(long)]
    pub pool_size: Option<usize>,
    /// Node budget per tree with --method exact.
    #[arg(long, default_value_t = DEFAULT_NODE_BUDGET)]
    pub node_budget: usize,
}

impl TreeArgs {
    fn config(&self, rho: f64) -> CapacityConfig {
        let method = match self.method {
            MethodArg::Exact => CapacityMethod::ExactTrees,
            MethodArg::Pooled => CapacityMethod::Pooled {
                exact_levels: self.exact_levels,
                pool_size: self.pool_size.unwrap_or(self.trees.max(10_000)),
            },
        };
        CapacityConfig {
            node_budget: self.node_budget,
            ..CapacityConfig::new(rho, self.trees)
                .with_radius(self.radius, self.depth)
                .with_method(method)
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SolveArgs {
    #[arg(long)]
    pub rho: f64,
    /// Level at which to report zeta(u) and the functional.
    #[arg(long)]
    pub u: Option<f64>,
    /// Solver tolerance for xi and zeta; u* uses max(tol, 1e-6).
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    #[command(flatten)]
    pub trees: TreeArgs,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args, Serialize)]
#[command(group(ArgGroup::new("levels").required(true).args(["u", "u_min"])))]
pub struct SimulateArgs {
    /// Number of vertices (at least 100).
    #[arg(long, value_parser = clap::value_parser!(u64).range(100..))]
    pub n: u64,
    #[arg(long)]
    pub rho: f64,
    /// Single level.
    #[arg(long, conflicts_with = "u_min")]
    pub u: Option<f64>,
    /// Grid start; the grid has --u-steps evenly spaced levels.
    #[arg(long, requires_all = ["u_max", "u_steps"])]
    pub u_min: Option<f64>,
    #[arg(long, requires = "u_min")]
    pub u_max: Option<f64>,
    #[arg(long, requires = "u_min", value_parser = clap::value_parser!(u64).range(1..))]
    pub u_steps: Option<u64>,
    #[arg(long, default_value_t = 5)]
    pub trials: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output path (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(flatten)]
    pub trees: TreeArgs,
}

impl SimulateArgs {
    fn grid(&self) -> Vec<f64> {
        match (self.u, self.u_min, self.u_max, self.u_steps) {
            (Some(u), ..) => vec![u],
            (None, Some(lo), Some(hi), Some(steps)) => {
                if steps == 1 {
                    vec![lo]
                } else {
                    (0..steps)
                        .map(|k| lo + (hi - lo) * k as f64 / (steps - 1) as f64)
                        .collect()
                }
            }
            _ => unreachable!("clap enforces the level arguments"),
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ErCheckArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub rho: f64,
    #[arg(long)]
    pub u: f64,
    /// Number of explorations (at least 50).
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    /// Burn-in steps added to the walk time (default: ceil(ln^3 n)).
    #[arg(long)]
    pub burn_in: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct CapacityArgs {
    #[arg(long)]
    pub rho: f64,
    #[arg(long)]
    pub u: f64,
    #[command(flatten)]
    pub trees: TreeArgs,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct HittingArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub rho: f64,
    #[arg(long)]
    pub u: f64,
    /// Number of uniformly chosen giant vertices to probe.
    #[arg(long, default_value_t = 20)]
    pub vertices: usize,
    /// Walks per vertex for escape and vacancy estimates.
    #[arg(long, default_value_t = 2000)]
    pub walks: usize,
    /// Walks per vertex for the hitting-time tail (0 skips it).
    #[arg(long, default_value_t = 0)]
    pub hitting_walks: usize,
    /// Ball radius for the escape probability (default: floor(gamma ln n)
    /// with 6 gamma ln rho = 0.99).
    #[arg(long)]
    pub radius: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct SizeCheckArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub rho: f64,
    #[arg(long)]
    pub u: f64,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    /// Burn-in steps for the exploration (default: ceil(ln^3 n)).
    #[arg(long)]
    pub burn_in: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

/// Provenance record written next to a command's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Full argument vector, program name excluded; rerunning with it
    /// reproduces the output.
    pub argv: Vec<String>,
    /// Every flag after defaults are applied.
    pub args: Value,
    pub root_seed: u64,
    pub version: String,
    pub duration_seconds: f64,
    pub outputs: Vec<String>,
    pub threads: Option<usize>,
}

struct Outcome {
    command: &'static str,
    args: Value,
    seed: u64,
    stdout: Option<String>,
    outputs: Vec<String>,
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn capacity_stream(seed: u64, command: u64) -> crate::engine::RngStream {
    derive_stream(seed, command).split(0)
}

fn cmd_solve(a: &SolveArgs) -> Result<Value> {
    let xi = solve_xi(a.rho, a.tol)?;
    let sample = sample_capacities(&a.trees.config(a.rho), capacity_stream(a.seed, stream_ids::SOLVE))?;
    let u_star = solve_u_star(a.rho, |u| sample.functional(u), a.tol.max(1e-6))?;
    let mut out = json!({
        "rho": a.rho,
        "xi": xi,
        "u_star": u_star.u_star,
        "u_star_ci95_low": u_star.ci95_low,
        "u_star_ci95_high": u_star.ci95_high,
        "u_star_half_width": u_star.half_width(),
        "functional_at_u_star": sample.functional(u_star.u_star),
        "n_aborted_trees": sample.n_aborted,
    });
    if let Some(u) = a.u {
        if u.is_nan() || u < 0.0 {
            return Err(Error::InvalidParameter(format!("u = {u} must be nonnegative")));
        }
        let f = sample.functional(u);
        // at u = 0 the functional is exactly 1 and zeta is xi itself
        let zeta = if u == 0.0 {
            solve_zeta(a.rho, 1.0, a.tol)?
        } else {
            zeta_or_zero(a.rho, f.mean, a.tol)?
        };
        out["u"] = json!(u);
        out["zeta"] = json!(zeta);
        out["functional"] = serde_json::to_value(f)?;
    }
    Ok(out)
}

fn cmd_capacity(a: &CapacityArgs) -> Result<Value> {
    if a.u.is_nan() || a.u < 0.0 {
        return Err(Error::InvalidParameter(format!("u = {} must be nonnegative", a.u)));
    }
    let sample = sample_capacities(&a.trees.config(a.rho), capacity_stream(a.seed, stream_ids::CAPACITY))?;
    let est = sample.functional(a.u);
    Ok(json!({
        "rho": a.rho,
        "u": a.u,
        "radius": a.trees.radius,
        "estimate": est.mean,
        "std_error": est.std_error,
        "ci": [est.ci95_low, est.ci95_high],
        "n_samples": est.n_samples,
        "estimate_at_radius_minus_5": sample.functional_short(a.u).map(|e| e.mean),
        "ci_at_radius_minus_5": sample.functional_short(a.u).map(|e| [e.ci95_low, e.ci95_high]),
        "n_aborted_trees": sample.n_aborted,
    }))
}

fn cmd_simulate(a: &SimulateArgs) -> Result<(Option<String>, Vec<String>)> {
    let n = a.n as usize;
    let grid = a.grid();
    let root = derive_stream(a.seed, stream_ids::SIMULATE);
    let sample = sample_capacities(&a.trees.config(a.rho), root.split(0))?;
    let records = sweep_vacant_structure(n, a.rho, &grid, a.trials, &sample, root.split(1))?;
    let mut bytes = Vec::new();
    match a.format {
        Format::Csv => write_sweep_csv(&records, &mut bytes)?,
        Format::Json => {
            serde_json::to_writer_pretty(&mut bytes, &records)?;
            bytes.push(b'\n');
        }
    }
    match &a.out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            w.write_all(&bytes)?;
            w.flush()?;
            Ok((None, vec![path.display().to_string()]))
        }
        None => Ok((Some(String::from_utf8(bytes).expect("utf-8 output")), Vec::new())),
    }
}

fn cmd_er_check(a: &ErCheckArgs) -> Result<Value> {
    let burn_in = a.burn_in.unwrap_or_else(|| default_burn_in(a.n));
    let r = er_law_check(a.n, a.rho, a.u, a.trials, burn_in, derive_stream(a.seed, stream_ids::ER_CHECK))?;
    let mut v = serde_json::to_value(&r)?;
    v["burn_in"] = json!(burn_in);
    Ok(v)
}

fn cmd_hitting(a: &HittingArgs) -> Result<Value> {
    let cfg = VacancyConfig {
        n: a.n,
        rho: a.rho,
        u: a.u,
        n_vertices: a.vertices,
        n_walks: a.walks,
        hitting_walks: a.hitting_walks,
        radius: a.radius,
    };
    Ok(serde_json::to_value(hitting_and_vacancy_report(
        &cfg,
        derive_stream(a.seed, stream_ids::HITTING),
    )?)?)
}

fn cmd_size_check(a: &SizeCheckArgs) -> Result<Value> {
    let burn_in = a.burn_in.unwrap_or_else(|| default_burn_in(a.n));
    Ok(serde_json::to_value(size_relation_check(
        a.n,
        a.rho,
        a.u,
        a.trials,
        burn_in,
        derive_stream(a.seed, stream_ids::SIZE_CHECK),
    )?)?)
}

fn dispatch(cmd: &Command) -> Result<Outcome> {
    let scalar = |command, args: Value, seed, v: Value| -> Result<Outcome> {
        Ok(Outcome {
            command,
            args,
            seed,
            stdout: Some(to_json(&v)?),
            outputs: Vec::new(),
        })
    };
    match cmd {
        Command::Solve(a) => scalar("solve", serde_json::to_value(a)?, a.seed, cmd_solve(a)?),
        Command::Capacity(a) => scalar("capacity", serde_json::to_value(a)?, a.seed, cmd_capacity(a)?),
        Command::ErCheck(a) => scalar("er-check", serde_json::to_value(a)?, a.seed, cmd_er_check(a)?),
        Command::Hitting(a) => scalar("hitting", serde_json::to_value(a)?, a.seed, cmd_hitting(a)?),
        Command::SizeCheck(a) => scalar("size-check", serde_json::to_value(a)?, a.seed, cmd_size_check(a)?),
        Command::Simulate(a) => {
            let (stdout, outputs) = cmd_simulate(a)?;
            Ok(Outcome {
                command: "simulate",
                args: serde_json::to_value(a)?,
                seed: a.seed,
                stdout,
                outputs,
            })
        }
    }
}

fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(to_json(manifest)?.as_bytes())?;
    w.flush()?;
    Ok(())
}

/// Runs the CLI on `argv` (program name first) and returns the exit code:
/// 0 on success, 1 on runtime or solver errors, 2 on usage errors.
pub fn run<I, S>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                stdout.write_all(text.as_bytes())
            } else {
                stderr.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let started = Instant::now();
    let threads = configured_threads();
    let result = thread_pool(threads).and_then(|pool| pool.install(|| dispatch(&cli.command)));
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return 1;
        }
    };
    if let Some(text) = &outcome.stdout {
        if stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()).is_err() {
            return 1;
        }
    }
    if let Some(path) = &cli.manifest {
        let manifest = RunManifest {
            command: outcome.command.to_string(),
            argv: argv.iter().skip(1).map(|s| s.to_string_lossy().into_owned()).collect(),
            args: outcome.args,
            root_seed: outcome.seed,
            version: VERSION.to_string(),
            duration_seconds: started.elapsed().as_secs_f64(),
            outputs: outcome.outputs,
            threads,
        };
        if let Err(e) = write_manifest(path, &manifest) {
            let _ = writeln!(stderr, "error: {e}");
            return 1;
        }
    }
    0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let argv = std::iter::once("vacantlab").chain(args.iter().copied());
        let code = run(argv, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn solve_subcritical_exits_one() {
        let (code, _, err) = run_capture(&["solve", "--rho", "0.5", "--trees", "100"]);
        assert_eq!(code, 1);
        assert!(err.contains("subcritical"), "{err}");
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run_capture(&["solve"]).0, 2);
        assert_eq!(run_capture(&["bogus"]).0, 2);
        assert_eq!(run_capture(&["simulate", "--n", "50", "--rho", "2", "--u", "0"]).0, 2);
        assert_eq!(run_capture(&["simulate", "--n", "500", "--rho", "2"]).0, 2);
        assert_eq!(
            run_capture(&["simulate", "--n", "500", "--rho", "2", "--u", "0", "--u-min", "0"]).0,
            2
        );
        assert_eq!(run_capture(&["--help"]).0, 0);
    }

    #[test]
    fn capacity_at_zero_and_truncation_error() {
        let (code, out, _) = run_capture(&["capacity", "--rho", "2", "--u", "0", "--trees", "200", "--radius", "10"]);
        assert_eq!(code, 0);
        let v: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["estimate"], json!(1.0));
        assert_eq!(v["ci"][0], v["ci"][1]);
        let (code, _, err) = run_capture(&["capacity", "--rho", "2", "--u", "0.3", "--radius", "50", "--depth", "40"]);
        assert_eq!(code, 1);
        assert!(err.contains("radius exceeds truncation"), "{err}");
    }

    #[test]
    fn solve_reports_zeta_at_zero() {
        let (code, out, _) = run_capture(&[
            "solve", "--rho", "2", "--u", "0", "--trees", "2000", "--radius", "12", "--depth", "14",
        ]);
        assert_eq!(code, 0);
        let v: Value = serde_json::from_str(&out).unwrap();
        let xi = v["xi"].as_f64().unwrap();
        assert!((v["zeta"].as_f64().unwrap() - xi).abs() <= 2e-10);
        assert!((xi - 0.7968121300).abs() < 1e-9);
        assert!(v["u_star_ci95_low"].as_f64() <= v["u_star"].as_f64());
    }

    #[test]
    fn er_check_skips_at_rho_zero() {
        let (code, out, _) = run_capture(&["er-check", "--n", "200", "--rho", "0", "--u", "0.3", "--trials", "50"]);
        assert_eq!(code, 0);
        let v: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["skipped"], json!("edge test skipped: p=0"));
    }
}
