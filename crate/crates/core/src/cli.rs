//! Command-line interface: solve, fit, sweep, bounds and complexity
//! subcommands over the library drivers.
//!
//! Exit codes are a stable contract: 0 success, 2 validation, 3 numerical
//! failure, 4 I/O. All randomness flows from `--seed`; substreams are
//! derived by counter, never by time.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bounds::{bound_records, bound_report, gate_complexity, t_from_error};
use crate::coeffs::{solve_analytic, ErrorMetrics};
use crate::error::{Error, Result};
use crate::experiments::{
    emit_artifacts, fit_epsilon_constants, random_sweep, sweep_csv, FitConfig, SweepConfig,
};
use crate::params::{
    build_params, build_params_k_min, ClockPrep, EigenvalueMode, HhlParams, Postselect,
};
use crate::problem::{
    classical_solve, load_problem, prepare, random_problem_stream, JsonComplex,
    PreparedProblem,
};
use crate::simulator::{
    postselect, run_circuit, RunOptions, MAX_SIM_CLOCK_QUBITS, MAX_SIM_DIM,
};
use crate::C64;

/// Largest clock register the solve subcommand cross-checks on the
/// simulator without being asked.
const AUTO_SIM_MAX_NC: u32 = 10;

#[derive(Parser)]
#[command(
    name = "hhl-lab",
    version,
    about = "Exact statevector laboratory for HHL-family linear-system solvers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,
    /// Worker threads for the parallel drivers (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; results go to stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Stdout payload format (csv applies to sweep only).
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem analytically, cross-checked on the simulator.
    Solve(SolveArgs),
    /// Fit the error-law constants over an eigenvalue/time/clock grid.
    Fit(FitArgs),
    /// Random-problem convergence sweep; emits CSV, JSON and SVG.
    Sweep(SweepArgs),
    /// Scaling and bound checks for one problem.
    Bounds(BoundsArgs),
    /// Resource estimate for a target error.
    Complexity(ComplexityArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ClockArg {
    Hhl,
    Uniform,
}

impl From<ClockArg> for ClockPrep {
    fn from(c: ClockArg) -> Self {
        match c {
            ClockArg::Hhl => ClockPrep::Hhl,
            ClockArg::Uniform => ClockPrep::Uniform,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PostArg {
    /// Postselect the ancilla only.
    A,
    /// Postselect the ancilla and a zero clock.
    A0,
}

impl From<PostArg> for Postselect {
    fn from(p: PostArg) -> Self {
        match p {
            PostArg::A => Postselect::Ancilla,
            PostArg::A0 => Postselect::AncillaAndZeroClock,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Positive,
    Signed,
}

impl From<ModeArg> for EigenvalueMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Positive => EigenvalueMode::Positive,
            ModeArg::Signed => EigenvalueMode::Signed,
        }
    }
}

/// Inclusive clock-qubit range, written `A..B` (or a single value).
#[derive(Clone, Copy, Debug)]
struct NcRange {
    lo: u32,
    hi: u32,
}

fn parse_nc_range(s: &str) -> std::result::Result<NcRange, String> {
    let parse_one = |v: &str| {
        v.trim()
            .parse::<u32>()
            .map_err(|_| format!("'{v}' is not a clock-qubit count"))
    };
    let (lo, hi) = match s.split_once("..") {
        Some((a, b)) => (parse_one(a)?, parse_one(b.strip_prefix('=').unwrap_or(b))?),
        None => {
            let v = parse_one(s)?;
            (v, v)
        }
    };
    if lo > hi {
        return Err(format!("empty range {lo}..{hi}"));
    }
    Ok(NcRange { lo, hi })
}

#[derive(Args)]
struct SolveArgs {
    /// Problem JSON file: {"d": .., "a": [[{"re","im"}, ..], ..], "b": [..]}.
    #[arg(long, conflicts_with = "random")]
    problem: Option<PathBuf>,
    /// Draw a seeded random problem instead of reading one.
    #[arg(long)]
    random: bool,
    /// Substream index for --random.
    #[arg(long, default_value_t = 0)]
    stream: u64,
    /// Dimension for --random.
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// Clock qubits.
    #[arg(long, default_value_t = 6)]
    nc: u32,
    /// Evolution time per clock step (t0 = t 2^nc).
    #[arg(long, default_value_t = 8.0 * PI / 5.0)]
    t: f64,
    #[arg(long, value_enum, default_value_t = ClockArg::Uniform)]
    clock: ClockArg,
    #[arg(long, value_enum, default_value_t = PostArg::A0)]
    post: PostArg,
    #[arg(long, value_enum, default_value_t = ModeArg::Positive)]
    mode: ModeArg,
    /// Conditioning estimate; sets k_min = floor(t0 / (4 pi kappa')).
    #[arg(long, conflicts_with = "k_min")]
    kappa_prime: Option<f64>,
    /// Inversion cutoff bin, as an alternative to --kappa-prime.
    #[arg(long)]
    k_min: Option<usize>,
    /// Spectral-radius estimate dividing the matrix (default: exact).
    #[arg(long)]
    lambda_max: Option<f64>,
    /// Skip the statevector cross-check.
    #[arg(long)]
    no_sim: bool,
    /// Write the final statevector (binary) here; implies the simulator.
    #[arg(long)]
    state_out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Clock-qubit range A..B (inclusive).
    #[arg(long, value_parser = parse_nc_range, default_value = "3..9")]
    nc: NcRange,
    #[arg(long, default_value_t = 50)]
    lambda_count: usize,
    #[arg(long, default_value_t = 50)]
    t_count: usize,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, default_value_t = 50)]
    problems: usize,
    /// Clock-qubit range A..B (inclusive).
    #[arg(long, value_parser = parse_nc_range, default_value = "3..11")]
    nc: NcRange,
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// Evolution time per clock step.
    #[arg(long, default_value_t = 8.0 * PI / 5.0)]
    t: f64,
    /// Cross-check this many leading problems on the simulator.
    #[arg(long, default_value_t = 5)]
    sim_check_problems: usize,
    #[arg(long, default_value_t = 9)]
    sim_check_max_nc: u32,
}

#[derive(Args)]
struct BoundsArgs {
    /// Problem JSON file.
    #[arg(long, conflicts_with = "random")]
    problem: Option<PathBuf>,
    /// Draw a seeded random problem instead of reading one.
    #[arg(long)]
    random: bool,
    /// Substream index for --random.
    #[arg(long, default_value_t = 0)]
    stream: u64,
    /// Dimension for --random.
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// Clock-qubit range A..B (inclusive).
    #[arg(long, value_parser = parse_nc_range, default_value = "4..11")]
    nc: NcRange,
    /// Evolution time per clock step.
    #[arg(long, default_value_t = 8.0 * PI / 5.0)]
    t: f64,
    #[arg(long, default_value_t = 1)]
    k_min: usize,
    /// Spectral-radius estimate dividing the matrix (default: exact).
    #[arg(long)]
    lambda_max: Option<f64>,
}

#[derive(Args)]
struct ComplexityArgs {
    /// Sparsity of the matrix.
    #[arg(long)]
    s: u32,
    #[arg(long)]
    d: u64,
    #[arg(long)]
    kappa: f64,
    /// Conditioning estimate (default: kappa itself).
    #[arg(long)]
    kappa_prime: Option<f64>,
    /// Target error.
    #[arg(long)]
    eps: f64,
}

/// Parse arguments and dispatch; returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        // The global pool can only be built once per process; a second
        // attempt (e.g. in tests) is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    if cli.format == Format::Csv && !matches!(cli.command, Command::Sweep(_)) {
        return Err(Error::InvalidParameter(
            "--format csv only applies to sweep".into(),
        ));
    }
    match &cli.command {
        Command::Solve(args) => cmd_solve(cli, args),
        Command::Fit(args) => cmd_fit(cli, args),
        Command::Sweep(args) => cmd_sweep(cli, args),
        Command::Bounds(args) => cmd_bounds(cli, args),
        Command::Complexity(args) => cmd_complexity(cli, args),
    }
}

/// Write pretty JSON to `dir/name` (with a pointer line on stdout) or, with
/// no output directory, print it to stdout.
fn emit_json<T: Serialize>(value: &T, out: Option<&Path>, name: &str) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("reports serialize") + "\n";
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            println!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn load_or_random(
    problem: &Option<PathBuf>,
    random: bool,
    seed: u64,
    stream: u64,
    d: usize,
    lambda_max: Option<f64>,
    mode: EigenvalueMode,
) -> Result<PreparedProblem> {
    let (problem, scale) = match (problem, random) {
        (Some(path), false) => (load_problem(path)?, lambda_max),
        (None, true) => (
            random_problem_stream(seed, stream, d),
            // Random spectra already live in (0, 1].
            lambda_max.or(Some(1.0)),
        ),
        _ => {
            return Err(Error::InvalidParameter(
                "pass exactly one of --problem FILE or --random".into(),
            ))
        }
    };
    prepare(&problem, scale, mode)
}

/// ErrorMetrics with the state vector flattened for serialization.
#[derive(Serialize)]
struct MetricsJson {
    eps1: Vec<f64>,
    eps2: Vec<f64>,
    lambda_tilde: Vec<f64>,
    p_ideal: f64,
    p0: f64,
    p_tilde: f64,
    p_success: f64,
    fidelity: f64,
    infidelity: f64,
    distance: f64,
    norm_x: f64,
    norm_x_approx: f64,
    norm_rel_error: f64,
    x_approx: Vec<JsonComplex>,
}

impl From<&ErrorMetrics> for MetricsJson {
    fn from(m: &ErrorMetrics) -> Self {
        MetricsJson {
            eps1: m.eps1.clone(),
            eps2: m.eps2.clone(),
            lambda_tilde: m.lambda_tilde.clone(),
            p_ideal: m.p_ideal,
            p0: m.p0,
            p_tilde: m.p_tilde,
            p_success: m.p_success,
            fidelity: m.fidelity,
            infidelity: m.infidelity,
            distance: m.distance,
            norm_x: m.norm_x,
            norm_x_approx: m.norm_x_approx,
            norm_rel_error: m.norm_rel_error,
            x_approx: m.x_approx.iter().map(|&z| z.into()).collect(),
        }
    }
}

#[derive(Serialize)]
struct ProblemSummary {
    d: usize,
    kappa: f64,
    eigenvalues: Vec<f64>,
    mode: EigenvalueMode,
    b_scale: f64,
    lambda_scale: f64,
}

impl From<&PreparedProblem> for ProblemSummary {
    fn from(p: &PreparedProblem) -> Self {
        ProblemSummary {
            d: p.d(),
            kappa: p.kappa,
            eigenvalues: p.eigenvalues.clone(),
            mode: p.mode,
            b_scale: p.b_scale,
            lambda_scale: p.lambda_scale,
        }
    }
}

#[derive(Serialize)]
struct SimCheckJson {
    p0: f64,
    p_tilde: f64,
    fidelity: f64,
    p0_dev: f64,
    p_tilde_dev: f64,
    fidelity_dev: f64,
}

#[derive(Serialize)]
struct SolveReport {
    params: HhlParams,
    problem: ProblemSummary,
    metrics: MetricsJson,
    /// Expected amplitude-amplification repetitions, 1/sqrt(p_success).
    aa_repetitions: f64,
    warnings: Vec<String>,
    /// Present when the statevector cross-check ran.
    simulator: Option<SimCheckJson>,
}

fn cmd_solve(cli: &Cli, args: &SolveArgs) -> Result<()> {
    let mode = args.mode.into();
    let prepared = load_or_random(
        &args.problem,
        args.random,
        cli.seed,
        args.stream,
        args.d,
        args.lambda_max,
        mode,
    )?;
    let params = match args.k_min {
        Some(k_min) => build_params_k_min(
            args.nc,
            args.t,
            k_min,
            args.clock.into(),
            args.post.into(),
            mode,
        )?,
        None => build_params(
            args.nc,
            args.t,
            args.kappa_prime,
            args.clock.into(),
            args.post.into(),
            mode,
        )?,
    };
    let metrics = solve_analytic(&prepared, &params)?;

    let mut warnings = Vec::new();
    if let Some(kp) = args.kappa_prime {
        if kp < prepared.kappa {
            warnings.push(format!(
                "kappa_prime = {kp} is below the measured kappa = {:.6}; the \
                 inversion window clips part of the spectrum",
                prepared.kappa
            ));
        }
    }
    if params.k_min_clamped {
        warnings.push("the k_min formula returned 0 and was clamped to 1".into());
    }

    let sim_feasible = params.n_c <= AUTO_SIM_MAX_NC.min(MAX_SIM_CLOCK_QUBITS)
        && prepared.d() <= MAX_SIM_DIM;
    if args.state_out.is_some() && (args.no_sim || !sim_feasible) {
        return Err(Error::InvalidParameter(
            "--state-out needs the simulator (small n_c and d, no --no-sim)".into(),
        ));
    }
    let simulator = if sim_feasible && !args.no_sim {
        let run = run_circuit(&prepared, &params, RunOptions::default())?;
        if let Some(path) = &args.state_out {
            run.state.write_binary(path)?;
        }
        let sel_ancilla = postselect(&run.state, Postselect::Ancilla)?;
        let sel_zero = postselect(&run.state, Postselect::AncillaAndZeroClock)?;
        let x_hat = {
            let x = classical_solve(&prepared);
            let n = x.norm();
            x / C64::new(n, 0.0)
        };
        let overlap = x_hat.dotc(&sel_zero.r_state).norm_sqr();
        let fidelity = match params.postselect {
            Postselect::Ancilla => {
                overlap * sel_zero.probability / sel_ancilla.probability
            }
            Postselect::AncillaAndZeroClock => overlap,
        };
        Some(SimCheckJson {
            p0: sel_ancilla.probability,
            p_tilde: sel_zero.probability,
            fidelity,
            p0_dev: (sel_ancilla.probability - metrics.p0).abs(),
            p_tilde_dev: (sel_zero.probability - metrics.p_tilde).abs(),
            fidelity_dev: (fidelity - metrics.fidelity).abs(),
        })
    } else {
        None
    };

    let report = SolveReport {
        aa_repetitions: 1.0 / metrics.p_success.sqrt(),
        params,
        problem: (&prepared).into(),
        metrics: (&metrics).into(),
        warnings,
        simulator,
    };
    emit_json(&report, cli.out.as_deref(), "solve.json")
}

fn cmd_fit(cli: &Cli, args: &FitArgs) -> Result<()> {
    let config = FitConfig {
        lambda_count: args.lambda_count,
        t_count: args.t_count,
        n_c_lo: args.nc.lo,
        n_c_hi: args.nc.hi,
    };
    let report = fit_epsilon_constants(&config)?;
    if cli.out.is_some() {
        println!(
            "a1 = {:.4}, a2 = {:.4} over {} grid points",
            report.a1, report.a2, report.points_used
        );
    }
    emit_json(&report, cli.out.as_deref(), "fit.json")
}

fn cmd_sweep(cli: &Cli, args: &SweepArgs) -> Result<()> {
    let config = SweepConfig {
        problems: args.problems,
        seed: cli.seed,
        d: args.d,
        n_c_lo: args.nc.lo,
        n_c_hi: args.nc.hi,
        t: args.t,
        sim_check_problems: args.sim_check_problems,
        sim_check_max_n_c: args.sim_check_max_nc,
    };
    let report = random_sweep(&config)?;
    match (&cli.out, cli.format) {
        (Some(dir), _) => {
            let paths = emit_artifacts(&report, dir)?;
            println!(
                "wrote {} rows across {}",
                report.rows.len(),
                paths
                    .iter()
                    .map(|p| p.display().to_string())
                    .collect::<Vec<_>>()
                    .join(", ")
            );
        }
        (None, Format::Csv) => print!("{}", sweep_csv(&report)),
        (None, Format::Json) => {
            let payload = serde_json::json!({
                "config": report.config,
                "summary": report.summary,
            });
            println!(
                "{}",
                serde_json::to_string_pretty(&payload).expect("summary serializes")
            );
        }
    }
    Ok(())
}

fn cmd_bounds(cli: &Cli, args: &BoundsArgs) -> Result<()> {
    let prepared = load_or_random(
        &args.problem,
        args.random,
        cli.seed,
        args.stream,
        args.d,
        args.lambda_max,
        EigenvalueMode::Positive,
    )?;
    let report = bound_report(&prepared, args.t, args.nc.lo..=args.nc.hi, args.k_min)?;
    let lambda_min = prepared
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &l| a.min(l.abs()));
    let records = bound_records(
        &report,
        serde_json::json!({
            "t": args.t,
            "n_c": [args.nc.lo, args.nc.hi],
            "k_min": args.k_min,
            "kappa": prepared.kappa,
            "lambda_min": lambda_min,
        }),
    );
    let payload = serde_json::json!({
        "report": report,
        "records": records,
    });
    emit_json(&payload, cli.out.as_deref(), "bounds.json")
}

fn cmd_complexity(cli: &Cli, args: &ComplexityArgs) -> Result<()> {
    let kappa_prime = args.kappa_prime.unwrap_or(args.kappa);
    let estimate = gate_complexity(args.s, args.d, args.kappa, kappa_prime, args.eps)?;
    let payload = serde_json::json!({
        "t_from_error": t_from_error(args.eps, args.kappa)?,
        "estimate": estimate,
    });
    emit_json(&payload, cli.out.as_deref(), "complexity.json")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nc_ranges_parse_inclusively() {
        let r = parse_nc_range("3..11").unwrap();
        assert_eq!((r.lo, r.hi), (3, 11));
        let r = parse_nc_range("4..=9").unwrap();
        assert_eq!((r.lo, r.hi), (4, 9));
        let r = parse_nc_range("7").unwrap();
        assert_eq!((r.lo, r.hi), (7, 7));
        assert!(parse_nc_range("9..3").is_err());
        assert!(parse_nc_range("x..3").is_err());
        assert!(parse_nc_range("").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
