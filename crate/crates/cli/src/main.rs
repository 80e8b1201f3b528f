//! `freemoment`: command-line front end for the one-variable Gibbs and
//! moment-measure solvers and the noncommutative transport solver.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use freemoment::gibbs::{free_gibbs_measure_with, gibbs_density, hilbert_residual, EvenPotential};
use freemoment::measure::{pushforward_monotone, GridMeasure, Polynomial, DEFAULT_NODES};
use freemoment::moment::{minimize_f, MomentProblem};
use freemoment::nc::NCSeries;
use freemoment::sd::DEFAULT_CUTOFF;
use freemoment::transport::{
    solve_v, verify_potential, verify_transport, TransportProblem, DEFAULT_BALL_RADIUS, DEFAULT_NORM_RADIUS,
};
use freemoment::{Error, ErrorKind};

#[derive(Parser, Debug)]
#[command(name = "freemoment", version, about = "Free Gibbs measures, free moment measures and free transport")]
struct Cli {
    /// Print a JSON summary on stdout instead of text.
    #[arg(long, global = true)]
    json: bool,

    /// Echoed into every output file so runs can be matched to test seeds.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Equilibrium measure of an even polynomial potential.
    Gibbs1d(GibbsArgs),
    /// Minimiser of log energy plus maximal correlation for a target law.
    Moment1d(MomentArgs),
    /// Transport from the free Gibbs law of ½|Y|²+V to that of ½|X|²+W.
    TransportNc(TransportArgs),
    /// Re-check a stored transport potential V against W.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
struct GibbsArgs {
    /// Coefficients c2,c4,... of u(x) = Σ c_2k x^2k.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "potential", required_unless_present = "potential")]
    even_coeffs: Option<String>,
    /// JSON file {"even_coeffs": [...]}.
    #[arg(long)]
    potential: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_NODES)]
    nodes: usize,
    /// Solution JSON; the density CSV goes next to it with extension .csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MomentArgs {
    /// builtin:semicircle, builtin:two_point:<a>, builtin:quartic_pushforward,
    /// builtin:dirac0, or a measure JSON file.
    #[arg(long)]
    target: String,
    #[arg(long, default_value_t = 512)]
    particles: usize,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TransportArgs {
    /// Series JSON for W.
    #[arg(long)]
    series: PathBuf,
    /// Truncation degree D of V.
    #[arg(long, default_value_t = 10)]
    degree: usize,
    #[arg(long = "norm-radius", default_value_t = DEFAULT_NORM_RADIUS)]
    norm_radius: f64,
    #[arg(long = "ball-radius", default_value_t = DEFAULT_BALL_RADIUS)]
    ball_radius: f64,
    /// Trace cutoff T.
    #[arg(long, default_value_t = DEFAULT_CUTOFF)]
    cutoff: f64,
    /// Degree cap of the trace tables; defaults to the solver's choice.
    #[arg(long)]
    trace_cap: Option<usize>,
    /// Largest accepted moment deviation of the pushforward law.
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    /// Moments up to this degree are compared.
    #[arg(long, default_value_t = 6)]
    verify_degree: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Series JSON for W.
    #[arg(long)]
    series: PathBuf,
    /// Output of transport-nc, or a bare series JSON for V.
    #[arg(long)]
    solution: PathBuf,
    #[arg(long, default_value_t = 6)]
    degree: usize,
    #[arg(long, default_value_t = DEFAULT_CUTOFF)]
    cutoff: f64,
    #[arg(long)]
    trace_cap: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Failure {
    code: String,
    message: String,
    module: String,
    #[serde(skip)]
    exit: u8,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let exit = match e.kind {
            ErrorKind::InvalidInput | ErrorKind::Regime => 2,
            ErrorKind::NonConvergence | ErrorKind::Internal => 1,
        };
        Failure { code: e.code().to_string(), message: e.message, module: e.module.to_string(), exit }
    }
}

impl Failure {
    fn new(code: &str, module: &str, message: impl Into<String>, exit: u8) -> Self {
        Failure { code: code.to_string(), message: message.into(), module: module.to_string(), exit }
    }

    fn input(message: impl Into<String>) -> Self {
        Self::new("invalid_input", "cli", message, 2)
    }
}

type CliResult<T> = Result<T, Failure>;

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| Failure::new("io", "cli", format!("cannot write {}: {e}", path.display()), 1))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| Failure::new("internal", "cli", format!("serialisation failed: {e}"), 1))?;
    s.push('\n');
    write(path, &s)
}

fn parse_target(spec: &str) -> CliResult<GridMeasure> {
    let name = spec.strip_prefix("builtin:").unwrap_or(spec);
    let m = match name {
        "semicircle" => GridMeasure::semicircle(2.0),
        "dirac0" => GridMeasure::dirac(0.0),
        "quartic_pushforward" => {
            let u = EvenPotential::new(vec![0.0, 0.25])?;
            let nu = free_gibbs_measure_with(&u, DEFAULT_NODES)?;
            pushforward_monotone(&nu.measure, &Polynomial::monomial(3))
        }
        _ => match name.strip_prefix("two_point:") {
            Some(a) => {
                let a: f64 = a.parse().map_err(|_| Failure::input(format!("bad two-point parameter in {spec:?}")))?;
                GridMeasure::two_point(a)
            }
            None if spec.starts_with("builtin:") => {
                return Err(Failure::input(format!("unknown builtin target {spec:?}")))
            }
            None => GridMeasure::from_json(&read(Path::new(spec))?),
        },
    };
    Ok(m?)
}

fn read_series(path: &Path) -> CliResult<NCSeries> {
    Ok(NCSeries::from_json(&read(path)?)?)
}

/// Accepts a transport-nc output (taking its `v`) or a bare series.
fn read_potential(path: &Path) -> CliResult<NCSeries> {
    let text = read(path)?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| Failure::input(format!("{}: bad JSON: {e}", path.display())))?;
    let series = match value.pointer("/solution/v").or_else(|| value.get("v")) {
        Some(v) => v.clone(),
        None => value,
    };
    Ok(NCSeries::from_json(&series.to_string())?)
}

/// Prints `summary` as JSON or as `key: value` lines.
fn report(json_out: bool, summary: &Value) {
    if json_out {
        println!("{}", serde_json::to_string_pretty(summary).expect("summary is plain JSON"));
        return;
    }
    if let Value::Object(map) = summary {
        for (k, v) in map {
            println!("{k}: {v}");
        }
    }
}

fn gibbs1d(cli: &Cli, args: &GibbsArgs) -> CliResult<()> {
    let u = match (&args.even_coeffs, &args.potential) {
        (Some(s), _) => EvenPotential::parse(s)?,
        (None, Some(p)) => EvenPotential::from_json(&read(p)?)?,
        (None, None) => return Err(Failure::input("either --even-coeffs or --potential is required")),
    };
    let sol = free_gibbs_measure_with(&u, args.nodes)?;
    let residual = hilbert_residual(&sol.measure, &u)?;
    if let Some(out) = &args.out {
        write_json(out, &json!({ "seed": cli.seed, "potential": u, "solution": sol, "hilbert_residual": residual }))?;
        // The grid measure is renormalised to trapezoid mass one; the CSV
        // carries the density of the solution itself.
        let mut csv = String::from("x,density\n");
        for &x in sol.measure.nodes() {
            let d = if x.abs() < sol.radius { gibbs_density(&sol, x)? } else { 0.0 };
            csv.push_str(&format!("{x},{d}\n"));
        }
        write(&out.with_extension("csv"), &csv)?;
    }
    report(
        cli.json,
        &json!({
            "radius": sol.radius,
            "hilbert_residual": residual,
            "mass": sol.mass(),
            "radius_condition": sol.radius_condition(),
        }),
    );
    Ok(())
}

fn moment1d(cli: &Cli, args: &MomentArgs) -> CliResult<()> {
    let target = parse_target(&args.target)?;
    let mut problem = MomentProblem::new(target);
    problem.n_particles = args.particles;
    problem.max_iters = args.max_iters;
    problem.tol = args.tol;
    let sol = minimize_f(&problem)?;
    if let Some(out) = &args.out {
        write_json(out, &json!({ "seed": cli.seed, "target": args.target, "solution": sol }))?;
    }
    report(
        cli.json,
        &json!({
            "functional_value": sol.functional_value,
            "converged": sol.converged,
            "iterations": sol.iterations,
            "support": sol.rho_hat.support(),
            "residuals": sol.residuals,
        }),
    );
    if !sol.converged {
        return Err(Failure::from(Error::new(
            ErrorKind::NonConvergence,
            "moment_measure_1d",
            format!("no convergence in {} iterations; partial result kept", sol.iterations),
        )));
    }
    Ok(())
}

fn verification_failure(deviation: f64, tol: f64) -> Failure {
    Failure::new(
        "verification_failed",
        "free_transport",
        format!("pushforward moments deviate by {deviation:.3e}, above the tolerance {tol:.1e}"),
        2,
    )
}

fn transport_nc(cli: &Cli, args: &TransportArgs) -> CliResult<()> {
    let w = read_series(&args.series)?;
    let mut problem = TransportProblem::new(w.clone(), args.degree);
    problem.norm_radius = args.norm_radius;
    problem.ball_radius = args.ball_radius;
    problem.cutoff = args.cutoff;
    if let Some(cap) = args.trace_cap {
        problem.trace_cap = cap;
    }
    let mut sol = solve_v(&problem)?;
    let check = verify_transport(&sol, &w, args.verify_degree)?;
    sol.diagnostics.verification = Some(check.clone());
    if let Some(out) = &args.out {
        write_json(out, &json!({ "seed": cli.seed, "w": w, "degree": args.degree, "solution": sol }))?;
    }
    report(
        cli.json,
        &json!({
            "v_norm": sol.v_norm,
            "regime": sol.diagnostics.regime,
            "outer_iterations": sol.diagnostics.outer_iterations,
            "inner_iterations": sol.diagnostics.inner_iterations,
            "contraction_factor": sol.diagnostics.contraction_factor,
            "cyclic_residual": sol.diagnostics.cyclic_residual,
            "deviation": check.deviation,
            "sd_residual": check.sd_residual,
            "one_variable_deviation": check.one_variable_deviation,
        }),
    );
    if !(check.deviation < args.tol) {
        return Err(verification_failure(check.deviation, args.tol));
    }
    Ok(())
}

fn verify(cli: &Cli, args: &VerifyArgs) -> CliResult<()> {
    let w = read_series(&args.series)?;
    let v = read_potential(&args.solution)?;
    let cap = args.trace_cap.unwrap_or_else(|| TransportProblem::new(w.clone(), v.max_degree()).trace_cap);
    let check = verify_potential(&v, &w, args.degree, cap, args.cutoff)?;
    if let Some(out) = &args.out {
        write_json(out, &json!({ "seed": cli.seed, "report": check }))?;
    }
    report(cli.json, &serde_json::to_value(&check).expect("report is plain data"));
    if !(check.deviation < args.tol) {
        return Err(verification_failure(check.deviation, args.tol));
    }
    Ok(())
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Gibbs1d(a) => gibbs1d(cli, a),
        Command::Moment1d(a) => moment1d(cli, a),
        Command::TransportNc(a) => transport_nc(cli, a),
        Command::Verify(a) => verify(cli, a),
    }
}

fn fail(f: Failure) -> ExitCode {
    eprintln!("{}", serde_json::to_string(&f).expect("failure is plain data"));
    ExitCode::from(f.exit)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            e.exit()
        }
        Err(e) => return fail(Failure::input(e.render().to_string().trim_end())),
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => fail(f),
    }
}
