//! `zt`: batch front end for the zerotemp library.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use zerotemp::annealing::{self, AnnealOptions, LimitDeltas, Trajectory, ZeroTempResult};
use zerotemp::measure::relative_entropy;
use zerotemp::potentials::{self, Gauge, SolveReport};
use zerotemp::problem::PROBLEM_FORMAT_VERSION;
use zerotemp::{deviations, duality, oracle, Error, Problem, TriangleCheck};

use output::{fmt_f64, rows_of, to_csv, to_json, vec_of};

const REPORT_FORMAT_VERSION: u32 = 1;
const MAX_ENTROPY_TOL: f64 = 1e-9;

#[derive(Parser, Debug)]
#[command(name = "zt", about = "Entropic optimal transport and its zero-temperature limit", disable_version_flag = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Schrodinger potentials, Gibbs plan and pressure at one inverse temperature.
    Solve(SolveArgs),
    /// Anneal beta upward and extract the zero-temperature limit. With `--out P`
    /// the trajectory goes to P.csv and the limit to P.json.
    Anneal(AnnealArgs),
    /// Primal/dual certificate for the annealed limit.
    Duality(AnnealArgs),
    /// Empirical rates -(1/beta) log pi_beta next to the limiting rate function.
    Ldp(AnnealArgs),
    /// Pressure excess P(beta A) - beta m(A) along the schedule.
    PressureCurve(AnnealArgs),
    /// Exact optimal transport by enumeration, with the max-entropy optimal plan.
    Oracle(OracleArgs),
    /// Checks the problem file and exits.
    Validate(CommonArgs),
    /// Prints the program and format versions.
    Version,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// Problem file (JSON).
    problem: PathBuf,
    /// Residual tolerance of every Schrodinger solve.
    #[arg(long, default_value_t = potentials::DEFAULT_TOL, allow_negative_numbers = true)]
    tol: f64,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Accept distance matrices that break the triangle inequality.
    #[arg(long)]
    no_triangle_check: bool,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    beta: f64,
}

#[derive(Args, Debug)]
struct AnnealArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value_t = annealing::DEFAULT_BETA_MAX, allow_negative_numbers = true)]
    beta_max: f64,
    /// Ratio between successive temperatures.
    #[arg(long, default_value_t = annealing::DEFAULT_FACTOR, allow_negative_numbers = true)]
    factor: f64,
    /// Largest n + m handed to the exact solver.
    #[arg(long, default_value_t = oracle::DEFAULT_CAP)]
    oracle_cap: usize,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value_t = oracle::DEFAULT_CAP)]
    oracle_cap: usize,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Io(String),
    Core(Error),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) | Failure::Io(_) => 1,
            Failure::Core(e) => match e {
                Error::Parse(_) | Error::Argument(_) => 1,
                Error::Dimension { .. } | Error::Validation(_) | Error::Feasibility { .. } | Error::Invariant(_) => 2,
                Error::Convergence { .. } | Error::NotConverged(_) => 3,
                Error::Capacity(_) => 4,
            },
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage: {m}"),
            Failure::Io(m) => write!(f, "{m}"),
            Failure::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ZT_LOG_LEVEL", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("zt: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}

fn run(command: Command) -> Outcome {
    match command {
        Command::Solve(a) => solve(&a),
        Command::Anneal(a) => anneal(&a),
        Command::Duality(a) => certificate(&a),
        Command::Ldp(a) => ldp(&a),
        Command::PressureCurve(a) => pressure_curve(&a),
        Command::Oracle(a) => run_oracle(&a),
        Command::Validate(a) => validate(&a),
        Command::Version => {
            print!(
                "zt {}\nproblem format {PROBLEM_FORMAT_VERSION}\nreport format {REPORT_FORMAT_VERSION}\n",
                env!("CARGO_PKG_VERSION")
            );
            Ok(())
        }
    }
}

fn load(common: &CommonArgs) -> Result<Problem, Failure> {
    if !(common.tol > 0.0) {
        return Err(Failure::Usage(format!("--tol must be positive, got {}", common.tol)));
    }
    let text = fs::read_to_string(&common.problem)
        .map_err(|e| Failure::Io(format!("cannot read {}: {e}", common.problem.display())))?;
    let check = if common.no_triangle_check {
        TriangleCheck::Skip
    } else {
        TriangleCheck::Enforce
    };
    let problem = Problem::from_json_str(&text, check).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", common.problem.display())),
        other => other,
    })?;
    log::info!("loaded {} ({}x{})", common.problem.display(), problem.shape().0, problem.shape().1);
    Ok(problem)
}

fn format_of(common: &CommonArgs, default: Format, allowed: &[Format]) -> Result<Format, Failure> {
    let f = common.format.unwrap_or(default);
    if allowed.contains(&f) {
        Ok(f)
    } else {
        Err(Failure::Usage(format!("--format {f:?} is not available for this command").to_lowercase()))
    }
}

fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SolveOut {
    beta: f64,
    gauge: Gauge,
    phi: Vec<f64>,
    psi: Vec<f64>,
    l: f64,
    residual: f64,
    pressure: f64,
    entropy: f64,
    plan: Vec<Vec<f64>>,
    row_residual: f64,
    col_residual: f64,
    report: SolveReport,
}

fn solve(a: &SolveArgs) -> Outcome {
    let problem = load(&a.common)?;
    format_of(&a.common, Format::Json, &[Format::Json])?;
    let (pair, report) = potentials::schrodinger_solve(&problem, a.beta, a.common.tol, None)?;
    let plan = potentials::gibbs_plan(&problem, &pair)?;
    let out = SolveOut {
        beta: pair.beta(),
        gauge: pair.gauge(),
        phi: vec_of(pair.phi()),
        psi: vec_of(pair.psi()),
        l: pair.l(),
        residual: pair.residual(),
        pressure: potentials::pressure(&problem, &pair)?,
        entropy: relative_entropy(&plan, problem.mu(), problem.nu())?.to_f64(),
        plan: rows_of(plan.table()),
        row_residual: plan.row_residual(),
        col_residual: plan.col_residual(),
        report,
    };
    emit(a.common.out.as_deref(), &to_json(&out))
}

fn trajectory(a: &AnnealArgs) -> Result<(Problem, Trajectory), Failure> {
    let problem = load(&a.common)?;
    let schedule = annealing::default_schedule(a.beta_max, a.factor)?;
    let opts = AnnealOptions {
        tol: a.common.tol,
        oracle_cap: a.oracle_cap,
        ..AnnealOptions::default()
    };
    let traj = annealing::anneal_with(&problem, &schedule, &opts)?;
    if !traj.m_a_exact() {
        log::warn!("m(A) read off the last plan: the oracle cannot handle this size");
    }
    Ok((problem, traj))
}

fn limit_of(traj: &Trajectory) -> Result<ZeroTempResult, Failure> {
    Ok(annealing::extract_limit(traj, annealing::DEFAULT_LIMIT_TOL)?)
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct LimitOut {
    beta_max: f64,
    temperatures: usize,
    converged: bool,
    phi: Vec<f64>,
    psi: Vec<f64>,
    raw_phi: Vec<f64>,
    raw_psi: Vec<f64>,
    plan: Vec<Vec<f64>>,
    cost: f64,
    m_a: f64,
    m_a_exact: bool,
    h_max_estimate: f64,
    plan_entropy: f64,
    deltas: LimitDeltas,
    conjugacy_defect: f64,
}

fn trajectory_csv(traj: &Trajectory) -> String {
    let rows: Vec<Vec<String>> = traj
        .records()
        .iter()
        .map(|r| {
            [r.beta, r.pressure, r.excess, r.entropy, r.cost, r.max_phi_delta]
                .iter()
                .map(|&v| fmt_f64(v))
                .collect()
        })
        .collect();
    to_csv(&["beta", "pressure", "excess", "entropy", "cost", "maxPhiDelta"], &rows)
}

fn anneal(a: &AnnealArgs) -> Outcome {
    let format = format_of(&a.common, Format::Json, &[Format::Json, Format::Csv])?;
    let (_, traj) = trajectory(a)?;
    annealing::pressure_excess(&traj)?;
    let lim = limit_of(&traj)?;
    let last = traj.last();
    let report = LimitOut {
        beta_max: last.beta,
        temperatures: traj.records().len(),
        converged: lim.converged,
        phi: vec_of(&lim.phi),
        psi: vec_of(&lim.psi),
        raw_phi: vec_of(&lim.raw_phi),
        raw_psi: vec_of(&lim.raw_psi),
        plan: rows_of(lim.plan.table()),
        cost: last.cost,
        m_a: traj.m_a(),
        m_a_exact: lim.m_a_exact,
        h_max_estimate: lim.h_max_estimate,
        plan_entropy: lim.plan_entropy,
        deltas: lim.deltas,
        conjugacy_defect: lim.conjugacy_defect,
    };
    match &a.common.out {
        Some(path) => {
            emit(Some(&path.with_extension("csv")), &trajectory_csv(&traj))?;
            emit(Some(&path.with_extension("json")), &to_json(&report))
        }
        None => match format {
            Format::Json => emit(None, &to_json(&report)),
            Format::Csv => emit(None, &trajectory_csv(&traj)),
        },
    }
}

fn certificate(a: &AnnealArgs) -> Outcome {
    format_of(&a.common, Format::Json, &[Format::Json])?;
    let (problem, traj) = trajectory(a)?;
    let lim = limit_of(&traj)?;
    if !lim.converged {
        log::warn!("certifying an unconverged limit");
    }
    let cert = duality::certificate(&problem, &lim.plan, lim.raw_phi.view(), lim.raw_psi.view())?;
    emit(a.common.out.as_deref(), &to_json(&cert))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct RateRow {
    beta: f64,
    cell: String,
    r_beta: f64,
    #[serde(rename = "I")]
    rate: f64,
}

fn ldp(a: &AnnealArgs) -> Outcome {
    let format = format_of(&a.common, Format::Csv, &[Format::Json, Format::Csv])?;
    let (problem, traj) = trajectory(a)?;
    let lim = limit_of(&traj)?;
    let rate = deviations::rate_from_limit(&problem, &lim)?;
    let (n, m) = problem.shape();
    let mut rows = Vec::with_capacity(traj.records().len() * n * m);
    for r in traj.records() {
        for i in 0..n {
            for j in 0..m {
                rows.push(RateRow {
                    beta: r.beta,
                    cell: format!("{i}:{j}"),
                    r_beta: -r.log_plan[[i, j]] / r.beta,
                    rate: rate.at(i, j),
                });
            }
        }
    }
    let text = match format {
        Format::Json => to_json(&rows),
        Format::Csv => {
            let table: Vec<Vec<String>> = rows
                .iter()
                .map(|r| vec![fmt_f64(r.beta), r.cell.clone(), fmt_f64(r.r_beta), fmt_f64(r.rate)])
                .collect();
            to_csv(&["beta", "cell", "r_beta", "I"], &table)
        }
    };
    emit(a.common.out.as_deref(), &text)
}

#[derive(Serialize)]
struct ExcessPoint {
    beta: f64,
    excess: f64,
}

fn pressure_curve(a: &AnnealArgs) -> Outcome {
    let format = format_of(&a.common, Format::Csv, &[Format::Json, Format::Csv])?;
    let (_, traj) = trajectory(a)?;
    let curve = annealing::pressure_excess(&traj)?;
    let text = match format {
        Format::Json => to_json(&curve.iter().map(|&(beta, excess)| ExcessPoint { beta, excess }).collect::<Vec<_>>()),
        Format::Csv => {
            let rows: Vec<Vec<String>> = curve.iter().map(|&(b, e)| vec![fmt_f64(b), fmt_f64(e)]).collect();
            to_csv(&["beta", "excess"], &rows)
        }
    };
    emit(a.common.out.as_deref(), &text)
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct OracleOut {
    alpha: f64,
    #[serde(rename = "mA")]
    m_a: f64,
    vertex_count: usize,
    method: oracle::Method,
    max_entropy_plan: Vec<Vec<f64>>,
}

fn run_oracle(a: &OracleArgs) -> Outcome {
    let problem = load(&a.common)?;
    format_of(&a.common, Format::Json, &[Format::Json])?;
    let res = oracle::exact_ot(problem.mu(), problem.nu(), problem.cost().cost(), a.oracle_cap)?;
    let best = oracle::max_entropy_optimal(&res, problem.mu(), problem.nu(), MAX_ENTROPY_TOL)?;
    let out = OracleOut {
        alpha: res.alpha,
        m_a: res.m_a,
        vertex_count: res.optimal_vertices.len(),
        method: res.method,
        max_entropy_plan: rows_of(best.table()),
    };
    emit(a.common.out.as_deref(), &to_json(&out))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct ValidateOut {
    valid: bool,
    rows: usize,
    cols: usize,
    same_space: bool,
    distance_cost: bool,
    lip_a: f64,
    diameter: f64,
}

fn validate(a: &CommonArgs) -> Outcome {
    let problem = load(a)?;
    format_of(a, Format::Json, &[Format::Json])?;
    let (rows, cols) = problem.shape();
    let out = ValidateOut {
        valid: true,
        rows,
        cols,
        same_space: problem.same_space(),
        distance_cost: problem.is_distance_cost(),
        lip_a: problem.cost().lip_a(),
        diameter: problem.x().diameter(),
    };
    emit(a.out.as_deref(), &to_json(&out))
}
