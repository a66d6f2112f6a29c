//! Command-line front end: `validate`, `simulate`, `solve`, `experiment` and `figure4`.
//!
//! Exit codes: 0 success, 1 usage error, 2 validation error, 3 runtime error.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use polya_core::experiment::{case_policy, mean_and_stderr, run_case, run_figure4, ExperimentConfig, Figure4Config};
use polya_core::report::{self, format_number};
use polya_core::urn::{simulate_with_rng, trial_rng};
use polya_core::{
    expected_exposure_exact, expected_exposure_mc, solve_saddle, BuiltinKind, Equilibrium,
    ExposureGame, Network, NetworkDocument, PolicyCase, PolicyMode, PolyaError, SolverOptions, UrnState,
    ENUMERATION_CAP,
};

#[derive(Debug, Parser)]
#[command(name = "polya", version, about = "Network Polya contagion simulator and infection-curing game solver")]
pub struct Cli {
    /// Maximum number of worker threads (results do not depend on it).
    #[arg(long, global = true, value_name = "K")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a network document and print a summary.
    Validate(NetworkArgs),
    /// Simulate trajectories and write them as CSV.
    Simulate(SimulateArgs),
    /// Solve the exposure game at the initial state.
    Solve(SolveArgs),
    /// Run one policy case over many trials and write the infection curve.
    Experiment(ExperimentArgs),
    /// Run all three cases on the line7, star6 and circle6 networks.
    Figure4(Figure4Args),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BuiltinArg {
    Line,
    Star,
    Circle,
}

impl From<BuiltinArg> for BuiltinKind {
    fn from(b: BuiltinArg) -> Self {
        match b {
            BuiltinArg::Line => BuiltinKind::Line,
            BuiltinArg::Star => BuiltinKind::Star,
            BuiltinArg::Circle => BuiltinKind::Circle,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Estimator {
    Exact,
    Mc,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PolicyModeArg {
    PerTrial,
    Frozen,
}

impl From<PolicyModeArg> for PolicyMode {
    fn from(m: PolicyModeArg) -> Self {
        match m {
            PolicyModeArg::PerTrial => PolicyMode::PerTrial,
            PolicyModeArg::Frozen => PolicyMode::Frozen,
        }
    }
}

#[derive(Debug, Args)]
struct NetworkArgs {
    /// JSON network document.
    #[arg(long, value_name = "PATH", conflicts_with = "builtin", required_unless_present = "builtin")]
    network: Option<PathBuf>,

    /// Built-in topology (10 red and 10 black balls per node).
    #[arg(long, value_enum, requires = "n")]
    builtin: Option<BuiltinArg>,

    /// Node count for --builtin.
    #[arg(long, value_name = "K", requires = "builtin")]
    n: Option<usize>,
}

#[derive(Debug, Args)]
struct BudgetArgs {
    /// Budget for both players (default 10 per node).
    #[arg(long, value_name = "B", conflicts_with_all = ["budget_red", "budget_black"])]
    budget: Option<f64>,

    /// Infection budget per step.
    #[arg(long, value_name = "R")]
    budget_red: Option<f64>,

    /// Curing budget per step.
    #[arg(long, value_name = "B")]
    budget_black: Option<f64>,
}

#[derive(Debug, Args)]
struct SolverArgs {
    /// Certified duality-gap tolerance.
    #[arg(long, value_name = "EPS", default_value_t = 1e-6)]
    tol: f64,

    /// Iteration cap of the saddle-point solver.
    #[arg(long, value_name = "K", default_value_t = 10_000)]
    max_iters: usize,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Steps per trial.
    #[arg(long, value_name = "T", default_value_t = 50)]
    horizon: usize,

    /// Number of trials.
    #[arg(long, value_name = "M")]
    trials: Option<usize>,

    /// Master seed; falls back to POLYA_SEED, then 0.
    #[arg(long, value_name = "S", env = "POLYA_SEED", default_value_t = 0)]
    seed: u64,

    /// 1: equilibrium for both, 2: uniform infection, 3: uniform curing.
    #[arg(long, value_name = "1|2|3", default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=3))]
    case: u8,

    /// Re-solve the game on every trial's history, or once up front.
    #[arg(long, value_enum, default_value = "per-trial")]
    policy_mode: PolicyModeArg,

    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    network: NetworkArgs,
    #[command(flatten)]
    budget: BudgetArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    network: NetworkArgs,
    #[command(flatten)]
    budget: BudgetArgs,
    #[command(flatten)]
    solver: SolverArgs,

    /// How the value at the equilibrium is reported.
    #[arg(long, value_enum, default_value = "exact")]
    estimator: Estimator,

    /// Monte Carlo samples for --estimator mc.
    #[arg(long, value_name = "S", default_value_t = 100_000)]
    samples: usize,

    /// Seed for --estimator mc; falls back to POLYA_SEED, then 0.
    #[arg(long, value_name = "S", env = "POLYA_SEED", default_value_t = 0)]
    seed: u64,

    /// Directory for the solver trace CSV.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[command(flatten)]
    network: NetworkArgs,
    #[command(flatten)]
    budget: BudgetArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Args)]
struct Figure4Args {
    #[command(flatten)]
    solver: SolverArgs,

    /// Steps per trial.
    #[arg(long, value_name = "T", default_value_t = 50)]
    horizon: usize,

    /// Number of trials per curve.
    #[arg(long, value_name = "M", default_value_t = 1000)]
    trials: usize,

    /// Master seed; falls back to POLYA_SEED, then 0.
    #[arg(long, value_name = "S", env = "POLYA_SEED", default_value_t = 0)]
    seed: u64,

    /// Re-solve the game on every trial's history, or once up front.
    #[arg(long, value_enum, default_value = "per-trial")]
    policy_mode: PolicyModeArg,

    /// Output directory for figure4.csv and figure4.gp.
    #[arg(long, value_name = "DIR", default_value = "results")]
    out: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Validation(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Validation(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<PolyaError> for CliError {
    fn from(e: PolyaError) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

fn output_error(path: &Path, e: io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(k) = cli.threads {
        if k == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(k);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Runtime(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Validate(args) => validate(&args),
        Command::Simulate(args) => simulate(&args),
        Command::Solve(args) => solve(&args),
        Command::Experiment(args) => experiment(&args),
        Command::Figure4(args) => figure4(&args),
    })
}

struct LoadedNetwork {
    label: String,
    doc: NetworkDocument,
}

fn load_network(args: &NetworkArgs) -> Result<LoadedNetwork, CliError> {
    if let Some(path) = &args.network {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("--network {}: {e}", path.display())))?;
        let doc = NetworkDocument::parse(&text)
            .map_err(|e| CliError::Validation(format!("--network {}: {e}", path.display())))?;
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "network".into());
        return Ok(LoadedNetwork { label, doc });
    }
    let (kind, n) = match (args.builtin, args.n) {
        (Some(kind), Some(n)) => (BuiltinKind::from(kind), n),
        _ => return Err(CliError::Usage("either --network or --builtin with --n is required".into())),
    };
    let net = Network::builtin(kind, n).map_err(|e| CliError::Validation(format!("--builtin {kind} --n {n}: {e}")))?;
    Ok(LoadedNetwork {
        label: format!("{kind}{n}"),
        doc: NetworkDocument::uniform(net, 10.0, 10.0),
    })
}

fn budgets(args: &BudgetArgs, n: usize) -> Result<(f64, f64), CliError> {
    let default = 10.0 * n as f64;
    let (black, red) = match args.budget {
        Some(b) => (b, b),
        None => (args.budget_black.unwrap_or(default), args.budget_red.unwrap_or(default)),
    };
    if !(black >= 0.0 && black.is_finite() && red >= 0.0 && red.is_finite()) {
        return Err(CliError::Usage(format!(
            "--budget-black {black} / --budget-red {red}: budgets must be nonnegative"
        )));
    }
    Ok((black, red))
}

fn solver_options(args: &SolverArgs) -> Result<SolverOptions, CliError> {
    if !(args.tol > 0.0) {
        return Err(CliError::Usage(format!("--tol {}: must be positive", args.tol)));
    }
    if args.max_iters == 0 {
        return Err(CliError::Usage("--max-iters must be at least 1".into()));
    }
    Ok(SolverOptions {
        tol: args.tol,
        max_iters: args.max_iters,
        ..SolverOptions::default()
    })
}

fn initial_state(doc: &NetworkDocument) -> Result<UrnState, CliError> {
    Ok(UrnState::new(
        Arc::new(doc.network.clone()),
        doc.initial_red.clone(),
        doc.initial_black.clone(),
    )?)
}

fn create_in(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
    fs::create_dir_all(dir).map_err(|e| output_error(dir, e))?;
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| output_error(&path, e))?;
    Ok((path, BufWriter::new(file)))
}

fn join(v: &[f64]) -> String {
    v.iter().map(|a| format_number(*a)).collect::<Vec<_>>().join(",")
}

fn validate(args: &NetworkArgs) -> Result<(), CliError> {
    let loaded = load_network(args)?;
    let net = &loaded.doc.network;
    println!("{} nodes, {} edges, connected", net.node_count(), net.edge_count());
    Ok(())
}

fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let loaded = load_network(&args.network)?;
    let init = initial_state(&loaded.doc)?;
    let n = init.node_count();
    let (bb, br) = budgets(&args.budget, n)?;
    let opts = solver_options(&args.solver)?;
    let case = PolicyCase::from_number(args.run.case)?;
    let trials = args.run.trials.unwrap_or(1);
    if trials == 0 || args.run.horizon == 0 {
        return Err(CliError::Usage("--trials and --horizon must be at least 1".into()));
    }
    let frozen = match PolicyMode::from(args.run.policy_mode) {
        PolicyMode::Frozen => Some(case_policy(&init, case, bb, br, &opts, None)?.0),
        PolicyMode::PerTrial => None,
    };

    let mut sink: Box<dyn Write> = match &args.run.out {
        Some(dir) => {
            let (path, w) = create_in(dir, "trajectory.csv")?;
            eprintln!("writing {}", path.display());
            Box::new(w)
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let io_err = |e: io::Error| CliError::Runtime(format!("writing trajectory: {e}"));
    writeln!(sink, "{}", report::TRAJECTORY_HEADER).map_err(io_err)?;
    for trial in 0..trials {
        let mut warm: Option<Equilibrium> = None;
        let traj = simulate_with_rng(
            &init,
            |state| {
                if let Some(p) = &frozen {
                    return Ok(p.clone());
                }
                let (pair, eq) = case_policy(state, case, bb, br, &opts, warm.as_ref())?;
                warm = Some(eq);
                Ok(pair)
            },
            args.run.horizon,
            &mut trial_rng(args.run.seed, trial as u64),
        )?;
        report::write_trajectory_rows(&mut sink, trial, &traj).map_err(io_err)?;
    }
    sink.flush().map_err(io_err)?;
    Ok(())
}

fn solve(args: &SolveArgs) -> Result<(), CliError> {
    let loaded = load_network(&args.network)?;
    let state = initial_state(&loaded.doc)?;
    let n = state.node_count();
    let (bb, br) = budgets(&args.budget, n)?;
    let opts = solver_options(&args.solver)?;
    if n > ENUMERATION_CAP {
        return Err(PolyaError::EnumerationCap {
            nodes: n,
            cap: ENUMERATION_CAP,
        }
        .into());
    }
    let game = ExposureGame::new(&state)?;
    let outcome = solve_saddle(&game, bb, br, &opts, None)?;
    let eq = &outcome.equilibrium;

    println!("x* = {}", join(&eq.x_star));
    println!("y* = {}", join(&eq.y_star));
    match args.estimator {
        Estimator::Exact => {
            let v = expected_exposure_exact(&state, &eq.x_star, &eq.y_star)?.value;
            println!("value = {}", format_number(v));
        }
        Estimator::Mc => {
            let mc = expected_exposure_mc(&state, &eq.x_star, &eq.y_star, args.samples, args.seed)?;
            println!(
                "value = {} (mc, stderr {}, {} samples)",
                format_number(mc.estimate),
                format_number(mc.stderr),
                args.samples
            );
        }
    }
    println!("gap = {}", format_number(eq.gap));
    println!("iterations = {}", eq.iterations);
    println!("converged = {}", eq.converged);

    if let Some(dir) = &args.out {
        let (path, mut w) = create_in(dir, "trace.csv")?;
        report::write_trace(&mut w, &outcome.trace)
            .and_then(|_| w.flush())
            .map_err(|e| output_error(&path, e))?;
    }
    if eq.converged {
        Ok(())
    } else {
        Err(CliError::Runtime(format!(
            "solver did not reach --tol {} within --max-iters {} (gap {})",
            opts.tol,
            opts.max_iters,
            format_number(eq.gap)
        )))
    }
}

fn experiment(args: &ExperimentArgs) -> Result<(), CliError> {
    let loaded = load_network(&args.network)?;
    let n = loaded.doc.network.node_count();
    let (bb, br) = budgets(&args.budget, n)?;
    let case = PolicyCase::from_number(args.run.case)?;
    let cfg = ExperimentConfig {
        network: Arc::new(loaded.doc.network.clone()),
        initial_red: loaded.doc.initial_red.clone(),
        initial_black: loaded.doc.initial_black.clone(),
        budget_red: br,
        budget_black: bb,
        horizon: args.run.horizon,
        trials: args.run.trials.unwrap_or(1000),
        seed: args.run.seed,
        case,
        solver: solver_options(&args.solver)?,
        policy_mode: args.run.policy_mode.into(),
    };
    let curve = run_case(&cfg)?;
    let from = cfg.horizon / 2;
    let (m, se) = curve.window_average(from.max(1), cfg.horizon);
    println!(
        "{} case {}: mean infection over n in [{}, {}] = {} (stderr {}), {} trials",
        loaded.label,
        case,
        from.max(1),
        cfg.horizon,
        format_number(m),
        format_number(se),
        curve.trials
    );
    let (last_mean, _) = mean_and_stderr(curve.per_trial.iter().map(|r| r[cfg.horizon - 1]));
    println!("final step mean = {}", format_number(last_mean));

    let records = [polya_core::CurveRecord {
        network: loaded.label.clone(),
        case,
        curve,
    }];
    match &args.run.out {
        Some(dir) => {
            let (path, mut w) = create_in(dir, "curve.csv")?;
            report::write_curves(&mut w, &records)
                .and_then(|_| w.flush())
                .map_err(|e| output_error(&path, e))?;
            eprintln!("wrote {}", path.display());
        }
        None => {
            let mut out = io::stdout().lock();
            report::write_curves(&mut out, &records).map_err(|e| CliError::Runtime(e.to_string()))?;
        }
    }
    Ok(())
}

fn figure4(args: &Figure4Args) -> Result<(), CliError> {
    if args.trials == 0 || args.horizon == 0 {
        return Err(CliError::Usage("--trials and --horizon must be at least 1".into()));
    }
    let cfg = Figure4Config {
        horizon: args.horizon,
        trials: args.trials,
        seed: args.seed,
        solver: solver_options(&args.solver)?,
        policy_mode: args.policy_mode.into(),
        ..Figure4Config::default()
    };
    let records = run_figure4(&cfg)?;

    let (csv_path, mut w) = create_in(&args.out, "figure4.csv")?;
    report::write_curves(&mut w, &records)
        .and_then(|_| w.flush())
        .map_err(|e| output_error(&csv_path, e))?;
    let mut networks: Vec<String> = records.iter().map(|r| r.network.clone()).collect();
    networks.dedup();
    let gp_path = args.out.join("figure4.gp");
    fs::write(&gp_path, report::gnuplot_script("figure4.csv", &networks)).map_err(|e| output_error(&gp_path, e))?;

    let from = (args.horizon / 2).max(1);
    for r in &records {
        let (m, se) = r.curve.window_average(from, args.horizon);
        println!(
            "{} case {}: mean infection over n in [{from}, {}] = {} (stderr {})",
            r.network,
            r.case,
            args.horizon,
            format_number(m),
            format_number(se)
        );
    }
    eprintln!("wrote {} and {}", csv_path.display(), gp_path.display());
    Ok(())
}
