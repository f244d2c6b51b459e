use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ecp_core::experiment::{argmin_objective, linear_fit, run_bench, run_sweep, SweepBase};
use ecp_core::oracle::{lb_brute_force_with, ll_brute_force_with};
use ecp_core::phase::{default_grid, DEFAULT_GRID_POINTS};
use ecp_core::{
    generate_gaussian_instance, io as eio, BenchSpec, EcpError, Exec, GaussianSpec, LlUpdate,
    NetworkInstance, ScheduleConfig, Solver, SweepParameter, SweepSpec, TMax,
};

#[derive(Parser)]
#[command(
    name = "ecp",
    version,
    about = "Edge controller placement by deterministic annealing"
)]
struct Cli {
    /// Seed for instance generation and centroid perturbations.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Format for tabular output.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Worker threads; 1 runs everything sequentially. Defaults to all cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Ll,
    Lb,
}

impl From<Mode> for Solver {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Ll => Solver::Ll,
            Mode::Lb => Solver::Lb,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Update {
    Stationary,
    Block,
}

impl From<Update> for LlUpdate {
    fn from(u: Update) -> Self {
        match u {
            Update::Stationary => LlUpdate::Stationary,
            Update::Block => LlUpdate::Block,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Param {
    Gamma,
    #[value(name = "k_max", alias = "k-max")]
    KMax,
    N,
    Clusters,
}

impl From<Param> for SweepParameter {
    fn from(p: Param) -> Self {
        match p {
            Param::Gamma => SweepParameter::Gamma,
            Param::KMax => SweepParameter::KMax,
            Param::N => SweepParameter::N,
            Param::Clusters => SweepParameter::Clusters,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a Gaussian-cluster instance.
    Gen(GenArgs),
    /// Run ECP-LL or ECP-LB on an instance.
    Solve(SolveArgs),
    /// Solve exactly by enumeration and compare with the annealer.
    Oracle(OracleArgs),
    /// Sweep one parameter and tabulate the results.
    Sweep(SweepArgs),
    /// Time the solver over a grid of network sizes.
    Bench(BenchArgs),
    /// Scan for critical temperatures.
    Phase(PhaseArgs),
}

#[derive(Args, Clone)]
struct GenSpec {
    /// Number of clusters.
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Number of nodes.
    #[arg(long, default_value_t = 60)]
    n: usize,
    /// Dimension.
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// Standard deviation of each cluster.
    #[arg(long, default_value_t = 0.5)]
    spread: f64,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    spec: GenSpec,
    #[arg(long, default_value_t = 0.1)]
    gamma: f64,
}

#[derive(Args, Clone)]
struct Schedule {
    #[arg(long, default_value_t = 8)]
    k_max: usize,
    /// Cooling factor.
    #[arg(long, default_value_t = 0.9)]
    alpha: f64,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    t_min: Option<f64>,
    /// Leader-less centroid rule.
    #[arg(long, value_enum, default_value_t = Update::Stationary)]
    ll_update: Update,
}

impl Schedule {
    fn config(&self, exec: Exec) -> ScheduleConfig {
        let mut c = ScheduleConfig::default()
            .with_k_max(self.k_max)
            .with_exec(exec);
        c.alpha = self.alpha;
        c.t_min = self.t_min;
        if let Some(t) = self.t_max {
            c.t_max = TMax::Fixed(t);
        }
        c
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum)]
    mode: Mode,
    /// Overrides the instance's gamma.
    #[arg(long)]
    gamma: Option<f64>,
    #[command(flatten)]
    schedule: Schedule,
    /// Write the annealing trace here.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum)]
    mode: Mode,
    #[arg(long)]
    gamma: Option<f64>,
    /// Largest controller set to consider.
    #[arg(long)]
    max_controllers: Option<usize>,
    /// Compare against this placement instead of running the annealer.
    #[arg(long)]
    placement: Option<PathBuf>,
    #[command(flatten)]
    schedule: Schedule,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_enum)]
    param: Param,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    /// Base instance; generated from the spec flags when omitted.
    #[arg(long)]
    instance: Option<PathBuf>,
    #[command(flatten)]
    spec: GenSpec,
    /// Gamma for generated instances.
    #[arg(long, default_value_t = 0.1)]
    gamma: f64,
    #[arg(long, value_enum, default_value_t = Mode::Ll)]
    mode: Mode,
    #[command(flatten)]
    schedule: Schedule,
    /// Leave wall-times out of the output.
    #[arg(long)]
    omit_timings: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated node counts.
    #[arg(long, value_delimiter = ',', default_values_t = [250, 500, 1000, 2000])]
    sizes: Vec<usize>,
    /// Comma-separated cluster counts.
    #[arg(long, value_delimiter = ',', default_values_t = [3])]
    clusters: Vec<usize>,
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long, default_value_t = 0.1)]
    gamma: f64,
    #[arg(long, value_enum, default_value_t = Mode::Ll)]
    mode: Mode,
    #[command(flatten)]
    schedule: Schedule,
}

#[derive(Args)]
struct PhaseArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    /// Grid size between t-max and t-min.
    #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
    points: usize,
    #[command(flatten)]
    schedule: Schedule,
}

#[derive(Debug)]
enum CliError {
    Infeasible(String),
    Usage(String),
}

impl From<EcpError> for CliError {
    fn from(e: EcpError) -> Self {
        match e {
            EcpError::TooLarge { .. }
            | EcpError::DegenerateCluster { .. }
            | EcpError::MissingLeader => CliError::Infeasible(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

fn io_error(path: Option<&Path>, e: io::Error) -> CliError {
    match path {
        Some(p) => CliError::Usage(format!("{}: {e}", p.display())),
        None => CliError::Usage(e.to_string()),
    }
}

type CliResult<T = ()> = Result<T, CliError>;

struct Ctx {
    seed: u64,
    out: Option<PathBuf>,
    format: Format,
    exec: Exec,
}

impl Ctx {
    fn emit(&self, write: impl FnOnce(&mut dyn Write) -> CliResult) -> CliResult {
        match &self.out {
            Some(path) => {
                let f = File::create(path).map_err(|e| io_error(Some(path), e))?;
                let mut w = BufWriter::new(f);
                write(&mut w)?;
                w.flush().map_err(|e| io_error(Some(path), e))
            }
            None => {
                let stdout = io::stdout();
                let mut w = stdout.lock();
                write(&mut w)?;
                w.flush().map_err(|e| io_error(None, e))
            }
        }
    }

    fn emit_json<T: serde::Serialize>(&self, value: &T) -> CliResult {
        self.emit(|w| {
            serde_json::to_writer_pretty(&mut *w, value)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            writeln!(w).map_err(|e| io_error(None, e))
        })
    }
}

fn load(path: &Path, gamma: Option<f64>) -> CliResult<NetworkInstance> {
    let inst = eio::load_instance(path)?;
    Ok(match gamma {
        Some(g) => inst.with_gamma(g)?,
        None => inst,
    })
}

fn run_solver(
    mode: Mode,
    inst: &NetworkInstance,
    schedule: &Schedule,
    ctx: &Ctx,
) -> CliResult<ecp_core::RunReport> {
    let config = schedule.config(ctx.exec);
    Ok(match mode {
        Mode::Ll => ecp_core::run_ecp_ll_with(inst, &config, ctx.seed, schedule.ll_update.into())?,
        Mode::Lb => ecp_core::run_ecp_lb(inst, &config, ctx.seed)?,
    })
}

fn gen_spec(spec: &GenSpec, gamma: f64, seed: u64) -> GaussianSpec {
    GaussianSpec::new(spec.k, spec.n, spec.d, seed)
        .with_spread(spec.spread)
        .with_gamma(gamma)
}

fn cmd_gen(args: &GenArgs, ctx: &Ctx) -> CliResult {
    let inst = generate_gaussian_instance(&gen_spec(&args.spec, args.gamma, ctx.seed))?;
    ctx.emit_json(&eio::InstanceFile::from(&inst))
}

fn cmd_solve(args: &SolveArgs, ctx: &Ctx) -> CliResult {
    let inst = load(&args.instance, args.gamma)?;
    let start = Instant::now();
    let report = run_solver(args.mode, &inst, &args.schedule, ctx)?;
    let elapsed = start.elapsed().as_secs_f64();
    if let Some(path) = &args.trace {
        match ctx.format {
            Format::Csv => eio::save_trace(path, &report.trace)?,
            Format::Json => {
                let f = File::create(path).map_err(|e| io_error(Some(path), e))?;
                serde_json::to_writer_pretty(BufWriter::new(f), &report.trace.records)
                    .map_err(|e| CliError::Usage(e.to_string()))?;
            }
        }
    }
    let p = &report.placement;
    eprintln!(
        "objective {} (delay {}, sync {}), {} controllers{}, soft objective {}, {elapsed:.3}s",
        p.objective.total,
        p.objective.delay_cost,
        p.objective.sync_cost,
        p.controllers.len(),
        p.leader.map_or(String::new(), |l| format!(", leader {l}")),
        report.continuous_objective.total,
    );
    ctx.emit_json(p)
}

fn cmd_oracle(args: &OracleArgs, ctx: &Ctx) -> CliResult {
    let inst = load(&args.instance, args.gamma)?;
    let oracle = match args.mode {
        Mode::Ll => ll_brute_force_with(&inst, args.max_controllers, ctx.exec)?,
        Mode::Lb => lb_brute_force_with(&inst, args.max_controllers, ctx.exec)?,
    };
    let (label, solver_objective) = match &args.placement {
        Some(path) => {
            let p = eio::load_placement(path, &inst)?;
            let o = match args.mode {
                Mode::Ll => ecp_core::evaluate_ll(&inst, &p)?,
                Mode::Lb => ecp_core::evaluate_lb(&inst, &p)?,
            };
            ("placement", o.total)
        }
        None => {
            let r = run_solver(args.mode, &inst, &args.schedule, ctx)?;
            ("solver", r.placement.objective.total)
        }
    };
    let ratio = if oracle.objective > 0.0 {
        solver_objective / oracle.objective
    } else if solver_objective == 0.0 {
        1.0
    } else {
        f64::INFINITY
    };
    eprintln!(
        "oracle objective {} over {} subsets in {:.3}s; {label} objective {solver_objective}; ratio {ratio:.6}",
        oracle.objective,
        oracle.subsets_enumerated,
        oracle.wall_time.as_secs_f64(),
    );
    ctx.emit_json(&oracle.placement)
}

fn cmd_sweep(args: &SweepArgs, ctx: &Ctx) -> CliResult {
    let base = match &args.instance {
        Some(path) => SweepBase::Instance(load(path, None)?),
        None => SweepBase::Generator(gen_spec(&args.spec, args.gamma, ctx.seed)),
    };
    let spec = SweepSpec {
        parameter: args.param.into(),
        values: args.values.clone(),
        base,
        solver: args.mode.into(),
        config: args.schedule.config(Exec::Sequential),
        seed: ctx.seed,
    };
    let mut rows = run_sweep(&spec, ctx.exec)?;
    if args.omit_timings {
        for r in &mut rows {
            r.wall_time = 0.0;
        }
    }
    if let Some(k) = argmin_objective(&rows) {
        eprintln!(
            "argmin objective at {} = {} ({})",
            param_name(args.param),
            rows[k].value,
            rows[k].objective
        );
    }
    match ctx.format {
        Format::Csv => ctx.emit(|w| Ok(eio::write_sweep(w, &rows, !args.omit_timings)?)),
        Format::Json if args.omit_timings => {
            let stripped: Vec<serde_json::Value> = rows
                .iter()
                .map(|r| {
                    let mut v = serde_json::to_value(r).expect("plain struct");
                    v.as_object_mut().expect("object").remove("wall_time");
                    v
                })
                .collect();
            ctx.emit_json(&stripped)
        }
        Format::Json => ctx.emit_json(&rows),
    }
}

fn param_name(p: Param) -> &'static str {
    match p {
        Param::Gamma => "gamma",
        Param::KMax => "k_max",
        Param::N => "n",
        Param::Clusters => "clusters",
    }
}

fn cmd_bench(args: &BenchArgs, ctx: &Ctx) -> CliResult {
    let spec = BenchSpec {
        sizes: args.sizes.clone(),
        clusters: args.clusters.clone(),
        dimension: args.d,
        gamma: args.gamma,
        solver: args.mode.into(),
        config: args.schedule.config(ctx.exec),
        seed: ctx.seed,
    };
    let rows = run_bench(&spec)?;
    for &k in &args.clusters {
        let (xs, ys): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .filter(|r| r.clusters == k)
            .map(|r| (r.n as f64, r.wall_time))
            .unzip();
        match linear_fit(&xs, &ys) {
            Some(f) => eprintln!(
                "clusters {k}: wall_time = {:.3e} n + {:.3e}, R² = {:.4}",
                f.slope, f.intercept, f.r_squared
            ),
            None => eprintln!("clusters {k}: fit skipped, needs at least two distinct sizes"),
        }
    }
    match ctx.format {
        Format::Csv => ctx.emit(|w| Ok(eio::write_bench(w, &rows)?)),
        Format::Json => ctx.emit_json(&rows),
    }
}

fn cmd_phase(args: &PhaseArgs, ctx: &Ctx) -> CliResult {
    let inst = load(&args.instance, None)?;
    let config = args.schedule.config(ctx.exec);
    let grid = default_grid(&inst, &config, args.points)?;
    let scan = ecp_core::find_critical_temperatures(&inst, &config, args.gamma, &grid, ctx.seed)?;
    if scan.critical_temperatures.is_empty() {
        eprintln!("critical temperatures: none detected");
    } else {
        let ts: Vec<String> = scan
            .critical_temperatures
            .iter()
            .map(|t| t.to_string())
            .collect();
        eprintln!("critical temperatures: {}", ts.join(", "));
    }
    match ctx.format {
        Format::Csv => ctx.emit(|w| Ok(eio::write_phase(w, &scan)?)),
        Format::Json => ctx.emit_json(&scan),
    }
}

fn exec_for(jobs: Option<usize>) -> CliResult<Exec> {
    match jobs {
        Some(0) => Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(1) => Ok(Exec::Sequential),
        Some(n) => {
            set_threads(n)?;
            Ok(Exec::Parallel)
        }
        None => Ok(Exec::Parallel),
    }
}

#[cfg(feature = "parallel")]
fn set_threads(n: usize) -> CliResult {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

#[cfg(not(feature = "parallel"))]
fn set_threads(_n: usize) -> CliResult {
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    let ctx = Ctx {
        seed: cli.seed,
        out: cli.out,
        format: cli.format,
        exec: exec_for(cli.jobs)?,
    };
    match &cli.command {
        Command::Gen(a) => cmd_gen(a, &ctx),
        Command::Solve(a) => cmd_solve(a, &ctx),
        Command::Oracle(a) => cmd_oracle(a, &ctx),
        Command::Sweep(a) => cmd_sweep(a, &ctx),
        Command::Bench(a) => cmd_bench(a, &ctx),
        Command::Phase(a) => cmd_phase(a, &ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Infeasible(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
