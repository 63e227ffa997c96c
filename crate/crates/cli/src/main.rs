use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use pipesched::experiment::{run_and_record, run_experiment, ExperimentParams, Suite};
use pipesched::generate::{
    generate_oracle_instance, generate_path_instance, precheck, CostMode, OuttakePolicy, PathExperimentParams, Setting,
    DEFAULT_CAPACITY,
};
use pipesched::model::CapacityForm;
use pipesched::oracle::{brute_force_optimum, OracleLimits, OracleOutcome};
use pipesched::report::export_gantt;
use pipesched::solver::{SolveStatus, SolverConfig};
use pipesched::validator::{self, ValidationOptions};
use pipesched::{lp, BatchCatalog, BuildOptions, Error, Instance, KeyPolicy, Schedule};

const EXIT_INFEASIBLE: u8 = 2;
const EXIT_NO_INCUMBENT: u8 = 3;
const EXIT_INVALID: u8 = 4;
const EXIT_CONFIG: u8 = 5;

#[derive(Parser)]
#[command(
    name = "pipesched",
    version,
    about = "Pipeline batch scheduling via a space-indexed MILP"
)]
struct Cli {
    /// Accept instance documents with unknown keys.
    #[arg(long, global = true)]
    lenient: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated instance.
    Generate(GenerateArgs),
    /// Build the model and write it as an LP file with its metadata.
    Build(BuildArgs),
    /// Build, solve and validate; artifacts and a manifest go to --out-dir.
    Solve(SolveArgs),
    /// Check a schedule against an instance and score it.
    Validate(ValidateArgs),
    /// Exhaustive optimum of a tiny instance.
    Oracle(OracleArgs),
    /// Run an experiment suite of path instances.
    Experiment(ExperimentArgs),
    /// Export a schedule as CSV rows for plotting.
    Gantt(GanttArgs),
    /// List batch specs and their placements.
    Catalog(CatalogArgs),
}

#[derive(Args)]
struct ModelFlags {
    /// Generate capacity bounds lazily.
    #[arg(long)]
    lazy: bool,
    /// Do not require follow-ups for stains ending too close to the horizon.
    #[arg(long)]
    relax_terminal_flush: bool,
    #[arg(long, value_enum, default_value_t = FormArg::Telescoped)]
    capacity_form: FormArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormArg {
    Telescoped,
    Cumulative,
}

impl ModelFlags {
    fn options(&self) -> BuildOptions {
        BuildOptions {
            capacity_lazy: self.lazy,
            relax_terminal_flush: self.relax_terminal_flush,
            capacity_form: match self.capacity_form {
                FormArg::Telescoped => CapacityForm::Telescoped,
                FormArg::Cumulative => CapacityForm::Cumulative,
            },
        }
    }
}

#[derive(Args)]
struct SolverFlags {
    /// Relative optimality gap at which the solver may stop.
    #[arg(long)]
    gap: Option<f64>,
    /// Wall-clock limit in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Solver executable; defaults to $PIPESCHED_SOLVER or `cbc` on PATH.
    #[arg(long)]
    solver: Option<PathBuf>,
}

impl SolverFlags {
    fn config(&self) -> pipesched::Result<SolverConfig> {
        let mut config = match &self.solver {
            Some(path) => SolverConfig::cbc(path),
            None => SolverConfig::detect()?,
        };
        if let Some(gap) = self.gap {
            config.gap = gap;
        }
        if let Some(limit) = self.time_limit {
            config.time_limit = limit;
        }
        if let Some(threads) = self.threads {
            config.threads = threads;
        }
        config.check()?;
        Ok(config)
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(subcommand)]
    kind: GenerateKind,
}

#[derive(Subcommand)]
enum GenerateKind {
    /// Path graph with the refinery at one end.
    Path {
        #[arg(long, default_value_t = 4)]
        vertices: usize,
        #[arg(long, default_value = "A")]
        setting: Setting,
        #[arg(long, default_value = "SD")]
        cost_mode: CostMode,
        #[arg(long, default_value = "daily")]
        outtake_policy: OuttakePolicy,
        #[arg(long, default_value_t = DEFAULT_CAPACITY)]
        capacity: i64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; defaults to <out-dir>/<name>.json.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Random tiny instance that exhaustive search can settle.
    Oracle {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[command(flatten)]
    model: ModelFlags,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value = "run")]
    out_dir: PathBuf,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    schedule: PathBuf,
    #[arg(long)]
    relax_terminal_flush: bool,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
    /// Also write the occupancy series as CSV.
    #[arg(long)]
    occupancy: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value_t = OracleLimits::default().node_budget)]
    node_budget: u64,
    /// Write the optimal schedule here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// SD, SDC or large.
    #[arg(long)]
    suite: Suite,
    #[arg(long, default_value = "experiment")]
    out_dir: PathBuf,
    /// Comma-separated vertex counts; defaults depend on the suite.
    #[arg(long, value_delimiter = ',')]
    vertices: Option<Vec<usize>>,
    /// Comma-separated settings; defaults depend on the suite.
    #[arg(long, value_delimiter = ',')]
    settings: Option<Vec<Setting>>,
    #[arg(long, default_value = "daily")]
    outtake_policy: OuttakePolicy,
    #[arg(long, default_value_t = DEFAULT_CAPACITY)]
    capacity: i64,
    #[arg(long)]
    lazy: bool,
    /// Independent solves run at the same time.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    time_limit: Option<f64>,
    #[arg(long)]
    solver: Option<PathBuf>,
}

#[derive(Args)]
struct GanttArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    schedule: PathBuf,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CatalogArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(path: &Path, lenient: bool) -> anyhow::Result<Instance> {
    let policy = if lenient { KeyPolicy::Lenient } else { KeyPolicy::Strict };
    Instance::load_valid(path, policy).with_context(|| format!("loading {}", path.display()))
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => write(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(
            Error::Config(_)
            | Error::SolverNotFound
            | Error::Json(_)
            | Error::UnknownKeys(_)
            | Error::InvalidInstance(_)
            | Error::UnknownReference { .. }
            | Error::CannotPump { .. }
            | Error::MissingStandardBatch { .. }
            | Error::TargetOnNonStorage(_)
            | Error::FixedOutsideHorizon(_),
        ) => EXIT_CONFIG,
        Some(
            Error::InvalidSchedule(_)
            | Error::Integrality { .. }
            | Error::ObjectiveMismatch { .. }
            | Error::BatchNotOnEdge { .. }
            | Error::PlacementOutsideHorizon { .. },
        ) => EXIT_INVALID,
        _ => 1,
    }
}

fn generate(args: GenerateArgs) -> anyhow::Result<u8> {
    let (instance, path) = match args.kind {
        GenerateKind::Path {
            vertices,
            setting,
            cost_mode,
            outtake_policy,
            capacity,
            seed,
            out,
            out_dir,
        } => {
            if vertices < 2 {
                return Err(Error::Config("a path needs at least two vertices".into()).into());
            }
            let params = PathExperimentParams {
                vertices,
                setting,
                cost_mode,
                outtake: outtake_policy,
                seed,
                capacity,
            };
            let instance = generate_path_instance(&params);
            for warning in precheck(&instance) {
                eprintln!("warning: {warning}");
            }
            (
                instance,
                out.unwrap_or_else(|| out_dir.join(format!("{}.json", params.name()))),
            )
        }
        GenerateKind::Oracle { seed, out, out_dir } => (
            generate_oracle_instance(seed, &OracleLimits::default()),
            out.unwrap_or_else(|| out_dir.join(format!("oracle-{seed}.json"))),
        ),
    };
    write(&path, &instance.to_json_pretty())?;
    println!("{}", path.display());
    Ok(0)
}

fn build(args: BuildArgs, lenient: bool) -> anyhow::Result<u8> {
    let instance = load(&args.instance, lenient)?;
    let model = pipesched::build_model(&instance, args.model.options())?;
    let lp_path = args.out_dir.join("model.lp");
    write(&lp_path, &lp::write_lp(&model))?;
    write(&args.out_dir.join("model.json"), &model.metadata_json())?;
    println!(
        "{} variables ({} binary), {} rows, hash {}",
        model.variables.len(),
        model.metadata.binaries,
        model.constraints.len(),
        model.fingerprint()
    );
    for (family, count) in &model.metadata.constraint_counts {
        println!("  {family:<20} {count}");
    }
    for warning in &model.metadata.warnings {
        eprintln!("warning: {warning}");
    }
    Ok(0)
}

fn solve(args: SolveArgs, lenient: bool) -> anyhow::Result<u8> {
    let instance = load(&args.instance, lenient)?;
    let config = args.solver.config()?;
    let (result, _) = run_and_record(
        &instance,
        &args.instance,
        args.model.options(),
        args.model.lazy,
        &config,
        &args.out_dir,
        Vec::new(),
    )?;
    println!("status     {}", result.status.as_str());
    if let Some(b) = &result.breakdown {
        println!("objective  {} ({:.6})", b.total, b.total.to_f64());
        println!("intake     {}", b.intake);
        println!("pumping    {}", -b.cost);
    }
    if let Some(gap) = result.gap {
        println!("gap        {gap:.3e}");
    }
    println!("time       {:.2}s", result.wall_time);
    if args.model.lazy {
        println!("iterations {}", result.iterations.len());
    }
    if let Some(msg) = &result.message {
        println!("note       {msg}");
    }
    println!("manifest   {}", args.out_dir.join("manifest.json").display());
    Ok(match result.status {
        SolveStatus::Optimal | SolveStatus::GapReached => 0,
        SolveStatus::Infeasible => EXIT_INFEASIBLE,
        SolveStatus::TimeLimit if result.schedule.is_some() => 0,
        SolveStatus::TimeLimit => EXIT_NO_INCUMBENT,
        SolveStatus::Error => EXIT_INVALID,
    })
}

fn validate(args: ValidateArgs, lenient: bool) -> anyhow::Result<u8> {
    let instance = load(&args.instance, lenient)?;
    let catalog = BatchCatalog::build(&instance)?;
    let schedule = Schedule::load(&args.schedule)?;
    let options = ValidationOptions {
        relax_terminal_flush: args.relax_terminal_flush,
    };
    let report = validator::check_schedule(&instance, &catalog, &schedule, options);
    if args.json {
        println!("{}", report.to_json_pretty());
    } else {
        print!("{}", report.to_table());
    }
    if let Some(path) = &args.occupancy {
        let series = validator::simulate_occupancy(&instance, &catalog, &schedule)?;
        write(path, &series.to_csv()?)?;
    }
    if !report.is_feasible() {
        return Ok(EXIT_INVALID);
    }
    let b = validator::evaluate_objective(&instance, &catalog, &schedule);
    if !args.json {
        println!(
            "objective {} = intake {} distribution {} previous plan {} cost {}",
            b.total, b.intake, b.distribution, b.previous_plan, b.cost
        );
    }
    Ok(0)
}

fn oracle(args: OracleArgs, lenient: bool) -> anyhow::Result<u8> {
    let instance = load(&args.instance, lenient)?;
    let limits = OracleLimits {
        node_budget: args.node_budget,
        ..OracleLimits::default()
    };
    match brute_force_optimum(&instance, limits)? {
        OracleOutcome::Optimal {
            objective,
            schedule,
            nodes,
        } => {
            println!("optimal {objective} ({:.6}) after {nodes} nodes", objective.to_f64());
            if let Some(path) = &args.out {
                write(path, &schedule.to_json_pretty())?;
            }
            Ok(0)
        }
        OracleOutcome::Infeasible { nodes } => {
            println!("infeasible after {nodes} nodes");
            Ok(EXIT_INFEASIBLE)
        }
        OracleOutcome::BudgetExceeded { nodes } => {
            println!("node budget exceeded after {nodes} nodes");
            Ok(EXIT_NO_INCUMBENT)
        }
    }
}

fn experiment(args: ExperimentArgs) -> anyhow::Result<u8> {
    let mut params = ExperimentParams::new(args.suite);
    if let Some(v) = args.vertices {
        params.vertices = v;
    }
    if let Some(s) = args.settings {
        params.settings = s;
    }
    params.outtake = args.outtake_policy;
    params.capacity = args.capacity;
    params.lazy = args.lazy;
    params.jobs = args.jobs;
    let flags = SolverFlags {
        gap: None,
        time_limit: args.time_limit,
        threads: None,
        solver: args.solver,
    };
    let config = flags.config()?;
    let report = run_experiment(&params, &config, &args.out_dir)?;
    print!("{}", report.to_table());
    println!("manifest {}", args.out_dir.join("manifest.json").display());
    Ok(0)
}

fn gantt(args: GanttArgs, lenient: bool) -> anyhow::Result<u8> {
    let instance = load(&args.instance, lenient)?;
    let catalog = BatchCatalog::build(&instance)?;
    let schedule = Schedule::load(&args.schedule)?;
    let report = validator::check_schedule(&instance, &catalog, &schedule, ValidationOptions::default());
    if !report.is_feasible() {
        eprint!("{}", report.to_table());
        bail!(Error::InvalidSchedule("gantt export needs a valid schedule".into()));
    }
    emit(args.out.as_deref(), &export_gantt(&instance, &catalog, &schedule)?)?;
    Ok(0)
}

fn catalog(args: CatalogArgs, lenient: bool) -> anyhow::Result<u8> {
    let instance = load(&args.instance, lenient)?;
    let catalog = BatchCatalog::build(&instance)?;
    emit(args.out.as_deref(), &catalog.to_csv(&instance)?)?;
    for warning in &catalog.warnings {
        eprintln!("warning: {warning}");
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    let lenient = cli.lenient;
    let outcome = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Build(a) => build(a, lenient),
        Command::Solve(a) => solve(a, lenient),
        Command::Validate(a) => validate(a, lenient),
        Command::Oracle(a) => oracle(a, lenient),
        Command::Experiment(a) => experiment(a),
        Command::Gantt(a) => gantt(a, lenient),
        Command::Catalog(a) => catalog(a, lenient),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
