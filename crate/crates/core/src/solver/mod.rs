//! External MILP solver backend.
//!
//! Models are written in LP format, handed to a solver executable (CBC by
//! default) and the solution file is read back. Every returned schedule has
//! passed the independent validator and its objective has been recomputed
//! from the model.

mod cbc;
mod lazy;

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::lp;
use crate::model::{self, BuildOptions, Domain, LinearConstraint, MilpModel, VarKey};
use crate::schedule::Schedule;
use crate::validator::{self, ObjectiveBreakdown, ValidationOptions, ViolationReport};

pub use cbc::{parse_solution, ParsedSolution, SolverReport};
pub use lazy::solve_lazy_capacity;

/// Environment variable naming the solver executable.
pub const SOLVER_ENV: &str = "PIPESCHED_SOLVER";

/// Binaries further than this from 0 or 1 are rejected.
pub const INTEGRALITY_TOLERANCE: f64 = 1e-5;

/// Relative tolerance between the solver's objective and the recomputed one.
pub const OBJECTIVE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct SolverConfig {
    /// Solver executable.
    pub executable: PathBuf,
    /// Argument template. Placeholders: `{model}`, `{solution}`,
    /// `{time_limit}`, `{gap}`, `{threads}`.
    pub args: Vec<String>,
    pub time_limit: f64,
    pub gap: f64,
    pub threads: usize,
    /// Run directory; a fresh temporary directory when unset.
    pub working_dir: Option<PathBuf>,
    /// Lazy-loop iteration cap.
    pub max_iterations: usize,
}

fn default_args() -> Vec<String> {
    [
        "{model}",
        "sec",
        "{time_limit}",
        "ratioGap",
        "{gap}",
        "solve",
        "solu",
        "{solution}",
    ]
    .map(String::from)
    .to_vec()
}

impl SolverConfig {
    /// CBC at `executable` with a 30-minute limit and a 10⁻³ gap.
    pub fn cbc(executable: impl Into<PathBuf>) -> Self {
        SolverConfig {
            executable: executable.into(),
            args: default_args(),
            time_limit: 1800.0,
            gap: 1e-3,
            threads: 1,
            working_dir: None,
            max_iterations: 50,
        }
    }

    /// Locates the solver through [`SOLVER_ENV`] or `cbc` on `PATH`.
    pub fn detect() -> Result<Self> {
        find_solver().map(SolverConfig::cbc)
    }

    pub fn with_time_limit(mut self, seconds: f64) -> Self {
        self.time_limit = seconds;
        self
    }

    pub fn with_gap(mut self, gap: f64) -> Self {
        self.gap = gap;
        self
    }

    pub fn with_working_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.working_dir = Some(dir.into());
        self
    }

    pub fn check(&self) -> Result<()> {
        if self.time_limit.is_nan() || self.time_limit <= 0.0 {
            return Err(Error::Config("time limit must be positive".into()));
        }
        if self.gap.is_nan() || self.gap < 0.0 {
            return Err(Error::Config("gap target must be nonnegative".into()));
        }
        if self.threads == 0 {
            return Err(Error::Config("thread count must be positive".into()));
        }
        if !self.args.iter().any(|a| a.contains("{model}")) || !self.args.iter().any(|a| a.contains("{solution}")) {
            return Err(Error::Config("argument template needs {model} and {solution}".into()));
        }
        Ok(())
    }

    fn render_args(&self, model: &Path, solution: &Path, time_limit: f64) -> Vec<String> {
        self.args
            .iter()
            .map(|a| {
                a.replace("{model}", &model.display().to_string())
                    .replace("{solution}", &solution.display().to_string())
                    .replace("{time_limit}", &format!("{time_limit}"))
                    .replace("{gap}", &format!("{}", self.gap))
                    .replace("{threads}", &self.threads.to_string())
            })
            .collect()
    }

    fn run_dir(&self) -> Result<PathBuf> {
        static COUNTER: AtomicUsize = AtomicUsize::new(0);
        let dir = match &self.working_dir {
            Some(dir) => dir.clone(),
            None => std::env::temp_dir().join(format!(
                "pipesched-{}-{}",
                std::process::id(),
                COUNTER.fetch_add(1, Ordering::Relaxed)
            )),
        };
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(dir)
    }
}

/// Solver executable from the environment or `PATH`.
pub fn find_solver() -> Result<PathBuf> {
    if let Some(path) = std::env::var_os(SOLVER_ENV) {
        let path = PathBuf::from(path);
        return if path.is_file() {
            Ok(path)
        } else {
            Err(Error::SolverNotFound)
        };
    }
    let paths = std::env::var_os("PATH").ok_or(Error::SolverNotFound)?;
    std::env::split_paths(&paths)
        .map(|dir| dir.join("cbc"))
        .find(|p| p.is_file())
        .ok_or(Error::SolverNotFound)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    GapReached,
    TimeLimit,
    Infeasible,
    Error,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::GapReached => "gap_reached",
            SolveStatus::TimeLimit => "time_limit",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Error => "error",
        }
    }
}

/// One pass of the lazy capacity loop.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LazyIteration {
    pub iteration: usize,
    /// Bound rows added after this pass.
    pub added: usize,
    pub objective: Option<f64>,
    pub status: SolveStatus,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Present only for validator-clean incumbents.
    pub schedule: Option<Schedule>,
    /// Exact objective of the schedule (validator evaluation).
    pub breakdown: Option<ObjectiveBreakdown>,
    pub objective: Option<f64>,
    /// Objective as reported by the solver, constant included.
    pub solver_objective: Option<f64>,
    pub best_bound: Option<f64>,
    pub gap: Option<f64>,
    pub wall_time: f64,
    pub iterations: Vec<LazyIteration>,
    pub run_dir: Option<PathBuf>,
    pub model_hash: Option<String>,
    pub message: Option<String>,
}

impl SolveResult {
    fn without_solution(status: SolveStatus, message: impl Into<String>) -> Self {
        SolveResult {
            status,
            schedule: None,
            breakdown: None,
            objective: None,
            solver_objective: None,
            best_bound: None,
            gap: None,
            wall_time: 0.0,
            iterations: Vec::new(),
            run_dir: None,
            model_hash: None,
            message: Some(message.into()),
        }
    }

    pub fn has_schedule(&self) -> bool {
        self.schedule.is_some()
    }
}

/// Relative gap `|obj - bound| / max(1, |obj|)`.
pub fn relative_gap(objective: f64, bound: f64) -> f64 {
    (objective - bound).abs() / objective.abs().max(1.0)
}

/// Raw outcome of one solver call on a subset of the model rows.
pub(crate) struct Pass {
    pub status: SolveStatus,
    pub schedule: Option<Schedule>,
    pub breakdown: Option<ObjectiveBreakdown>,
    pub solver_objective: Option<f64>,
    pub best_bound: Option<f64>,
    pub message: Option<String>,
}

/// Writes the selected rows, runs the solver and reads the result back.
pub(crate) fn run_pass(
    instance: &Instance,
    model: &MilpModel,
    config: &SolverConfig,
    dir: &Path,
    time_limit: f64,
    include: impl Fn((usize, &LinearConstraint)) -> bool,
) -> Result<Pass> {
    if model.is_trivially_infeasible() {
        return Ok(Pass {
            status: SolveStatus::Infeasible,
            schedule: None,
            breakdown: None,
            solver_objective: None,
            best_bound: None,
            message: Some("model contains an unsatisfiable empty row".into()),
        });
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    // the solver runs inside `dir`, so its paths must not be relative
    let dir = &std::path::absolute(dir).map_err(|e| Error::io(dir, e))?;
    let lp_path = dir.join("model.lp");
    let sol_path = dir.join("solution.sol");
    let log_path = dir.join("solver.log");
    std::fs::write(&lp_path, lp::write_lp_with(model, include)).map_err(|e| Error::io(&lp_path, e))?;
    let _ = std::fs::remove_file(&sol_path);

    // the log is written while the solver runs so long solves can be watched
    let log_file = std::fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let err_file = log_file.try_clone().map_err(|e| Error::io(&log_path, e))?;
    let status = Command::new(&config.executable)
        .args(config.render_args(&lp_path, &sol_path, time_limit.max(1e-3)))
        .current_dir(dir)
        .stdout(Stdio::from(log_file))
        .stderr(Stdio::from(err_file))
        .status()
        .map_err(Error::SolverIo)?;
    let log = std::fs::read_to_string(&log_path).map_err(|e| Error::io(&log_path, e))?;

    let sol_text = std::fs::read_to_string(&sol_path).unwrap_or_default();
    if sol_text.is_empty() && !status.success() {
        return Ok(Pass {
            status: SolveStatus::Error,
            schedule: None,
            breakdown: None,
            solver_objective: None,
            best_bound: None,
            message: Some(format!("solver exited with {status} and wrote no solution")),
        });
    }
    let parsed = parse_solution(&sol_text, &log, model)?;
    let constant = model.objective.constant.to_f64();
    let mut pass = Pass {
        status: parsed.report.status,
        schedule: None,
        breakdown: None,
        solver_objective: parsed.report.objective.map(|o| o + constant),
        best_bound: parsed.report.bound.map(|b| b + constant),
        message: None,
    };
    let Some(values) = parsed.values else {
        return Ok(pass);
    };
    let (schedule, breakdown) = extract(instance, model, &values, parsed.report.objective)?;
    pass.schedule = Some(schedule);
    pass.breakdown = Some(breakdown);
    Ok(pass)
}

/// Turns solver values into a schedule, checking integrality and the
/// objective along the way.
fn extract(
    instance: &Instance,
    model: &MilpModel,
    values: &[f64],
    reported: Option<f64>,
) -> Result<(Schedule, ObjectiveBreakdown)> {
    let mut ones = HashSet::new();
    let mut schedule = Schedule::new();
    for var in model.variables.iter() {
        let value = values[var.id];
        if matches!(var.domain, Domain::Binary) {
            if (value - value.round()).abs() > INTEGRALITY_TOLERANCE {
                return Err(Error::Integrality {
                    name: var.name(),
                    value,
                });
            }
            if let VarKey::Placement { edge, batch, t } = var.key {
                if value > 0.5 {
                    ones.insert(var.id);
                    schedule.insert(&instance.edges[edge].id, &model.catalog.spec(batch).id, t);
                }
            }
        }
    }

    if let Some(reported) = reported {
        let recomputed: f64 = model.objective.terms.iter().map(|&(v, c)| c.to_f64() * values[v]).sum();
        if (reported - recomputed).abs() > OBJECTIVE_TOLERANCE * reported.abs().max(1.0) {
            return Err(Error::ObjectiveMismatch { reported, recomputed });
        }
    }

    let breakdown = validator::evaluate_objective(instance, &model.catalog, &schedule);
    let exact = model::complete_assignment(model, &ones).map(|full| model.objective.evaluate(&full));
    if exact != Some(breakdown.total) {
        return Err(Error::ObjectiveMismatch {
            reported: exact.map_or(f64::NAN, |e| e.to_f64()),
            recomputed: breakdown.total.to_f64(),
        });
    }
    Ok((schedule, breakdown))
}

fn validation_options(model: &MilpModel) -> ValidationOptions {
    ValidationOptions {
        relax_terminal_flush: model.metadata.options.relax_terminal_flush,
    }
}

/// Rejects schedules the validator does not accept.
pub(crate) fn gate(instance: &Instance, model: &MilpModel, schedule: &Schedule) -> ViolationReport {
    validator::check_schedule(instance, &model.catalog, schedule, validation_options(model))
}

pub(crate) fn finish(
    instance: &Instance,
    model: &MilpModel,
    pass: Pass,
    started: Instant,
    run_dir: PathBuf,
    iterations: Vec<LazyIteration>,
) -> SolveResult {
    let mut result = SolveResult {
        status: pass.status,
        schedule: None,
        breakdown: None,
        objective: None,
        solver_objective: pass.solver_objective,
        best_bound: pass.best_bound,
        gap: None,
        wall_time: 0.0,
        iterations,
        run_dir: Some(run_dir),
        model_hash: Some(model.fingerprint()),
        message: pass.message,
    };
    if let (Some(schedule), Some(breakdown)) = (pass.schedule, pass.breakdown) {
        let report = gate(instance, model, &schedule);
        if report.is_feasible() {
            let objective = breakdown.total.to_f64();
            result.objective = Some(objective);
            result.gap = match (result.status, result.best_bound) {
                (SolveStatus::Optimal, None) => Some(0.0),
                (_, Some(bound)) => Some(relative_gap(objective, bound)),
                _ => None,
            };
            if result.status == SolveStatus::Optimal && result.best_bound.is_none() {
                result.best_bound = Some(objective);
            }
            result.schedule = Some(schedule);
            result.breakdown = Some(breakdown);
        } else {
            result.status = SolveStatus::Error;
            result.message = Some(format!(
                "solver schedule rejected by the validator:\n{}",
                report.to_table()
            ));
        }
    }
    result.wall_time = started.elapsed().as_secs_f64();
    result
}

/// Solves a built model in one pass with all non-lazy rows.
pub fn solve(instance: &Instance, model: &MilpModel, config: &SolverConfig) -> Result<SolveResult> {
    config.check()?;
    let started = Instant::now();
    let run_dir = config.run_dir()?;
    let dir = run_dir.join("iter_0");
    let pass = run_pass(instance, model, config, &dir, config.time_limit, |(_, r)| !r.lazy)?;
    Ok(finish(instance, model, pass, started, run_dir, Vec::new()))
}

/// Builds and solves an instance; contradictory fixings count as infeasible.
pub fn solve_instance(instance: &Instance, options: BuildOptions, config: &SolverConfig) -> Result<SolveResult> {
    match model::build_model(instance, options) {
        Ok(model) => solve(instance, &model, config),
        Err(Error::ContradictoryFixings(msg)) => Ok(SolveResult::without_solution(
            SolveStatus::Infeasible,
            format!("contradictory fixings: {msg}"),
        )),
        Err(e) => Err(e),
    }
}
