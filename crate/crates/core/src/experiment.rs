//! Reproducible runs: per-solve manifests and the path-experiment suites.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::catalog::BatchCatalog;
use crate::error::{Error, Result};
use crate::generate::{generate_path_instance, precheck, CostMode, OuttakePolicy, PathExperimentParams, Setting};
use crate::instance::Instance;
use crate::model::BuildOptions;
use crate::rational::Rational;
use crate::report::export_gantt;
use crate::solver::{solve_instance, solve_lazy_capacity, SolveResult, SolveStatus, SolverConfig};
use crate::validator::{self, ValidationOptions};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("manifest serialization is infallible")
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub status: SolveStatus,
    pub objective: Option<Rational>,
    pub gap: Option<f64>,
    pub best_bound: Option<f64>,
    pub wall_time: f64,
    pub intake: Option<Rational>,
    pub pumping_cost: Option<Rational>,
    pub lazy_iterations: usize,
    pub model_hash: Option<String>,
    pub message: Option<String>,
}

impl RunSummary {
    pub fn of(result: &SolveResult) -> Self {
        RunSummary {
            status: result.status,
            objective: result.breakdown.as_ref().map(|b| b.total),
            gap: result.gap,
            best_bound: result.best_bound,
            wall_time: result.wall_time,
            intake: result.breakdown.as_ref().map(|b| b.intake),
            pumping_cost: result.breakdown.as_ref().map(|b| -b.cost),
            lazy_iterations: result.iterations.len(),
            model_hash: result.model_hash.clone(),
            message: result.message.clone(),
        }
    }
}

/// Everything needed to repeat one solve and find its outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub instance: PathBuf,
    pub instance_hash: String,
    pub options: BuildOptions,
    pub lazy: bool,
    pub solver: SolverConfig,
    pub summary: RunSummary,
    /// Artifact name to path; only files that exist are listed.
    pub artifacts: BTreeMap<String, PathBuf>,
    pub started: u64,
    pub finished: u64,
    pub notes: Vec<String>,
}

/// Solves `instance`, writes schedule, validation report and Gantt CSV next
/// to the solver files in `run_dir`, and records a manifest there.
///
/// A returned schedule that fails validation is an error, never a result.
pub fn run_and_record(
    instance: &Instance,
    instance_path: &Path,
    options: BuildOptions,
    lazy: bool,
    solver: &SolverConfig,
    run_dir: &Path,
    notes: Vec<String>,
) -> Result<(SolveResult, RunManifest)> {
    let started = unix_now();
    let config = solver.clone().with_working_dir(run_dir);
    let result = if lazy {
        solve_lazy_capacity(instance, options, &config)?
    } else {
        solve_instance(instance, options, &config)?
    };
    if result.status == SolveStatus::Error {
        return Err(Error::InvalidSchedule(format!(
            "{}: {}",
            instance_path.display(),
            result.message.as_deref().unwrap_or("solver error")
        )));
    }

    let mut artifacts = BTreeMap::new();
    artifacts.insert("instance".to_string(), instance_path.to_path_buf());
    if let Some(schedule) = &result.schedule {
        let catalog = BatchCatalog::build(instance)?;
        let report = validator::check_schedule(instance, &catalog, schedule, ValidationOptions::default());
        if !report.is_feasible() {
            return Err(Error::InvalidSchedule(report.to_table()));
        }
        let files = [
            ("schedule", "schedule.json", schedule.to_json_pretty()),
            ("validation", "validation.json", report.to_json_pretty()),
            ("gantt", "gantt.csv", export_gantt(instance, &catalog, schedule)?),
        ];
        for (name, file, text) in files {
            let path = run_dir.join(file);
            write(&path, &text)?;
            artifacts.insert(name.to_string(), path);
        }
    }
    let mut iterations: Vec<PathBuf> = std::fs::read_dir(run_dir)
        .map_err(|e| Error::io(run_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("iter_")))
        .collect();
    iterations.sort();
    for dir in iterations {
        let iter = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        for (name, file) in [
            ("model", "model.lp"),
            ("solution", "solution.sol"),
            ("log", "solver.log"),
        ] {
            let path = dir.join(file);
            if path.is_file() {
                artifacts.insert(format!("{iter}/{name}"), path);
            }
        }
    }

    let manifest = RunManifest {
        tool_version: TOOL_VERSION.to_string(),
        instance: instance_path.to_path_buf(),
        instance_hash: instance.content_hash(),
        options,
        lazy,
        solver: config,
        summary: RunSummary::of(&result),
        artifacts,
        started,
        finished: unix_now(),
        notes,
    };
    write(&run_dir.join("manifest.json"), &to_json(&manifest))?;
    Ok((result, manifest))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Suite {
    Sd,
    Sdc,
    Large,
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Sd => "SD",
            Suite::Sdc => "SDC",
            Suite::Large => "large",
        })
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "SD" | "sd" => Ok(Suite::Sd),
            "SDC" | "sdc" => Ok(Suite::Sdc),
            "large" => Ok(Suite::Large),
            _ => Err(format!("unknown suite {s:?}, expected SD, SDC or large")),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentParams {
    pub suite: Suite,
    pub vertices: Vec<usize>,
    pub settings: Vec<Setting>,
    pub outtake: OuttakePolicy,
    pub capacity: i64,
    pub lazy: bool,
    pub jobs: usize,
}

impl ExperimentParams {
    pub fn new(suite: Suite) -> Self {
        let (vertices, settings) = match suite {
            Suite::Sd => (vec![4, 5], vec![Setting::A]),
            Suite::Sdc => (vec![4], vec![Setting::B]),
            Suite::Large => (vec![6, 7], vec![Setting::A]),
        };
        ExperimentParams {
            suite,
            vertices,
            settings,
            outtake: OuttakePolicy::Daily,
            capacity: crate::generate::DEFAULT_CAPACITY,
            lazy: false,
            jobs: 1,
        }
    }

    /// Gap target of the suite: 1e-3, or 1e-4 for the large profile.
    pub fn gap(&self) -> f64 {
        match self.suite {
            Suite::Large => 1e-4,
            _ => 1e-3,
        }
    }

    fn runs(&self) -> Vec<PathExperimentParams> {
        let modes: &[CostMode] = match self.suite {
            Suite::Sdc => &[CostMode::Sd, CostMode::Sdc],
            _ => &[CostMode::Sd],
        };
        let mut out = Vec::new();
        for &l in &self.vertices {
            for &setting in &self.settings {
                for &mode in modes {
                    let mut p = PathExperimentParams::new(l, setting, mode);
                    p.outtake = self.outtake;
                    p.capacity = self.capacity;
                    out.push(p);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentRow {
    pub params: PathExperimentParams,
    pub instance: PathBuf,
    pub run_dir: PathBuf,
    pub summary: RunSummary,
    pub precheck: Vec<String>,
}

/// SDC against SD on one (vertices, setting) cell.
#[derive(Debug, Clone, Serialize)]
pub struct CostComparison {
    pub vertices: usize,
    pub setting: Setting,
    pub sd_intake: Rational,
    pub sdc_intake: Rational,
    pub sd_cost: Rational,
    pub sdc_cost: Rational,
    /// Percent of the SD pumping cost saved by SDC.
    pub improvement_percent: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub tool_version: String,
    pub params: ExperimentParams,
    pub gap: f64,
    pub rows: Vec<ExperimentRow>,
    pub comparisons: Vec<CostComparison>,
}

fn fmt_opt<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or("-".to_string(), |v| v.to_string())
}

impl ExperimentReport {
    /// Plain-text summary: one row per solve, then the SDC comparison.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "suite {}  outtake policy {}  gap target {}",
            self.params.suite, self.params.outtake, self.gap
        );
        let _ = writeln!(
            s,
            "{:>3} {:>3} {:>4} {:>11} {:>9} {:>10} {:>12} {:>8} {:>8}",
            "l", "set", "mode", "status", "time[s]", "gap", "objective", "intake", "pumping"
        );
        for r in &self.rows {
            let gap = r.summary.gap.map_or("-".to_string(), |g| format!("{g:.2e}"));
            let objective = r
                .summary
                .objective
                .map_or("-".to_string(), |o| format!("{:.3}", o.to_f64()));
            let _ = writeln!(
                s,
                "{:>3} {:>3} {:>4} {:>11} {:>9.1} {:>10} {:>12} {:>8} {:>8}",
                r.params.vertices,
                r.params.setting.to_string(),
                r.params.cost_mode.to_string(),
                r.summary.status.as_str(),
                r.summary.wall_time,
                gap,
                objective,
                fmt_opt(&r.summary.intake),
                fmt_opt(&r.summary.pumping_cost),
            );
        }
        if !self.comparisons.is_empty() {
            let _ = writeln!(
                s,
                "\n{:>3} {:>3} {:>9} {:>9} {:>8} {:>8} {:>12}",
                "l", "set", "SD in", "SDC in", "SD cost", "SDC cost", "improvement"
            );
            for c in &self.comparisons {
                let _ = writeln!(
                    s,
                    "{:>3} {:>3} {:>9} {:>9} {:>8} {:>8} {:>11.1}%",
                    c.vertices,
                    c.setting.to_string(),
                    c.sd_intake,
                    c.sdc_intake,
                    c.sd_cost,
                    c.sdc_cost,
                    c.improvement_percent
                );
            }
        }
        for r in self.rows.iter().filter(|r| !r.precheck.is_empty()) {
            for w in &r.precheck {
                let _ = writeln!(s, "warning {}: {w}", r.params.name());
            }
        }
        s
    }
}

fn comparisons(rows: &[ExperimentRow]) -> Vec<CostComparison> {
    let mut out = Vec::new();
    for sdc in rows.iter().filter(|r| r.params.cost_mode == CostMode::Sdc) {
        let Some(sd) = rows.iter().find(|r| {
            r.params.cost_mode == CostMode::Sd
                && r.params.vertices == sdc.params.vertices
                && r.params.setting == sdc.params.setting
        }) else {
            continue;
        };
        let (Some(sd_intake), Some(sdc_intake), Some(sd_cost), Some(sdc_cost)) = (
            sd.summary.intake,
            sdc.summary.intake,
            sd.summary.pumping_cost,
            sdc.summary.pumping_cost,
        ) else {
            continue;
        };
        let improvement_percent = if sd_cost.is_zero() {
            0.0
        } else {
            100.0 * (sd_cost - sdc_cost).to_f64() / sd_cost.to_f64()
        };
        out.push(CostComparison {
            vertices: sdc.params.vertices,
            setting: sdc.params.setting,
            sd_intake,
            sdc_intake,
            sd_cost,
            sdc_cost,
            improvement_percent,
        });
    }
    out
}

/// Generates, solves and validates every instance of a suite under `out_dir`.
///
/// Layout: `instances/<name>.json`, `runs/<name>/…` with one manifest per
/// solve, and `manifest.json` plus `summary.txt` for the whole suite.
pub fn run_experiment(params: &ExperimentParams, solver: &SolverConfig, out_dir: &Path) -> Result<ExperimentReport> {
    if params.vertices.iter().any(|&l| l < 2) {
        return Err(Error::Config("path instances need at least two vertices".into()));
    }
    if params.jobs == 0 {
        return Err(Error::Config("jobs must be positive".into()));
    }
    let solver = solver.clone().with_gap(params.gap());
    solver.check()?;
    let runs = params.runs();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<ExperimentRow>>>> = Mutex::new(runs.iter().map(|_| None).collect());

    let work = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(p) = runs.get(i) else { break };
        let row = run_one(p, params.lazy, &solver, out_dir);
        results.lock().expect("no panics while holding the lock")[i] = Some(row);
    };
    std::thread::scope(|scope| {
        for _ in 0..params.jobs.min(runs.len()).max(1) {
            scope.spawn(work);
        }
    });

    let rows = results
        .into_inner()
        .expect("workers finished")
        .into_iter()
        .map(|r| r.expect("every run visited"))
        .collect::<Result<Vec<_>>>()?;
    let report = ExperimentReport {
        tool_version: TOOL_VERSION.to_string(),
        params: params.clone(),
        gap: params.gap(),
        comparisons: comparisons(&rows),
        rows,
    };
    write(&out_dir.join("manifest.json"), &to_json(&report))?;
    write(&out_dir.join("summary.txt"), &report.to_table())?;
    Ok(report)
}

fn run_one(p: &PathExperimentParams, lazy: bool, solver: &SolverConfig, out_dir: &Path) -> Result<ExperimentRow> {
    let instance = generate_path_instance(p);
    let name = p.name();
    let instance_path = out_dir.join("instances").join(format!("{name}.json"));
    write(&instance_path, &instance.to_json_pretty())?;
    let run_dir = out_dir.join("runs").join(&name);
    let warnings = precheck(&instance);
    let notes = vec![format!("outtake policy: {}", p.outtake)];
    let (_, manifest) = run_and_record(
        &instance,
        &instance_path,
        BuildOptions::default(),
        lazy,
        solver,
        &run_dir,
        notes,
    )?;
    Ok(ExperimentRow {
        params: p.clone(),
        instance: instance_path,
        run_dir,
        summary: manifest.summary,
        precheck: warnings,
    })
}
