//! Capacity bounds added on demand.
//!
//! The model is solved without its capacity bound rows. The incumbent's
//! occupancy is simulated; every bound it breaks is switched on and the model
//! is solved again. An incumbent that breaks no bound is feasible for the
//! full model, and optimal for it whenever it was optimal for the relaxation.

use std::collections::BTreeSet;
use std::time::Instant;

use super::{finish, run_pass, LazyIteration, SolveResult, SolveStatus, SolverConfig};
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::model::{build_model, BuildOptions, Family, MilpModel};
use crate::rational::Rational;
use crate::schedule::Schedule;
use crate::validator;

/// Lazy rows broken by a schedule's simulated occupancy.
fn violated_bounds(
    instance: &Instance,
    model: &MilpModel,
    schedule: &Schedule,
    active: &BTreeSet<usize>,
) -> Result<Vec<usize>> {
    let occupancy = validator::simulate_occupancy(instance, &model.catalog, schedule)?;
    let mut out = Vec::new();
    for (i, row) in model.constraints.iter().enumerate() {
        if !row.lazy || active.contains(&i) {
            continue;
        }
        let Some(coord) = row.coord else { continue };
        let site = &instance.sites[coord.site].id;
        let product = &instance.products[coord.product].id;
        let Some(series) = occupancy.get(site, product) else {
            continue;
        };
        let broken = match row.family {
            Family::CapacityUpper => Rational::from_int(series.upper[coord.t]) > row.rhs,
            Family::CapacityLower => Rational::from_int(series.lower[coord.t]) < row.rhs,
            _ => false,
        };
        if broken {
            out.push(i);
        }
    }
    Ok(out)
}

/// Solves with capacity bounds generated lazily. `options.capacity_lazy` is
/// forced on.
pub fn solve_lazy_capacity(instance: &Instance, options: BuildOptions, config: &SolverConfig) -> Result<SolveResult> {
    config.check()?;
    let options = BuildOptions {
        capacity_lazy: true,
        ..options
    };
    let model = match build_model(instance, options) {
        Ok(model) => model,
        Err(Error::ContradictoryFixings(msg)) => {
            return Ok(SolveResult::without_solution(
                SolveStatus::Infeasible,
                format!("contradictory fixings: {msg}"),
            ))
        }
        Err(e) => return Err(e),
    };
    let started = Instant::now();
    let run_dir = config.run_dir()?;
    let mut active = BTreeSet::new();
    let mut trace = Vec::new();

    for iteration in 0..config.max_iterations {
        let remaining = config.time_limit - started.elapsed().as_secs_f64();
        if remaining <= 0.0 {
            let mut result =
                SolveResult::without_solution(SolveStatus::TimeLimit, "time limit reached between iterations");
            result.iterations = trace;
            result.run_dir = Some(run_dir);
            result.wall_time = started.elapsed().as_secs_f64();
            return Ok(result);
        }
        let dir = run_dir.join(format!("iter_{iteration}"));
        let pass = run_pass(instance, &model, config, &dir, remaining, |(i, r)| {
            !r.lazy || active.contains(&i)
        })?;
        let Some(schedule) = pass.schedule.as_ref() else {
            trace.push(LazyIteration {
                iteration,
                added: 0,
                objective: None,
                status: pass.status,
            });
            return Ok(finish(instance, &model, pass, started, run_dir, trace));
        };
        let added = violated_bounds(instance, &model, schedule, &active)?;
        trace.push(LazyIteration {
            iteration,
            added: added.len(),
            objective: pass.breakdown.as_ref().map(|b| b.total.to_f64()),
            status: pass.status,
        });
        if added.is_empty() {
            return Ok(finish(instance, &model, pass, started, run_dir, trace));
        }
        active.extend(added);
    }

    let mut result = SolveResult::without_solution(
        SolveStatus::Error,
        format!("lazy loop did not settle within {} iterations", config.max_iterations),
    );
    result.iterations = trace;
    result.run_dir = Some(run_dir);
    result.model_hash = Some(model.fingerprint());
    result.wall_time = started.elapsed().as_secs_f64();
    Ok(result)
}
