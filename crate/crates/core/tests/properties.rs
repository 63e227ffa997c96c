use std::collections::HashSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pipesched::generate::{generate_oracle_instance, generate_path_instance, CostMode, PathExperimentParams, Setting};
use pipesched::model::{complete_assignment, violated_rows, VarKey};
use pipesched::oracle::{brute_force_optimum, OracleLimits, OracleOutcome};
use pipesched::validator::{check_schedule, evaluate_objective, ValidationOptions};
use pipesched::{build_model, lp, BuildOptions, Instance, KeyPolicy, MilpModel, Schedule};

/// Random placement set: a few whole chains, sometimes with a chain member
/// dropped or a stray placement added.
fn random_ones(model: &MilpModel, seed: u64) -> HashSet<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let placements: Vec<(usize, usize, usize, usize)> = model
        .variables
        .iter()
        .filter_map(|v| match v.key {
            VarKey::Placement { edge, batch, t } => Some((v.id, edge, batch, t)),
            _ => None,
        })
        .collect();
    let mut ones = HashSet::new();
    if placements.is_empty() {
        return ones;
    }
    for _ in 0..rng.gen_range(0..=5) {
        let (_, _, batch, t) = placements[rng.gen_range(0..placements.len())];
        for &(id, _, b, s) in &placements {
            if b == batch && s == t {
                ones.insert(id);
            }
        }
    }
    if rng.gen_bool(0.15) && !ones.is_empty() {
        let drop = *ones.iter().min().unwrap();
        ones.remove(&drop);
    }
    if rng.gen_bool(0.15) {
        ones.insert(placements[rng.gen_range(0..placements.len())].0);
    }
    ones
}

fn schedule_of(instance: &Instance, model: &MilpModel, ones: &HashSet<usize>) -> Schedule {
    let mut schedule = Schedule::new();
    for &id in ones {
        if let VarKey::Placement { edge, batch, t } = model.variables[id].key {
            schedule.insert(&instance.edges[edge].id, &model.catalog.spec(batch).id, t);
        }
    }
    schedule
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    /// The model and the validator accept exactly the same placement sets and
    /// score accepted ones identically.
    #[test]
    fn model_and_validator_agree(instance_seed in 0u64..400, pick in any::<u64>()) {
        let instance = generate_oracle_instance(instance_seed, &OracleLimits::default());
        let model = build_model(&instance, BuildOptions::default()).unwrap();
        let ones = random_ones(&model, pick);
        let values = complete_assignment(&model, &ones).expect("definitions resolve");
        let broken = violated_rows(&model, &values);
        let schedule = schedule_of(&instance, &model, &ones);
        let report = check_schedule(&instance, &model.catalog, &schedule, ValidationOptions::default());
        let families: Vec<_> = broken.iter().map(|&i| model.constraints[i].family).collect();
        prop_assert_eq!(broken.is_empty(), report.is_feasible(), "model rows {:?}, validator {:?}", families, report.families());
        if report.is_feasible() {
            let scored = evaluate_objective(&instance, &model.catalog, &schedule).total;
            prop_assert_eq!(scored, model.objective.evaluate(&values));
        }
    }

    /// No validator-clean schedule beats the exhaustive optimum.
    #[test]
    fn oracle_dominates_feasible_schedules(instance_seed in 0u64..200, pick in any::<u64>()) {
        let instance = generate_oracle_instance(instance_seed, &OracleLimits::default());
        let model = build_model(&instance, BuildOptions::default()).unwrap();
        let schedule = schedule_of(&instance, &model, &random_ones(&model, pick));
        let report = check_schedule(&instance, &model.catalog, &schedule, ValidationOptions::default());
        let outcome = brute_force_optimum(&instance, OracleLimits::default()).unwrap();
        if report.is_feasible() {
            let scored = evaluate_objective(&instance, &model.catalog, &schedule).total;
            match outcome {
                OracleOutcome::Optimal { objective, .. } => prop_assert!(objective >= scored),
                other => prop_assert!(false, "feasible schedule exists but oracle says {:?}", other),
            }
        }
    }

    #[test]
    fn oracle_instances_are_valid_and_reproducible(seed in any::<u64>()) {
        let a = generate_oracle_instance(seed, &OracleLimits::default());
        prop_assert!(a.ensure_valid().is_ok());
        prop_assert!(a.edges.len() <= 2 && a.horizon.len <= 24 && a.products.len() <= 2);
        let b = generate_oracle_instance(seed, &OracleLimits::default());
        prop_assert_eq!(a.to_json_pretty(), b.to_json_pretty());
    }

    #[test]
    fn instance_documents_round_trip(seed in 0u64..1000) {
        let a = generate_oracle_instance(seed, &OracleLimits::default());
        let b = Instance::from_json_str(&a.to_json_pretty(), KeyPolicy::Strict).unwrap();
        prop_assert_eq!(a.content_hash(), b.content_hash());
        prop_assert_eq!(lp::write_lp(&build_model(&a, BuildOptions::default()).unwrap()),
                        lp::write_lp(&build_model(&b, BuildOptions::default()).unwrap()));
    }

    #[test]
    fn path_batches_are_six_and_three_steps(l in 2usize..9, s in 0usize..3, sdc in any::<bool>()) {
        let mode = if sdc { CostMode::Sdc } else { CostMode::Sd };
        let inst = generate_path_instance(&PathExperimentParams::new(l, Setting::ALL[s], mode));
        let catalog = pipesched::BatchCatalog::build(&inst).unwrap();
        for spec in catalog.specs.iter().filter(|s| s.variant == pipesched::instance::SizeVariant::Standard) {
            let expected = if spec.is_staining() { 3 } else { 6 };
            prop_assert_eq!(spec.length, expected, "{}", spec.id);
        }
        prop_assert!(inst.ensure_valid().is_ok());
    }
}
