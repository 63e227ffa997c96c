use std::collections::HashSet;

use super::*;
use crate::error::Error;
use crate::fixtures;
use crate::instance::{
    BatchOnEdge, DistributionTarget, FixedTransport, Outage, PlanEntry, RegimeExclusionGroup, SizeVariant,
    ThroughputLimit, TimeSet,
};

fn build(inst: &Instance) -> MilpModel {
    build_model(inst, BuildOptions::default()).unwrap()
}

fn placement_id(model: &MilpModel, edge: usize, batch: &str, t: usize) -> usize {
    let b = model.catalog.spec_index(batch).unwrap();
    model.variables.placement(edge, b, t).unwrap()
}

/// Number of starts with `t + len <= t_max`.
fn starts(horizon: usize, len: usize) -> usize {
    (horizon - 1).saturating_sub(len) + 1
}

#[test]
fn t1_variable_and_row_counts() {
    let model = build(&fixtures::t1());
    let placements = starts(24, 6) + starts(24, 3);
    assert_eq!(placements, 39);
    assert_eq!(model.variables.count(VariableKind::Placement), placements);
    assert_eq!(model.variables.count(VariableKind::Endpoint), starts(24, 3));
    assert_eq!(model.variables.count(VariableKind::OccupancyUpper), 2 * 24);
    assert_eq!(model.variables.count(VariableKind::OccupancyLower), 2 * 24);
    assert_eq!(model.count(Family::Packing), 24);
    assert_eq!(model.count(Family::Routes), 0);
    assert_eq!(model.count(Family::CapacityDefinition), 96);
    assert_eq!(model.count(Family::CapacityUpper), 48);
    assert_eq!(model.count(Family::CapacityLower), 48);
    assert_eq!(model.count(Family::Flushing), 3 * starts(24, 3));
    assert_eq!(model.count(Family::Nomination), 2);
    assert_eq!(model.count(Family::HorizonFit), 0);
    assert_eq!(model.metadata.binaries, placements + starts(24, 3));
}

#[test]
fn no_placement_overruns_the_horizon() {
    let model = build(&fixtures::two_edge());
    for var in model.variables.iter() {
        if let VarKey::Placement { batch, t, .. } = var.key {
            assert!(t + model.catalog.spec(batch).length <= model.catalog.t_max);
        }
    }
}

#[test]
fn packing_rows_cover_running_batches() {
    let model = build(&fixtures::t1());
    let names = crate::lp::row_names(&model);
    let row = model
        .constraints
        .iter()
        .zip(&names)
        .find(|(_, n)| *n == "packing_5")
        .map(|(r, _)| r)
        .unwrap();
    // F (length 6) starts 0..=5 and S (length 3) starts 3..=5 run at step 5
    let expected: HashSet<usize> = (0..=5)
        .map(|t| placement_id(&model, 0, "r1:F:standard", t))
        .chain((3..=5).map(|t| placement_id(&model, 0, "r1:S:standard", t)))
        .collect();
    let got: HashSet<usize> = row.terms.iter().map(|&(v, _)| v).collect();
    assert_eq!(got, expected);
    assert_eq!(row.rhs, Rational::ONE);
}

#[test]
fn two_edge_routes_and_flush_fill() {
    let model = build(&fixtures::two_edge());
    let ff = model.catalog.spec_index("r12:F:flush_fill").unwrap();
    assert_eq!(model.catalog.spec(ff).volume, 200);
    assert_eq!(model.catalog.spec(ff).length, 12);
    // one route row per start of every two-edge spec
    assert_eq!(
        model.count(Family::Routes),
        starts(24, 6) + starts(24, 12) + starts(24, 3)
    );
}

#[test]
fn relaxing_terminal_flush_drops_late_follow_ups() {
    let inst = fixtures::t1();
    let strict = build(&inst);
    let relaxed = build_model(
        &inst,
        BuildOptions {
            relax_terminal_flush: true,
            ..Default::default()
        },
    )
    .unwrap();
    // stain ends at tau = t + 3; no batch of length >= 3 fits once tau > 20
    let dropped = (0..=20).filter(|t| t + 3 > 20).count();
    assert_eq!(dropped, 3);
    assert_eq!(
        strict.count(Family::Flushing) - relaxed.count(Family::Flushing),
        dropped
    );
}

#[test]
fn exclusion_rows_follow_the_window_rule() {
    let mut inst = fixtures::two_edge();
    inst.exclusion_groups.push(RegimeExclusionGroup {
        members: vec!["r1".into(), "r12".into()],
    });
    let model = build(&inst);
    assert_eq!(model.count(Family::Exclusion), 24);

    let rows: Vec<&LinearConstraint> = model
        .constraints
        .iter()
        .filter(|r| r.family == Family::Exclusion)
        .collect();
    let together = |a: usize, b: usize| {
        rows.iter()
            .any(|r| r.terms.iter().any(|&(v, _)| v == a) && r.terms.iter().any(|&(v, _)| v == b))
    };
    let f_r1 = |t| placement_id(&model, 0, "r1:F:standard", t);
    let s_r12 = |t| placement_id(&model, 0, "r12:S:standard", t);
    // pairwise rule: conflict iff max(ta - La, tb - Lb, 0) <= min(ta, tb)
    let conflict = |ta: i64, la: i64, tb: i64, lb: i64| (ta - la).max(tb - lb).max(0) <= ta.min(tb);
    for (ta, tb) in [(0, 6), (6, 3), (4, 4), (0, 3), (10, 2)] {
        assert_eq!(
            together(f_r1(ta), s_r12(tb)),
            conflict(ta as i64, 6, tb as i64, 3),
            "F@{ta} S@{tb}"
        );
    }
}

#[test]
fn throughput_counts_initial_batches_unless_per_edge() {
    let mut inst = fixtures::two_edge();
    inst.limits.push(ThroughputLimit {
        edges: vec!["e2".into()],
        product: "S".into(),
        window: TimeSet::range(0, 23),
        limit: 44,
        per_edge: false,
    });
    let model = build(&inst);
    let row = model
        .constraints
        .iter()
        .find(|r| r.family == Family::Throughput)
        .unwrap();
    assert!(row.terms.is_empty());
    assert!(row.is_trivially_satisfied());

    inst.limits[0].per_edge = true;
    let model = build(&inst);
    let row = model
        .constraints
        .iter()
        .find(|r| r.family == Family::Throughput)
        .unwrap();
    assert_eq!(row.terms.len(), starts(24, 3));
    assert!(row.terms.iter().all(|&(_, c)| c == Rational::from_int(44)));
}

#[test]
fn outages_and_fixings() {
    let mut inst = fixtures::t1();
    inst.outages.push(Outage::Transport {
        placements: vec![BatchOnEdge {
            edge: "e1".into(),
            batch: "r1:S:standard".into(),
        }],
        times: TimeSet::range(0, 4),
    });
    inst.fixed_transports.push(FixedTransport {
        regime: "r1".into(),
        product: "F".into(),
        start: 2,
        variant: SizeVariant::Standard,
    });
    let model = build(&inst);
    assert_eq!(model.count(Family::Outage), 5);
    assert_eq!(model.count(Family::Fixed), 1);

    inst.fixed_transports[0].product = "S".into();
    assert!(matches!(
        build_model(&inst, BuildOptions::default()),
        Err(Error::ContradictoryFixings(_))
    ));

    inst.fixed_transports[0].start = 21;
    assert!(matches!(
        build_model(&inst, BuildOptions::default()),
        Err(Error::FixedOutsideHorizon(_))
    ));
}

#[test]
fn tank_outage_lowers_the_ceiling() {
    let mut inst = fixtures::t1();
    inst.outages.push(Outage::Tank {
        site: "A".into(),
        product: "F".into(),
        reduction: 300,
        times: TimeSet::List(vec![3, 4]),
    });
    let model = build(&inst);
    let rhs: Vec<(usize, Rational)> = model
        .constraints
        .iter()
        .filter(|r| r.family == Family::CapacityUpper)
        .filter_map(|r| r.coord.filter(|c| c.product == 0).map(|c| (c.t, r.rhs)))
        .collect();
    assert_eq!(rhs[2].1, Rational::from_int(1000));
    assert_eq!(rhs[3].1, Rational::from_int(700));
    assert_eq!(rhs[4].1, Rational::from_int(700));
}

#[test]
fn objective_coefficients() {
    let mut inst = fixtures::t1();
    inst.weights.gamma = Rational::from_int(2);
    inst.weights.theta = Rational::new(1, 10);
    inst.regimes[0].cost_per_step = Some(Rational::ONE);
    inst.weights.previous_plan = vec![
        PlanEntry {
            edge: "e1".into(),
            batch: "r1:S:standard".into(),
            t: 0,
        },
        PlanEntry {
            edge: "e1".into(),
            batch: "r1:S:standard".into(),
            t: 22,
        },
    ];
    let model = build(&inst);
    let coeff = |v: usize| {
        model
            .objective
            .terms
            .iter()
            .find(|&&(x, _)| x == v)
            .map(|&(_, c)| c)
            .unwrap_or(Rational::ZERO)
    };
    // intake 100, cost 0.1 * 6 steps
    assert_eq!(
        coeff(placement_id(&model, 0, "r1:F:standard", 1)),
        Rational::new(994, 10)
    );
    // intake 44, cost 0.1 * 3, previous-plan agreement 2
    assert_eq!(
        coeff(placement_id(&model, 0, "r1:S:standard", 0)),
        Rational::new(4570, 100)
    );
    // both previous entries count in the constant, even the one past the horizon
    assert_eq!(model.objective.constant, Rational::from_int(-4));
}

#[test]
fn distribution_targets_create_deviation_rows() {
    let mut inst = fixtures::t1();
    inst.weights.beta = Rational::ONE;
    inst.weights.distribution_targets.push(DistributionTarget {
        site: "A".into(),
        product: "S".into(),
        optimal: Some(200),
        k: Some(Rational::from_int(2)),
        signed_weight: None,
    });
    let model = build(&inst);
    assert_eq!(model.count(Family::Distribution), 2);
    assert_eq!(model.variables.count(VariableKind::DistributionDeviation), 1);

    inst.weights.distribution_targets[0].site = "R".into();
    assert!(build_model(&inst, BuildOptions::default()).is_err());
}

#[test]
fn invalid_instance_is_rejected() {
    let mut inst = fixtures::t1();
    inst.regimes[0].edges = vec!["e1".into(), "e1".into()];
    assert!(matches!(
        build_model(&inst, BuildOptions::default()),
        Err(Error::InvalidInstance(_))
    ));
}

#[test]
fn completed_assignment_tracks_occupancy() {
    let inst = fixtures::t1();
    let model = build(&inst);
    let f = placement_id(&model, 0, "r1:F:standard", 0);
    let s = placement_id(&model, 0, "r1:S:standard", 6);
    let flush = placement_id(&model, 0, "r1:F:standard", 9);
    let ones = HashSet::from([f, s, flush]);
    let values = complete_assignment(&model, &ones).unwrap();
    let a = inst.site_index("A").unwrap();
    let upper = |p, t| values[model.variables.upper(a, p, t).unwrap()];
    let lower = |p, t| values[model.variables.lower(a, p, t).unwrap()];
    // F arrives over 0..6: blocked from t=0, on stock from t=6
    assert_eq!(upper(0, 0), Rational::from_int(220));
    assert_eq!(lower(0, 5), Rational::from_int(120));
    assert_eq!(lower(0, 6), Rational::from_int(220));
    assert_eq!(lower(1, 9), Rational::from_int(164));
    assert!(violated_rows(&model, &values).is_empty());
}

#[test]
fn unflushed_stain_violates_flushing() {
    let model = build(&fixtures::t1());
    let s = placement_id(&model, 0, "r1:S:standard", 0);
    let values = complete_assignment(&model, &HashSet::from([s])).unwrap();
    let families: HashSet<Family> = violated_rows(&model, &values)
        .into_iter()
        .map(|i| model.constraints[i].family)
        .collect();
    assert_eq!(families, HashSet::from([Family::Flushing]));
}

#[test]
fn capacity_forms_agree() {
    let inst = fixtures::two_edge();
    let tele = build(&inst);
    let cumu = build_model(
        &inst,
        BuildOptions {
            capacity_form: CapacityForm::Cumulative,
            ..Default::default()
        },
    )
    .unwrap();
    let ones: HashSet<usize> = [
        placement_id(&tele, 0, "r12:F:flush_fill", 0),
        placement_id(&tele, 1, "r12:F:flush_fill", 0),
        placement_id(&tele, 0, "r1:S:standard", 12),
        placement_id(&tele, 0, "r1:F:standard", 15),
    ]
    .into();
    let a = complete_assignment(&tele, &ones).unwrap();
    let b = complete_assignment(&cumu, &ones).unwrap();
    assert_eq!(a, b);
}

#[test]
fn metadata_reports_bounds_and_hash() {
    let model = build(&fixtures::two_edge());
    assert_eq!(model.metadata.counting_error_bounds["A"], 200);
    assert_eq!(model.metadata.counting_error_bounds["B"], 200);
    let json = model.metadata_json();
    assert!(json.contains("\"model_hash\""));
    assert_eq!(model.fingerprint(), build(&fixtures::two_edge()).fingerprint());
}
