use std::collections::{BTreeSet, HashSet};

use serde::Serialize;

use super::{Instance, Outage, SiteKind, TimeSet};
use crate::rational::Rational;

/// Machine-readable category of an instance defect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationCode {
    DuplicateId,
    UnknownReference,
    NonPositiveUnitVolume,
    EdgeSelfLoop,
    NegativePipeVolume,
    RegimeEmptyPath,
    RegimePathNotSimple,
    RegimePathDisconnected,
    NonPositiveFlowRate,
    RegimeNoProducts,
    NegativeCost,
    EdgeWithoutRegime,
    HorizonEmpty,
    NegativeInitialOccupancy,
    CapacityMinExceedsMax,
    ProfileLengthMismatch,
    TimeOutOfRange,
    NonPositiveStandardBatch,
    NominationNotRefinery,
    NegativeNomination,
    NegativeOutageReduction,
    EmptyOutageSet,
    NegativeLimit,
    EmptyWindow,
    ExclusionGroupTooSmall,
    NegativeWeight,
    InvalidDistributionTarget,
    ExecutedNotInPreviousPlan,
    NonPositiveStepHours,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub message: String,
}

struct Report(Vec<Violation>);

impl Report {
    fn push(&mut self, code: ViolationCode, message: impl Into<String>) {
        self.0.push(Violation {
            code,
            message: message.into(),
        });
    }
}

/// Checks every structural invariant of an instance. An empty list means
/// the instance is valid.
pub fn validate_instance(instance: &Instance) -> Vec<Violation> {
    use ViolationCode::*;
    let mut r = Report(Vec::new());
    let horizon = instance.horizon.len;

    if horizon == 0 {
        r.push(HorizonEmpty, "horizon must contain at least one time step");
    }
    if !instance.horizon.step_hours.is_positive() {
        r.push(NonPositiveStepHours, "step duration must be positive");
    }

    check_unique(&mut r, "product", instance.products.iter().map(|p| &p.id));
    check_unique(&mut r, "site", instance.sites.iter().map(|s| &s.id));
    check_unique(&mut r, "edge", instance.edges.iter().map(|e| &e.id));
    check_unique(&mut r, "regime", instance.regimes.iter().map(|g| &g.id));

    let product_known = |id: &str| instance.product_index(id).is_some();

    for p in &instance.products {
        if !p.unit_volume.is_positive() {
            r.push(
                NonPositiveUnitVolume,
                format!("product {} has non-positive unit volume", p.id),
            );
        }
    }

    for site in &instance.sites {
        for (product, size) in &site.standard_batch {
            if !product_known(product) {
                unknown(
                    &mut r,
                    "product",
                    product,
                    &format!("standard batch of site {}", site.id),
                );
            } else if *size <= 0 {
                r.push(
                    NonPositiveStandardBatch,
                    format!("site {} has non-positive standard batch for {product}", site.id),
                );
            }
        }
        for product in site
            .capacity_max
            .keys()
            .chain(site.capacity_min.keys())
            .chain(site.initial_occupancy.keys())
            .chain(site.base_deltas.iter().map(|d| &d.product))
        {
            if !product_known(product) {
                unknown(&mut r, "product", product, &format!("site {}", site.id));
            }
        }
        for profile in site.capacity_max.values().chain(site.capacity_min.values()) {
            if let super::Profile::Series(values) = profile {
                if values.len() != horizon {
                    r.push(
                        ProfileLengthMismatch,
                        format!(
                            "site {} has a capacity series of length {} for a horizon of {horizon}",
                            site.id,
                            values.len()
                        ),
                    );
                }
            }
        }
        for d in &site.base_deltas {
            if d.t >= horizon {
                r.push(
                    TimeOutOfRange,
                    format!("base delta of site {} at t={} is outside the horizon", site.id, d.t),
                );
            }
        }
        if site.kind == SiteKind::Storage && horizon > 0 {
            for product in &instance.products {
                let base = instance.base_occupancy(site, &product.id);
                if base[0] < 0 {
                    r.push(
                        NegativeInitialOccupancy,
                        format!(
                            "site {} starts with negative occupancy {} of {}",
                            site.id, base[0], product.id
                        ),
                    );
                }
                for t in 0..horizon {
                    if let Some(max) = instance.nominal_capacity_max(site, &product.id, t) {
                        let min = instance.capacity_min(site, &product.id, t);
                        if min > max {
                            r.push(
                                CapacityMinExceedsMax,
                                format!(
                                    "site {} product {} at t={t}: minimum {min} exceeds maximum {max}",
                                    site.id, product.id
                                ),
                            );
                            break;
                        }
                    }
                }
            }
        }
    }

    for edge in &instance.edges {
        for end in [&edge.origin, &edge.destination] {
            if instance.site_index(end).is_none() {
                unknown(&mut r, "site", end, &format!("edge {}", edge.id));
            }
        }
        if edge.origin == edge.destination {
            r.push(
                EdgeSelfLoop,
                format!("edge {} starts and ends at {}", edge.id, edge.origin),
            );
        }
        if edge.pipe_volume < 0 {
            r.push(NegativePipeVolume, format!("edge {} has negative pipe volume", edge.id));
        }
    }

    let mut covered_edges = HashSet::new();
    for regime in &instance.regimes {
        if regime.edges.is_empty() {
            r.push(RegimeEmptyPath, format!("regime {} has no edges", regime.id));
        }
        let mut seen = HashSet::new();
        let mut visited_sites = HashSet::new();
        let mut simple = true;
        for e in &regime.edges {
            covered_edges.insert(e.as_str());
            if !seen.insert(e.as_str()) {
                simple = false;
            }
            match instance.edge(e) {
                None => unknown(&mut r, "edge", e, &format!("regime {}", regime.id)),
                Some(edge) => {
                    if visited_sites.is_empty() {
                        visited_sites.insert(edge.origin.as_str());
                    }
                    if !visited_sites.insert(edge.destination.as_str()) {
                        simple = false;
                    }
                }
            }
        }
        if !simple {
            r.push(
                RegimePathNotSimple,
                format!("regime path not simple: regime {} revisits an edge or site", regime.id),
            );
        }
        for pair in regime.edges.windows(2) {
            if let (Some(a), Some(b)) = (instance.edge(&pair[0]), instance.edge(&pair[1])) {
                if a.destination != b.origin {
                    r.push(
                        RegimePathDisconnected,
                        format!(
                            "regime {}: edge {} ends at {} but edge {} starts at {}",
                            regime.id, a.id, a.destination, b.id, b.origin
                        ),
                    );
                }
            }
        }
        if regime.flow_rate.is_empty() {
            r.push(RegimeNoProducts, format!("regime {} has no flow rates", regime.id));
        }
        for (product, rate) in &regime.flow_rate {
            if !product_known(product) {
                unknown(&mut r, "product", product, &format!("regime {}", regime.id));
            }
            if !rate.is_positive() {
                r.push(
                    NonPositiveFlowRate,
                    format!("regime {} has non-positive flow rate for {product}", regime.id),
                );
            }
        }
        for e in regime.pass_times.keys() {
            if !regime.edges.contains(e) {
                unknown(&mut r, "edge", e, &format!("pass times of regime {}", regime.id));
            }
        }
        if regime.flush_volume.is_some_and(|v| v <= 0) {
            r.push(
                NonPositiveStandardBatch,
                format!("regime {} has non-positive flush volume", regime.id),
            );
        }
        if regime.cost_per_step.is_some_and(|c| c.is_negative())
            || regime.cost_per_batch.values().any(|c| c.is_negative())
        {
            r.push(NegativeCost, format!("regime {} has a negative batch cost", regime.id));
        }
    }
    for edge in &instance.edges {
        if !covered_edges.contains(edge.id.as_str()) {
            r.push(EdgeWithoutRegime, format!("edge {} is not used by any regime", edge.id));
        }
    }

    for nomination in &instance.nominations {
        match instance.site(&nomination.refinery) {
            None => unknown(&mut r, "site", &nomination.refinery, "nomination"),
            Some(site) if site.kind != SiteKind::Refinery => r.push(
                NominationNotRefinery,
                format!("nomination site {} is not a refinery", site.id),
            ),
            _ => {}
        }
        for limit in &nomination.limits {
            if !product_known(&limit.product) {
                unknown(&mut r, "product", &limit.product, "nomination");
            }
            if limit.max_volume < 0 {
                r.push(
                    NegativeNomination,
                    format!(
                        "nomination of {} for {} is negative",
                        nomination.refinery, limit.product
                    ),
                );
            }
        }
    }

    for outage in &instance.outages {
        match outage {
            Outage::Tank {
                site,
                product,
                reduction,
                times,
            } => {
                if instance.site_index(site).is_none() {
                    unknown(&mut r, "site", site, "tank outage");
                }
                if !product_known(product) {
                    unknown(&mut r, "product", product, "tank outage");
                }
                if *reduction < 0 {
                    r.push(
                        NegativeOutageReduction,
                        format!("tank outage on {site} has negative reduction"),
                    );
                }
                check_times(&mut r, times, horizon, "tank outage");
            }
            Outage::Transport { placements, times } => {
                for p in placements {
                    if instance.edge_index(&p.edge).is_none() {
                        unknown(&mut r, "edge", &p.edge, "transport outage");
                    }
                }
                if placements.is_empty() {
                    r.push(EmptyOutageSet, "transport outage lists no batches");
                }
                check_times(&mut r, times, horizon, "transport outage");
            }
        }
    }

    for limit in &instance.limits {
        for e in &limit.edges {
            if instance.edge_index(e).is_none() {
                unknown(&mut r, "edge", e, "throughput limit");
            }
        }
        if !product_known(&limit.product) {
            unknown(&mut r, "product", &limit.product, "throughput limit");
        }
        if limit.limit < 0 {
            r.push(NegativeLimit, "throughput limit is negative");
        }
        if limit.window.is_empty() {
            r.push(EmptyWindow, "throughput limit window is empty");
        }
        check_times(&mut r, &limit.window, horizon, "throughput limit window");
    }

    for group in &instance.exclusion_groups {
        let distinct: BTreeSet<&str> = group.members.iter().map(String::as_str).collect();
        if distinct.len() < 2 {
            r.push(
                ExclusionGroupTooSmall,
                "exclusion group needs at least two distinct regimes",
            );
        }
        for m in &group.members {
            if instance.regime_index(m).is_none() {
                unknown(&mut r, "regime", m, "exclusion group");
            }
        }
    }

    let w = &instance.weights;
    for (name, value) in [
        ("alpha", w.alpha),
        ("beta", w.beta),
        ("gamma", w.gamma),
        ("theta", w.theta),
    ] {
        if value.is_negative() {
            r.push(NegativeWeight, format!("weight {name} is negative"));
        }
    }
    for (product, eta) in &w.eta {
        if !product_known(product) {
            unknown(&mut r, "product", product, "eta");
        }
        if eta.is_negative() {
            r.push(NegativeWeight, format!("eta of {product} is negative"));
        }
    }
    for target in &w.distribution_targets {
        if instance.site_index(&target.site).is_none() {
            unknown(&mut r, "site", &target.site, "distribution target");
        }
        if !product_known(&target.product) {
            unknown(&mut r, "product", &target.product, "distribution target");
        }
        let valid = match (target.optimal, target.k, target.signed_weight) {
            (Some(opt), Some(k), None) => opt >= 0 && k > Rational::ZERO,
            (None, None, Some(_)) => true,
            _ => false,
        };
        if !valid {
            r.push(
                InvalidDistributionTarget,
                format!(
                    "distribution target {}/{} needs either optimal >= 0 with k > 0, or signed_weight",
                    target.site, target.product
                ),
            );
        }
    }
    let previous: HashSet<_> = w.previous_plan.iter().collect();
    for entry in w.previous_plan.iter().chain(&w.executed) {
        if instance.edge_index(&entry.edge).is_none() {
            unknown(&mut r, "edge", &entry.edge, "plan entry");
        }
        if entry.t >= horizon {
            r.push(
                TimeOutOfRange,
                format!("plan entry at t={} is outside the horizon", entry.t),
            );
        }
    }
    for entry in &w.executed {
        if !previous.contains(entry) {
            r.push(
                ExecutedNotInPreviousPlan,
                format!(
                    "executed entry {}/{}@{} is not part of the previous plan",
                    entry.edge, entry.batch, entry.t
                ),
            );
        }
    }

    for fixed in &instance.fixed_transports {
        match instance.regime(&fixed.regime) {
            None => unknown(&mut r, "regime", &fixed.regime, "fixed transport"),
            Some(regime) if !regime.flow_rate.contains_key(&fixed.product) => unknown(
                &mut r,
                "product",
                &fixed.product,
                &format!("fixed transport on regime {}", regime.id),
            ),
            _ => {}
        }
        if fixed.start >= horizon {
            r.push(
                TimeOutOfRange,
                format!("fixed transport at t={} is outside the horizon", fixed.start),
            );
        }
    }

    r.0
}

fn check_unique<'a>(r: &mut Report, kind: &str, ids: impl Iterator<Item = &'a String>) {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            r.push(ViolationCode::DuplicateId, format!("duplicate {kind} id {id}"));
        }
    }
}

fn unknown(r: &mut Report, kind: &str, id: &str, context: &str) {
    r.push(
        ViolationCode::UnknownReference,
        format!("{context} references unknown {kind} {id}"),
    );
}

fn check_times(r: &mut Report, times: &TimeSet, horizon: usize, context: &str) {
    if times.max().is_some_and(|t| t >= horizon) {
        r.push(
            ViolationCode::TimeOutOfRange,
            format!("{context} extends beyond the horizon"),
        );
    }
}
