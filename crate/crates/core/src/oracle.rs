//! Exhaustive search for optimal schedules of tiny instances.
//!
//! Depth-first over initial placements in canonical (edge, batch, t) order,
//! trying inclusion before exclusion. Constraints that can only get worse as
//! more batches are added are checked on inclusion; the rest at the leaves.
//! A leaf is scored exactly and the search prunes on an optimistic bound.
//! The winner is re-checked with the validator before it is returned.

use std::collections::{HashMap, HashSet};

use serde::Serialize;

use crate::catalog::{batch_spec_id, BatchCatalog};
use crate::error::{Error, Result};
use crate::instance::{Instance, Outage};
use crate::rational::Rational;
use crate::schedule::Schedule;
use crate::validator::{self, ValidationOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OracleLimits {
    pub max_edges: usize,
    pub max_horizon: usize,
    pub max_candidates: usize,
    pub node_budget: u64,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits {
            max_edges: 2,
            max_horizon: 24,
            max_candidates: 256,
            node_budget: 200_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum OracleOutcome {
    Optimal {
        objective: Rational,
        schedule: Schedule,
        nodes: u64,
    },
    Infeasible {
        nodes: u64,
    },
    BudgetExceeded {
        nodes: u64,
    },
}

impl OracleOutcome {
    pub fn objective(&self) -> Option<Rational> {
        match self {
            OracleOutcome::Optimal { objective, .. } => Some(*objective),
            _ => None,
        }
    }
}

/// One initial placement and everything it touches.
#[derive(Debug, Clone)]
struct Candidate {
    batch: usize,
    t: usize,
    len: usize,
    volume: i64,
    product: usize,
    staining: bool,
    initial_edge: usize,
    chain: Vec<usize>,
    intake: Rational,
    cost: Rational,
    nomination: Vec<usize>,
    throughput: Vec<(usize, i64)>,
    arrives: Option<usize>,
    departs: Option<usize>,
    groups: Vec<usize>,
    forbidden: bool,
    required: bool,
    prev_hits: usize,
    flushers: Vec<usize>,
}

/// Per (site, product) occupancy tracking.
#[derive(Debug, Clone)]
struct Store {
    upper: Vec<i64>,
    lower: Vec<i64>,
    ceiling: Vec<Option<i64>>,
    floor: Vec<i64>,
    has_departures: bool,
}

struct Search<'a> {
    instance: &'a Instance,
    cands: Vec<Candidate>,
    stores: Vec<Store>,
    store_index: HashMap<(usize, usize), usize>,
    busy: Vec<Vec<bool>>,
    /// Staining starts per edge as (t, product, end); the end is only kept
    /// on a chain's initial edge.
    stains: Vec<Vec<(usize, usize, usize)>>,
    nomination_room: Vec<i64>,
    nomination_weight: Vec<Rational>,
    throughput_room: Vec<i64>,
    group_runs: Vec<Vec<(usize, usize)>>,
    chosen: Vec<usize>,
    chosen_set: HashSet<(usize, usize)>,
    intake: Rational,
    cost: Rational,
    missed: usize,
    /// Remaining nominated volume per nomination key from candidate i on.
    suffix_nominated: Vec<Vec<i64>>,
    suffix_arrivals: Vec<Vec<i64>>,
    suffix_departures: Vec<Vec<i64>>,
    nodes: u64,
    budget: u64,
    best: Option<(Rational, Vec<usize>)>,
}

/// Optimal objective and one optimal schedule, found by enumeration.
pub fn brute_force_optimum(instance: &Instance, limits: OracleLimits) -> Result<OracleOutcome> {
    instance.ensure_valid()?;
    if instance.edges.len() > limits.max_edges || instance.horizon.len > limits.max_horizon {
        return Err(Error::Config(format!(
            "instance exceeds oracle limits ({} edges, horizon {})",
            instance.edges.len(),
            instance.horizon.len
        )));
    }
    let catalog = BatchCatalog::build(instance)?;
    let mut search = Search::new(instance, &catalog)?;
    if search.cands.len() > limits.max_candidates {
        return Err(Error::Config(format!(
            "instance has {} candidate placements, limit is {}",
            search.cands.len(),
            limits.max_candidates
        )));
    }
    search.budget = limits.node_budget;
    if !search.descend(0) {
        return Ok(OracleOutcome::BudgetExceeded { nodes: search.nodes });
    }
    let nodes = search.nodes;
    let Some((objective, picks)) = search.best.clone() else {
        return Ok(OracleOutcome::Infeasible { nodes });
    };
    let starts: Vec<(usize, usize)> = picks
        .iter()
        .map(|&i| (search.cands[i].batch, search.cands[i].t))
        .collect();
    let schedule = Schedule::from_starts(instance, &catalog, &starts);
    let report = validator::check_schedule(instance, &catalog, &schedule, ValidationOptions::default());
    if !report.is_feasible() {
        return Err(Error::InvalidSchedule(format!(
            "oracle optimum rejected by the validator:\n{}",
            report.to_table()
        )));
    }
    let scored = validator::evaluate_objective(instance, &catalog, &schedule).total;
    if scored != objective {
        return Err(Error::ObjectiveMismatch {
            reported: objective.to_f64(),
            recomputed: scored.to_f64(),
        });
    }
    Ok(OracleOutcome::Optimal {
        objective,
        schedule,
        nodes,
    })
}

impl<'a> Search<'a> {
    fn new(instance: &'a Instance, catalog: &'a BatchCatalog) -> Result<Self> {
        let len = instance.horizon.len;
        let w = &instance.weights;

        let mut stores = Vec::new();
        let mut store_index = HashMap::new();
        let mut reductions: HashMap<(usize, usize, usize), i64> = HashMap::new();
        for outage in &instance.outages {
            if let Outage::Tank {
                site,
                product,
                reduction,
                times,
            } = outage
            {
                if let (Some(s), Some(p)) = (instance.site_index(site), instance.product_index(product)) {
                    for t in times.to_vec() {
                        *reductions.entry((s, p, t)).or_default() += reduction;
                    }
                }
            }
        }
        for (s, site) in instance.storage_sites() {
            for (p, product) in instance.products.iter().enumerate() {
                let base = instance.base_occupancy(site, &product.id);
                let ceiling = (0..len)
                    .map(|t| {
                        instance
                            .nominal_capacity_max(site, &product.id, t)
                            .map(|c| c - reductions.get(&(s, p, t)).copied().unwrap_or(0))
                    })
                    .collect();
                let floor = (0..len).map(|t| instance.capacity_min(site, &product.id, t)).collect();
                store_index.insert((s, p), stores.len());
                stores.push(Store {
                    upper: base.clone(),
                    lower: base,
                    ceiling,
                    floor,
                    has_departures: false,
                });
            }
        }

        let mut nomination_keys: HashMap<(String, usize), usize> = HashMap::new();
        let mut nomination_room: Vec<i64> = Vec::new();
        let mut nomination_weight = Vec::new();
        for nom in &instance.nominations {
            for lim in &nom.limits {
                let p = instance.product_index(&lim.product).expect("valid instance");
                let key = (nom.refinery.clone(), p);
                match nomination_keys.get(&key) {
                    Some(&k) => nomination_room[k] = nomination_room[k].min(lim.max_volume),
                    None => {
                        nomination_keys.insert(key, nomination_room.len());
                        nomination_room.push(lim.max_volume);
                        nomination_weight.push(w.eta(&lim.product));
                    }
                }
            }
        }

        let mut forbidden: HashSet<(usize, usize, usize)> = HashSet::new();
        for outage in &instance.outages {
            if let Outage::Transport { placements, times } = outage {
                for p in placements {
                    if let (Some(e), Some(b)) = (instance.edge_index(&p.edge), catalog.spec_index(&p.batch)) {
                        for t in times.to_vec() {
                            forbidden.insert((e, b, t));
                        }
                    }
                }
            }
        }
        let mut required: HashSet<(usize, usize)> = HashSet::new();
        for fixed in &instance.fixed_transports {
            let id = batch_spec_id(&fixed.regime, &fixed.product, fixed.variant);
            let b = catalog.spec_index(&id).ok_or_else(|| Error::UnknownReference {
                kind: "batch",
                id: id.clone(),
            })?;
            required.insert((b, fixed.start));
        }
        for entry in &w.executed {
            if let Some(b) = catalog.spec_index(&entry.batch) {
                required.insert((b, entry.t));
            }
        }
        let mut prev: HashMap<(usize, usize, usize), usize> = HashMap::new();
        let mut unmatched_prev = 0;
        for entry in &w.previous_plan {
            match (instance.edge_index(&entry.edge), catalog.spec_index(&entry.batch)) {
                (Some(e), Some(b)) => *prev.entry((e, b, entry.t)).or_default() += 1,
                _ => unmatched_prev += 1,
            }
        }

        let mut cands = Vec::new();
        for (edge, placed) in catalog.per_edge.iter().enumerate() {
            for pb in placed.iter().filter(|pb| pb.classification.is_initial()) {
                let spec = catalog.spec(pb.batch);
                let Some(last) = catalog.last_start(pb.batch) else {
                    continue;
                };
                let origin = &instance.edges[spec.initial_edge()].origin;
                let dest = &instance.edges[spec.final_edge()].destination;
                let nomination: Vec<usize> = nomination_keys
                    .get(&(origin.clone(), spec.product))
                    .into_iter()
                    .copied()
                    .collect();
                let intake = nomination.first().map_or(Rational::ZERO, |&k| {
                    nomination_weight[k] * Rational::from_int(spec.volume)
                });
                let flushers: Vec<usize> = catalog.flush_set(edge, pb.batch).to_vec();
                for t in 0..=last {
                    let mut throughput = Vec::new();
                    for (i, limit) in instance.limits.iter().enumerate() {
                        if instance.products[spec.product].id != limit.product || !limit.window.contains(t) {
                            continue;
                        }
                        let hits = spec
                            .chain
                            .iter()
                            .enumerate()
                            .filter(|&(pos, &e)| {
                                limit.edges.contains(&instance.edges[e].id) && (limit.per_edge || pos == 0)
                            })
                            .count() as i64;
                        if hits > 0 {
                            throughput.push((i, hits * spec.volume));
                        }
                    }
                    let groups = instance
                        .exclusion_groups
                        .iter()
                        .enumerate()
                        .filter(|(_, g)| g.members.contains(&instance.regimes[spec.regime].id))
                        .map(|(i, _)| i)
                        .collect();
                    let site_of = |id: &str| instance.site_index(id);
                    let arrives = site_of(dest).and_then(|s| store_index.get(&(s, spec.product)).copied());
                    let departs = site_of(origin).and_then(|s| store_index.get(&(s, spec.product)).copied());
                    let is_forbidden = spec.chain.iter().any(|&e| forbidden.contains(&(e, pb.batch, t)));
                    let prev_hits = spec
                        .chain
                        .iter()
                        .map(|&e| prev.get(&(e, pb.batch, t)).copied().unwrap_or(0))
                        .sum();
                    cands.push(Candidate {
                        batch: pb.batch,
                        t,
                        len: spec.length,
                        volume: spec.volume,
                        product: spec.product,
                        staining: spec.is_staining(),
                        initial_edge: edge,
                        chain: spec.chain.clone(),
                        intake,
                        cost: spec.cost * Rational::from_int(spec.chain.len() as i64),
                        nomination: nomination.clone(),
                        throughput,
                        arrives,
                        departs,
                        groups,
                        forbidden: is_forbidden,
                        required: required.contains(&(pb.batch, t)),
                        prev_hits,
                        flushers: flushers.clone(),
                    });
                }
            }
        }
        for c in &cands {
            if let Some(d) = c.departs {
                stores[d].has_departures = true;
            }
        }
        // prev entries that no candidate can realize are missed for sure
        let realizable: usize = cands.iter().map(|c| c.prev_hits).sum();
        let missed = unmatched_prev + prev.values().sum::<usize>() - realizable;

        let n = cands.len();
        let mut suffix_nominated = vec![vec![0i64; nomination_room.len()]; n + 1];
        let mut suffix_arrivals = vec![vec![0i64; stores.len()]; n + 1];
        let mut suffix_departures = vec![vec![0i64; stores.len()]; n + 1];
        for i in (0..n).rev() {
            suffix_nominated[i] = suffix_nominated[i + 1].clone();
            suffix_arrivals[i] = suffix_arrivals[i + 1].clone();
            suffix_departures[i] = suffix_departures[i + 1].clone();
            let c = &cands[i];
            for &k in &c.nomination {
                suffix_nominated[i][k] += c.volume;
            }
            if let Some(a) = c.arrives {
                suffix_arrivals[i][a] += c.volume;
            }
            if let Some(d) = c.departs {
                suffix_departures[i][d] += c.volume;
            }
        }

        Ok(Search {
            instance,
            cands,
            stores,
            store_index,
            busy: vec![vec![false; len]; instance.edges.len()],
            stains: vec![Vec::new(); instance.edges.len()],
            nomination_room,
            nomination_weight,
            throughput_room: instance.limits.iter().map(|l| l.limit).collect(),
            group_runs: vec![Vec::new(); instance.exclusion_groups.len()],
            chosen: Vec::new(),
            chosen_set: HashSet::new(),
            intake: Rational::ZERO,
            cost: Rational::ZERO,
            missed,
            suffix_nominated,
            suffix_arrivals,
            suffix_departures,
            nodes: 0,
            budget: 0,
            best: None,
        })
    }

    /// Explores candidates `i..`; false once the node budget is spent.
    fn descend(&mut self, i: usize) -> bool {
        self.nodes += 1;
        if self.nodes > self.budget {
            return false;
        }
        if let Some((best, _)) = &self.best {
            if self.bound(i) <= *best {
                return true;
            }
        }
        if self.stranded(i) {
            return true;
        }
        if i == self.cands.len() {
            self.leaf();
            return true;
        }
        if self.can_include(i) {
            self.apply(i, true);
            let ok = self.descend(i + 1);
            self.apply(i, false);
            if !ok {
                return false;
            }
        }
        if !self.cands[i].required {
            self.missed += self.cands[i].prev_hits;
            let ok = self.descend(i + 1);
            self.missed -= self.cands[i].prev_hits;
            if !ok {
                return false;
            }
        }
        true
    }

    /// A bound broken with no remaining candidate able to repair it.
    fn stranded(&self, i: usize) -> bool {
        self.stores.iter().enumerate().any(|(k, s)| {
            let low = self.suffix_arrivals[i][k] == 0 && (0..s.lower.len()).any(|t| s.lower[t] < s.floor[t]);
            let high = self.suffix_departures[i][k] == 0
                && (0..s.upper.len()).any(|t| s.ceiling[t].is_some_and(|c| s.upper[t] > c));
            low || high
        })
    }

    fn can_include(&self, i: usize) -> bool {
        let c = &self.cands[i];
        if c.forbidden {
            return false;
        }
        for &e in &c.chain {
            if self.busy[e][c.t..c.t + c.len].iter().any(|&b| b) {
                return false;
            }
        }
        for &k in &c.nomination {
            if c.volume > self.nomination_room[k] {
                return false;
            }
        }
        for &(l, v) in &c.throughput {
            if v > self.throughput_room[l] {
                return false;
            }
        }
        for &g in &c.groups {
            for &(t, len) in &self.group_runs[g] {
                let lo = (t as i64 - len as i64).max(c.t as i64 - c.len as i64).max(0);
                if lo <= t.min(c.t) as i64 {
                    return false;
                }
            }
        }
        if c.staining {
            // another staining product must not start where a stain ends
            for &e in &c.chain {
                if self.stains[e].iter().any(|&(_, p, end)| end == c.t && p != c.product) {
                    return false;
                }
            }
            let end = c.t + c.len;
            if self.stains[c.initial_edge]
                .iter()
                .any(|&(t, p, _)| t == end && p != c.product)
            {
                return false;
            }
        }
        if let Some(a) = c.arrives {
            let s = &self.stores[a];
            if !s.has_departures {
                let over = (c.t..s.upper.len()).any(|t| s.ceiling[t].is_some_and(|cap| s.upper[t] + c.volume > cap));
                if over {
                    return false;
                }
            }
        }
        true
    }

    fn apply(&mut self, i: usize, include: bool) {
        let c = self.cands[i].clone();
        let sign = if include { 1 } else { -1 };
        for &e in &c.chain {
            for slot in &mut self.busy[e][c.t..c.t + c.len] {
                *slot = include;
            }
        }
        if c.staining {
            for (pos, &e) in c.chain.iter().enumerate() {
                // ends only matter on the initial edge
                let end = if pos == 0 { c.t + c.len } else { usize::MAX };
                if include {
                    self.stains[e].push((c.t, c.product, end));
                } else {
                    self.stains[e].pop();
                }
            }
        }
        for &k in &c.nomination {
            self.nomination_room[k] -= sign * c.volume;
        }
        for &(l, v) in &c.throughput {
            self.throughput_room[l] -= sign * v;
        }
        for &g in &c.groups {
            if include {
                self.group_runs[g].push((c.t, c.len));
            } else {
                self.group_runs[g].pop();
            }
        }
        let len = self.busy.first().map_or(0, Vec::len);
        if let Some(a) = c.arrives {
            let s = &mut self.stores[a];
            for t in c.t..len {
                s.upper[t] += sign * c.volume;
            }
            for t in (c.t + c.len).min(len)..len {
                s.lower[t] += sign * c.volume;
            }
        }
        if let Some(d) = c.departs {
            let s = &mut self.stores[d];
            for t in (c.t + c.len).min(len)..len {
                s.upper[t] -= sign * c.volume;
            }
            for t in c.t..len {
                s.lower[t] -= sign * c.volume;
            }
        }
        if include {
            self.intake += c.intake;
            self.cost += c.cost;
            self.chosen.push(i);
            self.chosen_set.insert((c.batch, c.t));
        } else {
            self.intake = self.intake - c.intake;
            self.cost = self.cost - c.cost;
            self.chosen.pop();
            self.chosen_set.remove(&(c.batch, c.t));
        }
    }

    fn distribution(&self, optimistic_from: Option<usize>) -> Rational {
        let w = &self.instance.weights;
        let t_max = self.instance.t_max();
        let mut total = Rational::ZERO;
        for target in &w.distribution_targets {
            let (Some(s), Some(p)) = (
                self.instance.site_index(&target.site),
                self.instance.product_index(&target.product),
            ) else {
                continue;
            };
            let Some(&k) = self.store_index.get(&(s, p)) else {
                continue;
            };
            let level = self.stores[k].lower[t_max];
            if let Some(opt) = target.optimal {
                if optimistic_from.is_none() {
                    let kk = target.k.unwrap_or(Rational::ONE);
                    total = total - kk * Rational::from_int((level - opt).abs());
                }
            }
            if let Some(kp) = target.signed_weight {
                let level = match optimistic_from {
                    None => level,
                    Some(i) if kp.is_positive() => level + self.suffix_arrivals[i][k],
                    Some(i) => level - self.suffix_departures[i][k],
                };
                total += kp * Rational::from_int(level);
            }
        }
        total
    }

    fn bound(&self, i: usize) -> Rational {
        let w = &self.instance.weights;
        let mut intake = self.intake;
        for (k, &room) in self.nomination_room.iter().enumerate() {
            let extra = room.min(self.suffix_nominated[i][k]).max(0);
            intake += self.nomination_weight[k] * Rational::from_int(extra);
        }
        w.alpha * intake + w.beta * self.distribution(Some(i))
            - w.gamma * Rational::from_int(self.missed as i64)
            - w.theta * self.cost
    }

    fn leaf(&mut self) {
        // follow-ups of every stain
        for &i in &self.chosen {
            let c = &self.cands[i];
            if !c.staining {
                continue;
            }
            let end = c.t + c.len;
            let followed = self.chosen_set.contains(&(c.batch, end))
                || c.flushers.iter().any(|&f| self.chosen_set.contains(&(f, end)));
            if !followed {
                return;
            }
        }
        for s in &self.stores {
            for t in 0..s.upper.len() {
                if s.ceiling[t].is_some_and(|cap| s.upper[t] > cap) || s.lower[t] < s.floor[t] {
                    return;
                }
            }
        }
        let w = &self.instance.weights;
        let value = w.alpha * self.intake + w.beta * self.distribution(None)
            - w.gamma * Rational::from_int(self.missed as i64)
            - w.theta * self.cost;
        let better = self.best.as_ref().is_none_or(|(b, _)| value > *b);
        if better {
            self.best = Some((value, self.chosen.clone()));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::instance::NominationLimit;

    fn run(inst: &Instance) -> OracleOutcome {
        brute_force_optimum(inst, OracleLimits::default()).unwrap()
    }

    #[test]
    fn t1_small_takes_one_of_each() {
        let out = run(&fixtures::t1_small());
        assert_eq!(out.objective(), Some(Rational::from_int(144)));
        if let OracleOutcome::Optimal { schedule, .. } = out {
            assert_eq!(schedule.len(), 2);
        }
    }

    #[test]
    fn zero_nomination_gives_zero() {
        let mut inst = fixtures::t1_small();
        inst.nominations[0].limits = vec![
            NominationLimit {
                product: "F".into(),
                max_volume: 0,
            },
            NominationLimit {
                product: "S".into(),
                max_volume: 0,
            },
        ];
        let out = run(&inst);
        assert_eq!(out.objective(), Some(Rational::ZERO));
    }

    #[test]
    fn nothing_fits_gives_constant() {
        let mut inst = fixtures::t1_small();
        inst.horizon.len = 3;
        inst.weights.gamma = Rational::ONE;
        inst.weights.previous_plan.push(crate::instance::PlanEntry {
            edge: "e1".into(),
            batch: "r1:F:standard".into(),
            t: 0,
        });
        let out = run(&inst);
        assert_eq!(out.objective(), Some(Rational::from_int(-1)));
    }

    #[test]
    fn t1_full_horizon() {
        let out = run(&fixtures::t1());
        // three F and one S: 3 * 100 + 44
        assert_eq!(out.objective(), Some(Rational::from_int(344)));
    }

    #[test]
    fn budget_is_reported() {
        let limits = OracleLimits {
            node_budget: 10,
            ..Default::default()
        };
        let out = brute_force_optimum(&fixtures::t1(), limits).unwrap();
        assert!(matches!(out, OracleOutcome::BudgetExceeded { .. }));
    }

    #[test]
    fn oversized_instances_are_refused() {
        assert!(brute_force_optimum(&fixtures::t1_long(), OracleLimits::default()).is_err());
    }
}
