//! Independent feasibility checking and scoring of schedules.
//!
//! Nothing here reads the MILP rows: every family is re-evaluated by direct
//! counting and simulation over the placements, so disagreement with the
//! model exposes a bug on one side.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::Serialize;

use crate::catalog::BatchCatalog;
use crate::error::{Error, Result};
use crate::instance::{Instance, Outage, SiteKind};
use crate::model::Family;
use crate::rational::Rational;
use crate::schedule::Schedule;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ValidationOptions {
    /// Accept staining batches without follow-up when no follow-up could fit
    /// before the end of the horizon.
    pub relax_terminal_flush: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub family: Family,
    pub coordinate: String,
    pub measured: Rational,
    pub bound: Rational,
    pub message: String,
}

/// Blocked (upper) and on-stock (lower) occupancy of one site and product.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SeriesPair {
    pub upper: Vec<i64>,
    pub lower: Vec<i64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct OccupancySeries {
    /// Keyed by (site id, product id).
    pub series: BTreeMap<(String, String), SeriesPair>,
}

impl OccupancySeries {
    pub fn get(&self, site: &str, product: &str) -> Option<&SeriesPair> {
        self.series.get(&(site.to_string(), product.to_string()))
    }

    /// CSV with columns site, product, t, lower, upper.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["site", "product", "t", "lower", "upper"])?;
        for ((site, product), pair) in &self.series {
            for (t, (lo, up)) in pair.lower.iter().zip(&pair.upper).enumerate() {
                w.write_record([site, product, &t.to_string(), &lo.to_string(), &up.to_string()])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Csv(e.into_error().into()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// A blocked occupancy closer to its ceiling than the counting-error buffer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NearBound {
    pub site: String,
    pub product: String,
    pub t: usize,
    pub upper: i64,
    pub ceiling: i64,
    pub buffer: i64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ViolationReport {
    pub violations: Vec<Violation>,
    pub near_bound: Vec<NearBound>,
}

impl ViolationReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn families(&self) -> BTreeSet<Family> {
        self.violations.iter().map(|v| v.family).collect()
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization is infallible")
    }

    /// Plain-text table, one violation per line.
    pub fn to_table(&self) -> String {
        if self.violations.is_empty() {
            return "no violations\n".to_string();
        }
        let width = self
            .violations
            .iter()
            .map(|v| v.coordinate.len())
            .max()
            .unwrap_or(0)
            .max("coordinate".len());
        let mut out = format!(
            "{:<20} {:<width$} {:>12} {:>12}  message\n",
            "family", "coordinate", "measured", "bound"
        );
        for v in &self.violations {
            let _ = writeln!(
                out,
                "{:<20} {:<width$} {:>12} {:>12}  {}",
                v.family.as_str(),
                v.coordinate,
                v.measured.to_string(),
                v.bound.to_string(),
                v.message
            );
        }
        out
    }
}

/// A schedule placement resolved against the catalog.
#[derive(Debug, Clone, Copy)]
struct Resolved {
    edge: usize,
    batch: usize,
    t: usize,
    initial: bool,
    last: bool,
    len: usize,
    volume: i64,
    product: usize,
}

fn resolve(instance: &Instance, catalog: &BatchCatalog, schedule: &Schedule) -> (Vec<Resolved>, Vec<Violation>) {
    let mut ok = Vec::new();
    let mut bad = Vec::new();
    let edges: HashMap<&str, usize> = instance
        .edges
        .iter()
        .enumerate()
        .map(|(i, e)| (e.id.as_str(), i))
        .collect();
    for p in &schedule.placements {
        let coordinate = format!("edge={} batch={} t={}", p.edge, p.batch, p.t);
        let (Some(&edge), Some(batch)) = (edges.get(p.edge.as_str()), catalog.spec_index(&p.batch)) else {
            bad.push(Violation {
                family: Family::Routes,
                coordinate,
                measured: Rational::ZERO,
                bound: Rational::ZERO,
                message: "placement references an unknown edge or batch".into(),
            });
            continue;
        };
        let spec = catalog.spec(batch);
        let Some(position) = spec.chain.iter().position(|&e| e == edge) else {
            bad.push(Violation {
                family: Family::Routes,
                coordinate,
                measured: Rational::ZERO,
                bound: Rational::ZERO,
                message: "batch does not run over this edge".into(),
            });
            continue;
        };
        ok.push(Resolved {
            edge,
            batch,
            t: p.t,
            initial: position == 0,
            last: position + 1 == spec.chain.len(),
            len: spec.length,
            volume: spec.volume,
            product: spec.product,
        });
    }
    (ok, bad)
}

fn fits(r: &Resolved, t_max: usize) -> bool {
    r.t + r.len <= t_max
}

fn occupancy_of(instance: &Instance, placements: &[Resolved]) -> OccupancySeries {
    let len = instance.horizon.len;
    let mut out = OccupancySeries::default();
    for (_, site) in instance.storage_sites() {
        for (p, product) in instance.products.iter().enumerate() {
            let base = instance.base_occupancy(site, &product.id);
            let mut upper = base.clone();
            let mut lower = base;
            for r in placements.iter().filter(|r| r.product == p) {
                let edge = &instance.edges[r.edge];
                let arriving = r.last && edge.destination == site.id;
                let leaving = r.initial && edge.origin == site.id;
                for t in 0..len {
                    let started = t >= r.t;
                    let ended = t >= r.t + r.len;
                    if arriving {
                        if started {
                            upper[t] += r.volume;
                        }
                        if ended {
                            lower[t] += r.volume;
                        }
                    }
                    if leaving {
                        if ended {
                            upper[t] -= r.volume;
                        }
                        if started {
                            lower[t] -= r.volume;
                        }
                    }
                }
            }
            out.series
                .insert((site.id.clone(), product.id.clone()), SeriesPair { upper, lower });
        }
    }
    out
}

/// Occupancy of every storage site and product under `schedule`.
pub fn simulate_occupancy(instance: &Instance, catalog: &BatchCatalog, schedule: &Schedule) -> Result<OccupancySeries> {
    let (placements, bad) = resolve(instance, catalog, schedule);
    if let Some(v) = bad.first() {
        return Err(Error::InvalidSchedule(format!("{}: {}", v.coordinate, v.message)));
    }
    let t_max = instance.t_max();
    if let Some(r) = placements.iter().find(|r| !fits(r, t_max)) {
        return Err(Error::PlacementOutsideHorizon {
            edge: instance.edges[r.edge].id.clone(),
            batch: catalog.spec(r.batch).id.clone(),
            start: r.t,
        });
    }
    Ok(occupancy_of(instance, &placements))
}

fn violation(family: Family, coordinate: String, measured: i64, bound: i64, message: &str) -> Violation {
    Violation {
        family,
        coordinate,
        measured: Rational::from_int(measured),
        bound: Rational::from_int(bound),
        message: message.to_string(),
    }
}

/// Checks every constraint family and lists all violations.
pub fn check_schedule(
    instance: &Instance,
    catalog: &BatchCatalog,
    schedule: &Schedule,
    options: ValidationOptions,
) -> ViolationReport {
    let (all, mut violations) = resolve(instance, catalog, schedule);
    let t_max = instance.t_max();
    let len = instance.horizon.len;
    let edge_id = |e: usize| instance.edges[e].id.as_str();
    let batch_id = |b: usize| catalog.spec(b).id.as_str();

    for r in all.iter().filter(|r| !fits(r, t_max)) {
        violations.push(violation(
            Family::HorizonFit,
            format!("edge={} batch={} t={}", edge_id(r.edge), batch_id(r.batch), r.t),
            (r.t + r.len) as i64,
            t_max as i64,
            "batch runs past the end of the horizon",
        ));
    }
    let placements: Vec<Resolved> = all.iter().copied().filter(|r| fits(r, t_max)).collect();
    let at: BTreeSet<(usize, usize, usize)> = placements.iter().map(|r| (r.edge, r.batch, r.t)).collect();

    // packing
    for e in 0..instance.edges.len() {
        let mut running = vec![0i64; len];
        for r in placements.iter().filter(|r| r.edge == e) {
            for slot in running.iter_mut().skip(r.t).take(r.len) {
                *slot += 1;
            }
        }
        for (t, &n) in running.iter().enumerate() {
            if n > 1 {
                violations.push(violation(
                    Family::Packing,
                    format!("edge={} t={t}", edge_id(e)),
                    n,
                    1,
                    "overlapping batches on one edge",
                ));
            }
        }
    }

    // routes
    let mut starts: BTreeMap<(usize, usize), BTreeSet<usize>> = BTreeMap::new();
    for r in &placements {
        starts.entry((r.batch, r.t)).or_default().insert(r.edge);
    }
    for (&(b, t), edges) in &starts {
        let chain = &catalog.spec(b).chain;
        for &e in chain.iter().filter(|e| !edges.contains(e)) {
            violations.push(violation(
                Family::Routes,
                format!("edge={} batch={} t={t}", edge_id(e), batch_id(b)),
                edges.len() as i64,
                chain.len() as i64,
                "chained placement missing on this edge",
            ));
        }
    }

    // flushing
    for r in placements.iter().filter(|r| r.initial) {
        let spec = catalog.spec(r.batch);
        if !spec.is_staining() {
            continue;
        }
        let tau = r.t + r.len;
        let coordinate = format!("edge={} batch={} end={tau}", edge_id(r.edge), spec.id);
        let foreign = placements.iter().find(|o| {
            let other = catalog.spec(o.batch);
            o.edge == r.edge && o.t == tau && other.is_staining() && other.product != spec.product
        });
        if let Some(o) = foreign {
            violations.push(violation(
                Family::Flushing,
                coordinate.clone(),
                1,
                0,
                &format!("followed directly by staining batch {}", batch_id(o.batch)),
            ));
        }
        let regime = &instance.regimes[spec.regime];
        let needed = instance.flush_volume(regime);
        let flushers: Vec<usize> = catalog.per_edge[r.edge]
            .iter()
            .map(|pb| pb.batch)
            .filter(|&b| {
                let s = catalog.spec(b);
                s.is_flushing() && s.regime == spec.regime && s.volume >= needed
            })
            .collect();
        let shortest = flushers
            .iter()
            .map(|&b| catalog.spec(b).length)
            .fold(spec.length, usize::min);
        if options.relax_terminal_flush && tau + shortest > t_max {
            continue;
        }
        let followed = at.contains(&(r.edge, r.batch, tau)) || flushers.iter().any(|&f| at.contains(&(r.edge, f, tau)));
        if !followed {
            violations.push(violation(
                Family::Flushing,
                coordinate,
                0,
                1,
                "staining batch is not followed by a flushing batch or a repeat",
            ));
        }
    }

    // regime exclusions
    for (g, group) in instance.exclusion_groups.iter().enumerate() {
        let members: BTreeSet<usize> = group.members.iter().filter_map(|m| instance.regime_index(m)).collect();
        let runs: Vec<&Resolved> = placements
            .iter()
            .filter(|r| r.initial && members.contains(&catalog.spec(r.batch).regime))
            .collect();
        for (i, a) in runs.iter().enumerate() {
            for b in &runs[i + 1..] {
                let lo = (a.t as i64 - a.len as i64).max(b.t as i64 - b.len as i64).max(0);
                let hi = a.t.min(b.t) as i64;
                if lo <= hi {
                    violations.push(violation(
                        Family::Exclusion,
                        format!("group={g} {}@{} {}@{}", batch_id(a.batch), a.t, batch_id(b.batch), b.t),
                        2,
                        1,
                        "regimes of one exclusion group run too close together",
                    ));
                }
            }
        }
    }

    // capacity and tank outages
    let occupancy = occupancy_of(instance, &placements);
    let mut reductions: HashMap<(&str, &str, usize), i64> = HashMap::new();
    for outage in &instance.outages {
        if let Outage::Tank {
            site,
            product,
            reduction,
            times,
        } = outage
        {
            for t in times.to_vec() {
                *reductions.entry((site.as_str(), product.as_str(), t)).or_default() += reduction;
            }
        }
    }
    let buffers = counting_buffers(instance);
    let mut near_bound = Vec::new();
    for ((site_id, product), pair) in &occupancy.series {
        let site = instance.site(site_id).expect("series keys are sites");
        for t in 0..len {
            let coordinate = format!("site={site_id} product={product} t={t}");
            if let Some(nominal) = instance.nominal_capacity_max(site, product, t) {
                let ceiling = nominal
                    - reductions
                        .get(&(site_id.as_str(), product.as_str(), t))
                        .copied()
                        .unwrap_or(0);
                let up = pair.upper[t];
                if up > ceiling {
                    let (family, message) = if up > nominal {
                        (Family::CapacityUpper, "blocked occupancy exceeds capacity")
                    } else {
                        (
                            Family::Outage,
                            "blocked occupancy exceeds capacity reduced by a tank outage",
                        )
                    };
                    violations.push(violation(family, coordinate.clone(), up, ceiling, message));
                }
                let buffer = buffers.get(site_id.as_str()).copied().unwrap_or(0);
                if up <= ceiling && ceiling - up < buffer {
                    near_bound.push(NearBound {
                        site: site_id.clone(),
                        product: product.clone(),
                        t,
                        upper: up,
                        ceiling,
                        buffer,
                    });
                }
            }
            let min = instance.capacity_min(site, product, t);
            if pair.lower[t] < min {
                violations.push(violation(
                    Family::CapacityLower,
                    coordinate,
                    pair.lower[t],
                    min,
                    "on-stock occupancy below minimum",
                ));
            }
        }
    }

    // transport outages
    let mut forbidden: BTreeSet<(&str, &str, usize)> = BTreeSet::new();
    for outage in &instance.outages {
        if let Outage::Transport { placements, times } = outage {
            for p in placements {
                for t in times.to_vec() {
                    forbidden.insert((p.edge.as_str(), p.batch.as_str(), t));
                }
            }
        }
    }
    for p in &schedule.placements {
        if forbidden.contains(&(p.edge.as_str(), p.batch.as_str(), p.t)) {
            violations.push(violation(
                Family::Outage,
                format!("edge={} batch={} t={}", p.edge, p.batch, p.t),
                1,
                0,
                "batch starts during a transport outage",
            ));
        }
    }

    // throughput limits
    for (i, limit) in instance.limits.iter().enumerate() {
        let edges: BTreeSet<usize> = limit.edges.iter().filter_map(|e| instance.edge_index(e)).collect();
        let product = instance.product_index(&limit.product);
        let moved: i64 = placements
            .iter()
            .filter(|r| edges.contains(&r.edge) && Some(r.product) == product)
            .filter(|r| limit.per_edge || r.initial)
            .filter(|r| limit.window.contains(r.t))
            .map(|r| r.volume)
            .sum();
        if moved > limit.limit {
            violations.push(violation(
                Family::Throughput,
                format!("limit={i} product={}", limit.product),
                moved,
                limit.limit,
                "throughput limit exceeded",
            ));
        }
    }

    // nominations
    for nom in &instance.nominations {
        for lim in &nom.limits {
            let product = instance.product_index(&lim.product);
            let taken: i64 = placements
                .iter()
                .filter(|r| r.initial && Some(r.product) == product)
                .filter(|r| instance.edges[r.edge].origin == nom.refinery)
                .map(|r| r.volume)
                .sum();
            if taken > lim.max_volume {
                violations.push(violation(
                    Family::Nomination,
                    format!("refinery={} product={}", nom.refinery, lim.product),
                    taken,
                    lim.max_volume,
                    "nominated volume exceeded",
                ));
            }
        }
    }

    // fixed transports and executed placements
    for fixed in &instance.fixed_transports {
        let id = crate::catalog::batch_spec_id(&fixed.regime, &fixed.product, fixed.variant);
        let present = catalog
            .spec_index(&id)
            .is_some_and(|b| at.contains(&(catalog.spec(b).initial_edge(), b, fixed.start)));
        if !present {
            violations.push(violation(
                Family::Fixed,
                format!("batch={id} t={}", fixed.start),
                0,
                1,
                "fixed transport missing",
            ));
        }
    }
    for entry in &instance.weights.executed {
        if !schedule.contains(&entry.edge, &entry.batch, entry.t) {
            violations.push(violation(
                Family::Fixed,
                format!("edge={} batch={} t={}", entry.edge, entry.batch, entry.t),
                0,
                1,
                "executed placement missing",
            ));
        }
    }

    ViolationReport { violations, near_bound }
}

/// Largest total pipe volume of a regime touching each storage site.
fn counting_buffers(instance: &Instance) -> HashMap<&str, i64> {
    let mut out = HashMap::new();
    for site in instance.sites.iter().filter(|s| s.kind == SiteKind::Storage) {
        let mut best = 0;
        for regime in &instance.regimes {
            let edges: Vec<_> = regime.edges.iter().filter_map(|e| instance.edge(e)).collect();
            if edges.iter().any(|e| e.origin == site.id || e.destination == site.id) {
                best = best.max(edges.iter().map(|e| e.pipe_volume).sum());
            }
        }
        out.insert(site.id.as_str(), best);
    }
    out
}

/// Objective components and their weighted total.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ObjectiveBreakdown {
    /// Weighted nominated intake.
    pub intake: Rational,
    /// Distributional term (deviation penalties plus signed rewards).
    pub distribution: Rational,
    /// Minus the number of previous-plan placements not kept.
    pub previous_plan: Rational,
    /// Minus the summed cost of every placement.
    pub cost: Rational,
    pub total: Rational,
}

impl ObjectiveBreakdown {
    pub fn total_f64(&self) -> f64 {
        self.total.to_f64()
    }
}

/// Scores a schedule exactly, with true absolute deviations.
pub fn evaluate_objective(instance: &Instance, catalog: &BatchCatalog, schedule: &Schedule) -> ObjectiveBreakdown {
    let w = &instance.weights;
    let (all, _) = resolve(instance, catalog, schedule);
    let t_max = instance.t_max();

    let mut intake = Rational::ZERO;
    let mut seen = BTreeSet::new();
    for nom in &instance.nominations {
        for lim in &nom.limits {
            if !seen.insert((nom.refinery.as_str(), lim.product.as_str())) {
                continue;
            }
            let product = instance.product_index(&lim.product);
            let eta = w.eta(&lim.product);
            for r in all
                .iter()
                .filter(|r| r.initial && Some(r.product) == product)
                .filter(|r| instance.edges[r.edge].origin == nom.refinery)
            {
                intake += eta * Rational::from_int(r.volume);
            }
        }
    }

    let mut distribution = Rational::ZERO;
    if !w.distribution_targets.is_empty() {
        let in_horizon: Vec<Resolved> = all.iter().copied().filter(|r| fits(r, t_max)).collect();
        let occupancy = occupancy_of(instance, &in_horizon);
        for target in &w.distribution_targets {
            let Some(pair) = occupancy.get(&target.site, &target.product) else {
                continue;
            };
            let level = Rational::from_int(pair.lower[t_max]);
            if let Some(opt) = target.optimal {
                let k = target.k.unwrap_or(Rational::ONE);
                distribution = distribution - k * (level - Rational::from_int(opt)).abs();
            }
            if let Some(k) = target.signed_weight {
                distribution += k * level;
            }
        }
    }

    let kept = w
        .previous_plan
        .iter()
        .filter(|p| !schedule.contains(&p.edge, &p.batch, p.t))
        .count();
    let previous_plan = -Rational::from_int(kept as i64);

    let cost = -all.iter().map(|r| catalog.spec(r.batch).cost).sum::<Rational>();

    let total = w.alpha * intake + w.beta * distribution + w.gamma * previous_plan + w.theta * cost;
    ObjectiveBreakdown {
        intake,
        distribution,
        previous_plan,
        cost,
        total,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::instance::RegimeExclusionGroup;

    fn t1_setup() -> (Instance, BatchCatalog) {
        let inst = fixtures::t1();
        let cat = BatchCatalog::build(&inst).unwrap();
        (inst, cat)
    }

    #[test]
    fn empty_schedule_is_base() {
        let (inst, cat) = t1_setup();
        let occ = simulate_occupancy(&inst, &cat, &Schedule::new()).unwrap();
        let pair = occ.get("A", "F").unwrap();
        assert!(pair.upper.iter().chain(&pair.lower).all(|&c| c == 120));
        let obj = evaluate_objective(&inst, &cat, &Schedule::new());
        assert_eq!(obj.total, Rational::ZERO);
        assert!(check_schedule(&inst, &cat, &Schedule::new(), Default::default()).is_feasible());
    }

    #[test]
    fn inbound_flush_shifts_upper_before_lower() {
        let (inst, cat) = t1_setup();
        let mut s = Schedule::new();
        s.insert("e1", "r1:F:standard", 2);
        let occ = simulate_occupancy(&inst, &cat, &s).unwrap();
        let pair = occ.get("A", "F").unwrap();
        let expect_upper: Vec<i64> = (0..24).map(|t| if t >= 2 { 220 } else { 120 }).collect();
        let expect_lower: Vec<i64> = (0..24).map(|t| if t >= 8 { 220 } else { 120 }).collect();
        assert_eq!(pair.upper, expect_upper);
        assert_eq!(pair.lower, expect_lower);
    }

    #[test]
    fn through_traffic_nets_to_base() {
        // in over e1 and out over a regime on e2 alone
        let mut inst2 = fixtures::two_edge();
        inst2.regimes.push(fixtures::regime("r2", &["e2"]));
        let cat2 = BatchCatalog::build(&inst2).unwrap();
        let mut s = Schedule::new();
        s.insert("e1", "r1:F:standard", 0);
        s.insert("e2", "r2:F:standard", 0);
        let occ = simulate_occupancy(&inst2, &cat2, &s).unwrap();
        let a = occ.get("A", "F").unwrap();
        assert_eq!(a.upper[0], 220);
        assert_eq!(a.lower[0], 20);
        assert!(a.upper[6..].iter().chain(&a.lower[6..]).all(|&c| c == 120));
        assert!(a.upper.iter().zip(&a.lower).all(|(u, l)| u >= l));
    }

    #[test]
    fn outside_horizon_is_an_error() {
        let (inst, cat) = t1_setup();
        let mut s = Schedule::new();
        s.insert("e1", "r1:F:standard", 18);
        assert!(matches!(
            simulate_occupancy(&inst, &cat, &s),
            Err(Error::PlacementOutsideHorizon { .. })
        ));
        let report = check_schedule(&inst, &cat, &s, Default::default());
        assert_eq!(report.families(), BTreeSet::from([Family::HorizonFit]));
    }

    #[test]
    fn overlap_is_reported_per_step() {
        let (inst, cat) = t1_setup();
        let mut s = Schedule::new();
        s.insert("e1", "r1:F:standard", 0);
        s.insert("e1", "r1:F:standard", 5);
        let report = check_schedule(&inst, &cat, &s, Default::default());
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].family, Family::Packing);
        assert_eq!(report.violations[0].coordinate, "edge=e1 t=5");
    }

    #[test]
    fn stain_needs_follow_up() {
        let (inst, cat) = t1_setup();
        let mut s = Schedule::new();
        s.insert("e1", "r1:S:standard", 0);
        let report = check_schedule(&inst, &cat, &s, Default::default());
        assert_eq!(report.families(), BTreeSet::from([Family::Flushing]));
        s.insert("e1", "r1:S:standard", 3);
        s.insert("e1", "r1:F:standard", 6);
        assert!(check_schedule(&inst, &cat, &s, Default::default()).is_feasible());
    }

    #[test]
    fn terminal_relaxation() {
        let (inst, cat) = t1_setup();
        let mut s = Schedule::new();
        s.insert("e1", "r1:S:standard", 20);
        assert!(!check_schedule(&inst, &cat, &s, Default::default()).is_feasible());
        let relaxed = ValidationOptions {
            relax_terminal_flush: true,
        };
        assert!(check_schedule(&inst, &cat, &s, relaxed).is_feasible());
    }

    #[test]
    fn exclusion_pairs() {
        let mut inst = fixtures::two_edge();
        inst.exclusion_groups.push(RegimeExclusionGroup {
            members: vec!["r1".into(), "r12".into()],
        });
        let cat = BatchCatalog::build(&inst).unwrap();
        let mut s = Schedule::new();
        s.insert("e1", "r1:F:standard", 0);
        s.insert("e1", "r12:F:standard", 6);
        s.insert("e2", "r12:F:standard", 6);
        // the later batch's window reaches back to 0, the earlier one's start
        let report = check_schedule(&inst, &cat, &s, Default::default());
        assert_eq!(report.families(), BTreeSet::from([Family::Exclusion]));
    }

    #[test]
    fn capacity_and_table_output() {
        let (mut inst, _) = t1_setup();
        inst.sites[1]
            .capacity_max
            .insert("F".into(), crate::instance::Profile::Constant(150));
        let cat = BatchCatalog::build(&inst).unwrap();
        let mut s = Schedule::new();
        s.insert("e1", "r1:F:standard", 0);
        let report = check_schedule(&inst, &cat, &s, Default::default());
        assert_eq!(report.violations.len(), 24);
        assert!(report.violations.iter().all(|v| v.family == Family::CapacityUpper));
        let table = report.to_table();
        assert!(table.starts_with("family"));
        assert!(table.contains("site=A product=F t=0"));
        assert!(report.to_json_pretty().contains("\"capacity_upper\""));
    }

    #[test]
    fn full_nomination_scores_its_volume() {
        let inst = fixtures::t1_long();
        let cat = BatchCatalog::build(&inst).unwrap();
        let f = cat.spec_index("r1:F:standard").unwrap();
        let st = cat.spec_index("r1:S:standard").unwrap();
        // ten stain/flush pairs: S at 9k, F at 9k + 3
        let starts: Vec<(usize, usize)> = (0..10).flat_map(|k| [(st, 9 * k), (f, 9 * k + 3)]).collect();
        let s = Schedule::from_starts(&inst, &cat, &starts);
        assert!(check_schedule(&inst, &cat, &s, Default::default()).is_feasible());
        let obj = evaluate_objective(&inst, &cat, &s);
        assert_eq!(obj.intake, Rational::from_int(10 * 100 + 10 * 44));
        assert_eq!(obj.total, Rational::from_int(1440));
    }

    #[test]
    fn occupancy_csv() {
        let (inst, cat) = t1_setup();
        let occ = simulate_occupancy(&inst, &cat, &Schedule::new()).unwrap();
        let csv = occ.to_csv().unwrap();
        assert_eq!(csv.lines().count(), 1 + 2 * 24);
        assert!(csv.starts_with("site,product,t,lower,upper"));
    }
}
