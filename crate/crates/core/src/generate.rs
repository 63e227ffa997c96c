//! Instance generators: the path-graph experiment family and random tiny
//! instances for exhaustive cross-checks.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{batch_spec_id, BatchCatalog};
use crate::fixtures::{edge, nomination, per_product, products, refinery, regime, storage};
use crate::instance::*;
use crate::oracle::{brute_force_optimum, OracleLimits, OracleOutcome};
use crate::rational::Rational;

pub const FLUSH_BATCH: i64 = 100;
pub const STAIN_BATCH: i64 = 44;
pub const DEFAULT_CAPACITY: i64 = 1000;
const DAY: usize = 24;
const DAILY_OUTTAKE: i64 = 10;

/// Nomination and horizon presets of the path experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Setting {
    A,
    B,
    C,
}

impl Setting {
    pub const ALL: [Setting; 3] = [Setting::A, Setting::B, Setting::C];

    /// Nominated batches per product.
    pub fn batches(self) -> i64 {
        match self {
            Setting::A => 10,
            Setting::B => 15,
            Setting::C => 20,
        }
    }

    pub fn horizon(self) -> usize {
        match self {
            Setting::A => 480,
            Setting::B | Setting::C => 576,
        }
    }

    /// Nominated volume of the flushing and staining product.
    pub fn nomination(self) -> (i64, i64) {
        (self.batches() * FLUSH_BATCH, self.batches() * STAIN_BATCH)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CostMode {
    /// Intake only.
    Sd,
    /// Intake first, pumping cost as a tie-breaker.
    Sdc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OuttakePolicy {
    /// One outtake per product and site at the start of every day.
    #[default]
    Daily,
    /// The whole horizon's outtake at t = 0.
    FrontLoaded,
    /// The same total spread over the steps as evenly as integers allow.
    UniformHourly,
}

macro_rules! text_enum {
    ($ty:ty, $($name:literal => $value:expr),+ $(,)?) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let s = match self {
                    $(v if *v == $value => $name,)+
                    _ => unreachable!(),
                };
                f.write_str(s)
            }
        }

        impl FromStr for $ty {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($name => Ok($value),)+
                    _ => Err(format!("unknown value {s:?}, expected one of: {}", [$($name),+].join(", "))),
                }
            }
        }
    };
}

text_enum!(Setting, "A" => Setting::A, "B" => Setting::B, "C" => Setting::C);
text_enum!(CostMode, "SD" => CostMode::Sd, "SDC" => CostMode::Sdc);
text_enum!(
    OuttakePolicy,
    "daily" => OuttakePolicy::Daily,
    "front-loaded" => OuttakePolicy::FrontLoaded,
    "uniform-hourly" => OuttakePolicy::UniformHourly,
);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathExperimentParams {
    /// Vertices on the path, the refinery included.
    pub vertices: usize,
    pub setting: Setting,
    pub cost_mode: CostMode,
    pub outtake: OuttakePolicy,
    /// Recorded for manifests. Path instances involve no randomness.
    pub seed: u64,
    pub capacity: i64,
}

impl PathExperimentParams {
    pub fn new(vertices: usize, setting: Setting, cost_mode: CostMode) -> Self {
        PathExperimentParams {
            vertices,
            setting,
            cost_mode,
            outtake: OuttakePolicy::Daily,
            seed: 0,
            capacity: DEFAULT_CAPACITY,
        }
    }

    pub fn name(&self) -> String {
        format!(
            "path-l{}-{}-{}-{}",
            self.vertices, self.setting, self.cost_mode, self.outtake
        )
    }
}

/// Outtake deltas of one product at one site. Daily outtakes fall at the end
/// of each full day, t = 24k for k ≥ 1 inside the horizon; the other
/// policies move the same total.
fn outtake_deltas(policy: OuttakePolicy, product: &str, horizon: usize) -> Vec<BaseDelta> {
    let days = horizon.saturating_sub(1) / DAY;
    let total = DAILY_OUTTAKE * days as i64;
    let delta = |t, amount: i64| BaseDelta {
        product: product.to_string(),
        t,
        delta: -amount,
    };
    match policy {
        OuttakePolicy::Daily => (1..=days).map(|d| delta(d * DAY, DAILY_OUTTAKE)).collect(),
        OuttakePolicy::FrontLoaded => vec![delta(0, total)],
        OuttakePolicy::UniformHourly => {
            let n = horizon as i64;
            (0..horizon)
                .filter_map(|t| {
                    let t = t as i64;
                    let step = (t + 1) * total / n - t * total / n;
                    (step > 0).then(|| delta(t as usize, step))
                })
                .collect()
        }
    }
}

/// Path R = v0 → v1 → … with one regime from the refinery to every storage
/// site along the edge prefix. A standard flushing batch cleans any regime,
/// so every batch is pumped in 6 or 3 steps.
pub fn generate_path_instance(params: &PathExperimentParams) -> Instance {
    assert!(params.vertices >= 2, "a path needs at least two vertices");
    let horizon = params.setting.horizon();
    let storages = params.vertices - 1;
    let site_id = |k: usize| if k == 0 { "R".to_string() } else { format!("S{k}") };

    let mut sites = vec![refinery("R")];
    for k in 1..=storages {
        let mut site = storage(&site_id(k), params.capacity, 120 + 10 * (k as i64 - 1));
        for p in ["F", "S"] {
            site.base_deltas.extend(outtake_deltas(params.outtake, p, horizon));
        }
        sites.push(site);
    }
    let edges: Vec<Edge> = (1..=storages)
        .map(|k| edge(&format!("e{k}"), &site_id(k - 1), &site_id(k)))
        .collect();
    let regimes = (1..=storages)
        .map(|k| {
            let path: Vec<String> = (1..=k).map(|j| format!("e{j}")).collect();
            let path: Vec<&str> = path.iter().map(String::as_str).collect();
            let mut r = regime(&format!("r{k}"), &path);
            r.cost_per_step = Some(Rational::ONE);
            r.flush_volume = Some(FLUSH_BATCH);
            r
        })
        .collect();
    let (flush, stain) = params.setting.nomination();
    let mut weights = CostWeights {
        alpha: Rational::ONE,
        eta: per_product(Rational::ONE, Rational::ONE),
        ..CostWeights::default()
    };
    if params.cost_mode == CostMode::Sdc {
        weights.alpha = Rational::from_int(5);
        weights.theta = Rational::new(3, 1000);
    }
    Instance {
        products: products(),
        sites,
        edges,
        regimes,
        horizon: TimeGrid {
            len: horizon,
            step_hours: Rational::ONE,
        },
        nominations: vec![nomination("R", flush, stain)],
        outages: Vec::new(),
        limits: Vec::new(),
        exclusion_groups: Vec::new(),
        weights,
        fixed_transports: Vec::new(),
    }
}

/// Smallest total of whole batches (any mix of `sizes`) reaching `need`.
fn whole_batch_cover(need: i64, sizes: &[i64]) -> i64 {
    let top = (need + sizes.iter().max().copied().unwrap_or(0)) as usize;
    let mut reachable = vec![false; top + 1];
    reachable[0] = true;
    for total in 1..=top {
        reachable[total] = sizes
            .iter()
            .any(|&v| v as usize <= total && reachable[total - v as usize]);
    }
    (need.max(0) as usize..=top).find(|&t| reachable[t]).unwrap_or(top) as i64
}

/// Necessary conditions for feasibility that can be read off the data.
///
/// Every returned line names a site/product whose outtake cannot be covered
/// or whose capacity is already broken; an empty list proves nothing. Stock
/// shortfalls are rounded up to whole batches per site before they are
/// compared with the nomination.
pub fn precheck(instance: &Instance) -> Vec<String> {
    let mut warnings = Vec::new();
    let catalog = BatchCatalog::build(instance).ok();
    let mut required: BTreeMap<&str, i64> = BTreeMap::new();
    for (_, site) in instance.storage_sites() {
        for product in &instance.products {
            let base = instance.base_occupancy(site, &product.id);
            let ceiling = |t| instance.nominal_capacity_max(site, &product.id, t);
            if let Some(t) = (0..base.len()).find(|&t| ceiling(t).is_some_and(|c| base[t] > c)) {
                warnings.push(format!(
                    "{}/{}: stock {} exceeds capacity {} at t={t} before any transport",
                    site.id,
                    product.id,
                    base[t],
                    ceiling(t).unwrap_or_default()
                ));
            }
            let need = (0..base.len())
                .map(|t| instance.capacity_min(site, &product.id, t) - base[t])
                .max()
                .unwrap_or(0);
            if need <= 0 {
                continue;
            }
            let delivering: Vec<_> = catalog
                .iter()
                .flat_map(|c| c.specs.iter())
                .filter(|s| instance.products[s.product].id == product.id)
                .filter(|s| instance.edges[s.final_edge()].destination == site.id)
                .collect();
            let Some(smallest) = delivering.iter().map(|s| s.volume).min() else {
                warnings.push(format!(
                    "{}/{}: outtake needs {need} more units but no regime delivers here",
                    site.id, product.id
                ));
                continue;
            };
            let room = (0..base.len())
                .map(|t| ceiling(t).map_or(i64::MAX, |c| c - base[t]))
                .max()
                .unwrap_or(0);
            if room < smallest {
                warnings.push(format!(
                    "{}/{}: outtake needs {need} more units but capacity never has room for a batch of {smallest}",
                    site.id, product.id
                ));
            }
            let from_refineries = delivering.iter().all(|s| {
                let origin = &instance.edges[s.initial_edge()].origin;
                instance.site(origin).is_some_and(|o| o.kind == SiteKind::Refinery)
            });
            if from_refineries {
                let sizes: Vec<i64> = delivering.iter().map(|s| s.volume).collect();
                *required.entry(&product.id).or_default() += whole_batch_cover(need, &sizes);
            }
        }
    }
    for (product, need) in required {
        let nominated: i64 = instance
            .nominations
            .iter()
            .filter_map(|n| n.limits.iter().find(|l| l.product == product))
            .map(|l| l.max_volume)
            .sum();
        if need > nominated {
            warnings.push(format!(
                "{product}: covering the outtake takes at least {need} units in whole batches but only {nominated} are nominated"
            ));
        }
    }
    warnings
}

/// Initial placements a tiny instance offers to exhaustive search.
pub fn candidate_count(catalog: &BatchCatalog) -> usize {
    (0..catalog.specs.len()).map(|b| catalog.start_count(b)).sum()
}

/// Random tiny instance that exhaustive search settles within `limits`; the
/// same seed gives the same instance.
pub fn generate_oracle_instance(seed: u64, limits: &OracleLimits) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let inst = random_tiny(&mut rng, limits);
        if inst.ensure_valid().is_err() {
            continue;
        }
        let Ok(catalog) = BatchCatalog::build(&inst) else {
            continue;
        };
        if candidate_count(&catalog) > limits.max_candidates {
            continue;
        }
        if matches!(
            brute_force_optimum(&inst, *limits),
            Ok(OracleOutcome::Optimal { .. } | OracleOutcome::Infeasible { .. })
        ) {
            return inst;
        }
    }
}

fn random_tiny(rng: &mut ChaCha8Rng, limits: &OracleLimits) -> Instance {
    let edges = rng.gen_range(1..=limits.max_edges.clamp(1, 2));
    let horizon = rng.gen_range(10..=limits.max_horizon.max(10));
    let two_products = rng.gen_bool(0.8);

    let mut inst = crate::fixtures::t1();
    inst.horizon.len = horizon;
    if !two_products {
        inst.products.truncate(1);
    }
    let ids: Vec<String> = inst.products.iter().map(|p| p.id.clone()).collect();
    let speeds = [
        (Rational::new(100, 6), Rational::new(44, 3)),
        (Rational::new(25, 1), Rational::new(22, 1)),
    ];
    let (flush_rate, stain_rate) = *speeds.choose(rng).expect("non-empty");

    let mut sites = vec![refinery("R")];
    for name in ["A", "B"].iter().take(edges) {
        let mut site = storage(name, 0, 0);
        site.capacity_max.clear();
        site.initial_occupancy.clear();
        for p in &ids {
            site.capacity_max
                .insert(p.clone(), Profile::Constant(rng.gen_range(150..=400)));
            let stock = rng.gen_range(0..=150);
            site.initial_occupancy.insert(p.clone(), stock);
            if rng.gen_bool(0.5) {
                site.base_deltas.push(BaseDelta {
                    product: p.clone(),
                    t: rng.gen_range(0..horizon),
                    delta: -rng.gen_range(0..=60.min(stock)),
                });
            }
            if rng.gen_bool(0.15) {
                site.capacity_min
                    .insert(p.clone(), Profile::Constant(rng.gen_range(0..=40)));
            }
        }
        site.standard_batch.retain(|k, _| ids.contains(k));
        sites.push(site);
    }
    sites[0].standard_batch.retain(|k, _| ids.contains(k));
    inst.sites = sites;
    inst.edges = (0..edges)
        .map(|k| {
            let names = ["R", "A", "B"];
            let mut e = edge(&format!("e{}", k + 1), names[k], names[k + 1]);
            e.pipe_volume = *[50, 100].choose(rng).expect("non-empty");
            e
        })
        .collect();

    let mut regime_paths: Vec<(&str, Vec<&str>)> = vec![("r1", vec!["e1"])];
    if edges == 2 {
        if rng.gen_bool(0.7) {
            regime_paths.push(("r12", vec!["e1", "e2"]));
        }
        if rng.gen_bool(0.5) {
            regime_paths.push(("r2", vec!["e2"]));
        }
    }
    let with_cost = rng.gen_bool(0.4);
    inst.regimes = regime_paths
        .iter()
        .map(|(id, path)| {
            let mut r = regime(id, path);
            r.flow_rate = per_product(flush_rate, stain_rate);
            r.flow_rate.retain(|k, _| ids.contains(k));
            if with_cost {
                r.cost_per_step = Some(Rational::ONE);
            }
            r
        })
        .collect();

    let mut nom = nomination(
        "R",
        FLUSH_BATCH * rng.gen_range(0..=3),
        STAIN_BATCH * rng.gen_range(0..=3),
    );
    nom.limits.retain(|l| ids.contains(&l.product));
    inst.nominations = vec![nom];

    let w = &mut inst.weights;
    w.eta = ids
        .iter()
        .map(|p| (p.clone(), Rational::from_int(rng.gen_range(1..=3))))
        .collect();
    if with_cost {
        w.theta = Rational::new(1, 100);
    }
    if rng.gen_bool(0.3) {
        w.beta = Rational::new(1, 10);
        let site = *["A", "B"][..edges].choose(rng).expect("non-empty");
        let product = ids.choose(rng).expect("non-empty").clone();
        w.distribution_targets.push(if rng.gen_bool(0.5) {
            DistributionTarget {
                site: site.into(),
                product,
                optimal: Some(rng.gen_range(50..=250)),
                k: Some(Rational::ONE),
                signed_weight: None,
            }
        } else {
            DistributionTarget {
                site: site.into(),
                product,
                optimal: None,
                k: None,
                signed_weight: Some(Rational::new(rng.gen_range(-2..=2), 10)),
            }
        });
    }
    if rng.gen_bool(0.3) {
        w.gamma = Rational::new(1, 2);
        let t = rng.gen_range(0..horizon.saturating_sub(6).max(1));
        w.previous_plan.push(PlanEntry {
            edge: "e1".into(),
            batch: batch_spec_id("r1", "F", SizeVariant::Standard),
            t,
        });
    }

    if rng.gen_bool(0.3) {
        let from = rng.gen_range(0..horizon);
        let to = (from + rng.gen_range(0..4)).min(horizon - 1);
        inst.outages.push(Outage::Transport {
            placements: vec![BatchOnEdge {
                edge: "e1".into(),
                batch: batch_spec_id("r1", "F", SizeVariant::Standard),
            }],
            times: TimeSet::range(from, to),
        });
    }
    if rng.gen_bool(0.2) {
        let from = rng.gen_range(0..horizon);
        inst.outages.push(Outage::Tank {
            site: "A".into(),
            product: "F".into(),
            reduction: rng.gen_range(20..=100),
            times: TimeSet::range(from, (from + 5).min(horizon - 1)),
        });
    }
    if rng.gen_bool(0.25) {
        inst.limits.push(ThroughputLimit {
            edges: vec!["e1".into()],
            product: "F".into(),
            window: TimeSet::range(0, horizon - 1),
            limit: FLUSH_BATCH * rng.gen_range(0..=2),
            per_edge: rng.gen_bool(0.5),
        });
    }
    if inst.regimes.len() >= 2 && rng.gen_bool(0.4) {
        inst.exclusion_groups.push(RegimeExclusionGroup {
            members: inst.regimes.iter().map(|r| r.id.clone()).collect(),
        });
    }
    if rng.gen_bool(0.1) {
        inst.fixed_transports.push(FixedTransport {
            regime: "r1".into(),
            product: "F".into(),
            start: rng.gen_range(0..horizon / 2),
            variant: SizeVariant::Standard,
        });
    }
    inst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outtake_totals_agree_across_policies() {
        for policy in [
            OuttakePolicy::Daily,
            OuttakePolicy::FrontLoaded,
            OuttakePolicy::UniformHourly,
        ] {
            let d = outtake_deltas(policy, "F", 480);
            assert_eq!(d.iter().map(|d| d.delta).sum::<i64>(), -190, "{policy}");
            assert!(d.iter().all(|d| d.t < 480));
        }
        let daily = outtake_deltas(OuttakePolicy::Daily, "F", 576);
        assert_eq!(daily.len(), 23);
        assert_eq!(daily[0].t, 24);
        assert_eq!(daily[22].t, 552);
    }

    #[test]
    fn names_round_trip() {
        for s in Setting::ALL {
            assert_eq!(s.to_string().parse::<Setting>(), Ok(s));
        }
        assert_eq!("SDC".parse::<CostMode>(), Ok(CostMode::Sdc));
        assert_eq!("front-loaded".parse::<OuttakePolicy>(), Ok(OuttakePolicy::FrontLoaded));
        assert!("D".parse::<Setting>().is_err());
    }

    #[test]
    fn path_shape() {
        let inst = generate_path_instance(&PathExperimentParams::new(4, Setting::A, CostMode::Sd));
        assert!(inst.ensure_valid().is_ok());
        assert_eq!(inst.edges.len(), 3);
        assert_eq!(inst.regimes[2].edges, ["e1", "e2", "e3"]);
        let stocks: Vec<i64> = inst.storage_sites().map(|(_, s)| s.initial_occupancy["S"]).collect();
        assert_eq!(stocks, [120, 130, 140]);
        assert!(precheck(&inst).is_empty(), "{:?}", precheck(&inst));
    }

    #[test]
    fn precheck_flags_tiny_capacity() {
        let mut inst = generate_path_instance(&PathExperimentParams::new(2, Setting::A, CostMode::Sd));
        inst.sites[1].capacity_max.insert("F".into(), Profile::Constant(60));
        let w = precheck(&inst);
        assert!(w.iter().any(|m| m.contains("exceeds capacity")), "{w:?}");
    }

    #[test]
    fn whole_batches_round_up_per_site() {
        assert_eq!(whole_batch_cover(70, &[44]), 88);
        assert_eq!(whole_batch_cover(0, &[44]), 0);
        assert_eq!(whole_batch_cover(101, &[100, 300]), 200);
    }

    #[test]
    fn precheck_matches_the_feasibility_pattern_at_eight_vertices() {
        for (setting, infeasible) in [(Setting::A, false), (Setting::B, true), (Setting::C, false)] {
            let inst = generate_path_instance(&PathExperimentParams::new(8, setting, CostMode::Sd));
            let w = precheck(&inst);
            assert_eq!(
                w.iter().any(|m| m.starts_with("S: covering")),
                infeasible,
                "{setting}: {w:?}"
            );
        }
    }
}
