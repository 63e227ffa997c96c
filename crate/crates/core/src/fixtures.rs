//! Small reference instances used throughout the tests and docs.
//!
//! All of them use the two-product setup of the path experiments: a
//! flushing product `F` (batches of 100 units pumped in 6 steps) and a
//! staining product `S` (44 units in 3 steps).

use std::collections::BTreeMap;

use crate::instance::*;
use crate::rational::Rational;

pub(crate) fn products() -> Vec<Product> {
    vec![
        Product {
            id: "F".into(),
            kind: ProductKind::Flushing,
            unit_volume: "58.14".parse().unwrap(),
        },
        Product {
            id: "S".into(),
            kind: ProductKind::Staining,
            unit_volume: "64.94".parse().unwrap(),
        },
    ]
}

pub(crate) fn per_product<T: Clone>(f: T, s: T) -> BTreeMap<String, T> {
    BTreeMap::from([("F".to_string(), f), ("S".to_string(), s)])
}

pub(crate) fn refinery(id: &str) -> Site {
    Site {
        id: id.into(),
        kind: SiteKind::Refinery,
        capacity_max: BTreeMap::new(),
        capacity_min: BTreeMap::new(),
        initial_occupancy: BTreeMap::new(),
        base_deltas: Vec::new(),
        standard_batch: per_product(100, 44),
    }
}

/// A storage site with the given per-product capacity and initial stock.
pub fn storage(id: &str, capacity: i64, initial: i64) -> Site {
    Site {
        id: id.into(),
        kind: SiteKind::Storage,
        capacity_max: per_product(Profile::Constant(capacity), Profile::Constant(capacity)),
        capacity_min: BTreeMap::new(),
        initial_occupancy: per_product(initial, initial),
        base_deltas: Vec::new(),
        standard_batch: per_product(100, 44),
    }
}

pub(crate) fn edge(id: &str, origin: &str, destination: &str) -> Edge {
    Edge {
        id: id.into(),
        origin: origin.into(),
        destination: destination.into(),
        pipe_volume: 100,
    }
}

/// Regime with the path-experiment pumping speeds (100/6 and 44/3 units per step).
pub fn regime(id: &str, edges: &[&str]) -> PumpingRegime {
    PumpingRegime {
        id: id.into(),
        edges: edges.iter().map(|e| e.to_string()).collect(),
        flow_rate: per_product(Rational::new(100, 6), Rational::new(44, 3)),
        flush_volume: None,
        cost_per_batch: BTreeMap::new(),
        cost_per_step: None,
        pass_times: BTreeMap::new(),
    }
}

pub(crate) fn nomination(refinery: &str, flush: i64, stain: i64) -> Nomination {
    Nomination {
        refinery: refinery.into(),
        limits: vec![
            NominationLimit {
                product: "F".into(),
                max_volume: flush,
            },
            NominationLimit {
                product: "S".into(),
                max_volume: stain,
            },
        ],
    }
}

pub(crate) fn sd_weights() -> CostWeights {
    CostWeights {
        alpha: Rational::ONE,
        eta: per_product(Rational::ONE, Rational::ONE),
        ..CostWeights::default()
    }
}

/// T1: refinery `R`, storage `A` (capacity 1000, stock 120 per product),
/// edge `e1` R→A, single regime `r1`, horizon 24, nomination 1000/440.
pub fn t1() -> Instance {
    Instance {
        products: products(),
        sites: vec![refinery("R"), storage("A", 1000, 120)],
        edges: vec![edge("e1", "R", "A")],
        regimes: vec![regime("r1", &["e1"])],
        horizon: TimeGrid {
            len: 24,
            step_hours: Rational::ONE,
        },
        nominations: vec![nomination("R", 1000, 440)],
        outages: Vec::new(),
        limits: Vec::new(),
        exclusion_groups: Vec::new(),
        weights: sd_weights(),
        fixed_transports: Vec::new(),
    }
}

/// T1 with horizon 12 and a nomination of one batch per product.
pub fn t1_small() -> Instance {
    let mut inst = t1();
    inst.horizon.len = 12;
    inst.nominations = vec![nomination("R", 100, 44)];
    inst
}

/// T1 with a horizon long enough to extract the full 10/10 nomination, and
/// room at `A` to store it.
pub fn t1_long() -> Instance {
    let mut inst = t1();
    inst.horizon.len = 96;
    inst.sites[1] = storage("A", 2000, 120);
    inst
}

/// Path R → A → B with a short regime `r1` (e1) and a long regime `r12` (e1, e2).
pub fn two_edge() -> Instance {
    let mut inst = t1();
    inst.sites.push(storage("B", 1000, 120));
    inst.edges.push(edge("e2", "A", "B"));
    inst.regimes.push(regime("r12", &["e1", "e2"]));
    inst
}
