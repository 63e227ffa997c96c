//! Problem-instance data model.
//!
//! An [`Instance`] is the full, immutable description of one scheduling
//! problem: the network (sites and edges), products, pumping regimes, the
//! discrete horizon, and every side constraint and objective weight. It is
//! read from a single JSON document whose layout mirrors these types field
//! for field; see `docs/instance-format.md` in the repository.
//!
//! Volumes are integral *volume units* per product; `Product::unit_volume`
//! carries the physical scale. Flow rates, weights and costs are exact
//! rationals.

mod validate;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rational::Rational;

pub use validate::{validate_instance, Violation, ViolationCode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProductKind {
    Flushing,
    Staining,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Product {
    pub id: String,
    pub kind: ProductKind,
    /// Physical volume of one volume unit (e.g. m³ per unit).
    #[serde(default = "one")]
    pub unit_volume: Rational,
}

fn one() -> Rational {
    Rational::ONE
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteKind {
    Storage,
    Refinery,
}

/// A per-time quantity: either constant over the horizon or one value per step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Profile {
    Constant(i64),
    Series(Vec<i64>),
}

impl Profile {
    /// Value at `t`; series shorter than the horizon repeat their last entry.
    pub fn at(&self, t: usize) -> i64 {
        match self {
            Profile::Constant(v) => *v,
            Profile::Series(values) => values.get(t).or_else(|| values.last()).copied().unwrap_or(0),
        }
    }
}

/// A signed change of the base occupancy taking effect at step `t`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaseDelta {
    pub product: String,
    pub t: usize,
    pub delta: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub id: String,
    pub kind: SiteKind,
    /// Upper storage bound per product. Missing products are unbounded.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub capacity_max: BTreeMap<String, Profile>,
    /// Lower storage bound per product. Missing products default to 0.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub capacity_min: BTreeMap<String, Profile>,
    /// Occupancy at t = 0 per product.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub initial_occupancy: BTreeMap<String, i64>,
    /// External in/outtakes; accumulated into the base occupancy series.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub base_deltas: Vec<BaseDelta>,
    /// Standard batch size per product for batches originating here.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub standard_batch: BTreeMap<String, i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub id: String,
    pub origin: String,
    pub destination: String,
    #[serde(default)]
    pub pipe_volume: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PumpingRegime {
    pub id: String,
    /// Ordered path of edge ids.
    pub edges: Vec<String>,
    /// Volume units per time step, per transportable product.
    pub flow_rate: BTreeMap<String, Rational>,
    /// Flushing volume; defaults to the summed pipe volume of the path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flush_volume: Option<i64>,
    /// Explicit per-batch costs keyed by batch-spec id.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub cost_per_batch: BTreeMap<String, Rational>,
    /// Cost per time step of pumping, used for batches without an explicit cost.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_per_step: Option<Rational>,
    /// Informational transit times per edge; not used by any constraint.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub pass_times: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    /// Number of time steps.
    pub len: usize,
    #[serde(default = "one")]
    pub step_hours: Rational,
}

impl TimeGrid {
    pub fn t_max(&self) -> usize {
        self.len.saturating_sub(1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NominationLimit {
    pub product: String,
    pub max_volume: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Nomination {
    pub refinery: String,
    pub limits: Vec<NominationLimit>,
}

/// A set of time steps, given as an explicit list or an inclusive range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeSet {
    List(Vec<usize>),
    Range { from: usize, to: usize },
}

impl TimeSet {
    pub fn range(from: usize, to: usize) -> Self {
        TimeSet::Range { from, to }
    }

    pub fn contains(&self, t: usize) -> bool {
        match self {
            TimeSet::List(ts) => ts.contains(&t),
            TimeSet::Range { from, to } => (*from..=*to).contains(&t),
        }
    }

    /// Sorted, deduplicated members.
    pub fn to_vec(&self) -> Vec<usize> {
        match self {
            TimeSet::List(ts) => {
                let mut v = ts.clone();
                v.sort_unstable();
                v.dedup();
                v
            }
            TimeSet::Range { from, to } => (*from..=*to).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            TimeSet::List(ts) => ts.is_empty(),
            TimeSet::Range { from, to } => from > to,
        }
    }

    pub fn max(&self) -> Option<usize> {
        match self {
            TimeSet::List(ts) => ts.iter().copied().max(),
            TimeSet::Range { from, to } => (from <= to).then_some(*to),
        }
    }
}

/// Identifies a batch spec on a specific edge.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BatchOnEdge {
    pub edge: String,
    pub batch: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outage {
    /// Reduces `capacity_max` of (site, product) by `reduction` during `times`.
    Tank {
        site: String,
        product: String,
        reduction: i64,
        times: TimeSet,
    },
    /// Forbids starting any listed batch on its edge during `times`.
    Transport {
        placements: Vec<BatchOnEdge>,
        times: TimeSet,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThroughputLimit {
    pub edges: Vec<String>,
    pub product: String,
    pub window: TimeSet,
    pub limit: i64,
    /// Count every batch on the listed edges instead of initial batches only.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub per_edge: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimeExclusionGroup {
    pub members: Vec<String>,
}

/// End-of-horizon occupancy preference for one (site, product).
///
/// Exactly one of `optimal` (with `k`) or `signed_weight` must be given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionTarget {
    pub site: String,
    pub product: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimal: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Rational>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signed_weight: Option<Rational>,
}

/// One placement of a previous plan: batch `batch` starts on `edge` at `t`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PlanEntry {
    pub edge: String,
    pub batch: String,
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    #[serde(default)]
    pub alpha: Rational,
    #[serde(default)]
    pub beta: Rational,
    #[serde(default)]
    pub gamma: Rational,
    #[serde(default)]
    pub theta: Rational,
    /// Relative product importance in the intake term; missing products weigh 1.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub eta: BTreeMap<String, Rational>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub distribution_targets: Vec<DistributionTarget>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub previous_plan: Vec<PlanEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub executed: Vec<PlanEntry>,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights {
            alpha: Rational::ONE,
            beta: Rational::ZERO,
            gamma: Rational::ZERO,
            theta: Rational::ZERO,
            eta: BTreeMap::new(),
            distribution_targets: Vec::new(),
            previous_plan: Vec::new(),
            executed: Vec::new(),
        }
    }
}

impl CostWeights {
    pub fn eta(&self, product: &str) -> Rational {
        self.eta.get(product).copied().unwrap_or(Rational::ONE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeVariant {
    #[default]
    Standard,
    FlushFill,
}

/// A transport between fixed endpoints that must start at a given time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedTransport {
    pub regime: String,
    pub product: String,
    pub start: usize,
    #[serde(default, skip_serializing_if = "is_standard")]
    pub variant: SizeVariant,
}

fn is_standard(v: &SizeVariant) -> bool {
    *v == SizeVariant::Standard
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub products: Vec<Product>,
    pub sites: Vec<Site>,
    pub edges: Vec<Edge>,
    pub regimes: Vec<PumpingRegime>,
    pub horizon: TimeGrid,
    #[serde(default)]
    pub nominations: Vec<Nomination>,
    #[serde(default)]
    pub outages: Vec<Outage>,
    #[serde(default)]
    pub limits: Vec<ThroughputLimit>,
    #[serde(default)]
    pub exclusion_groups: Vec<RegimeExclusionGroup>,
    #[serde(default)]
    pub weights: CostWeights,
    #[serde(default)]
    pub fixed_transports: Vec<FixedTransport>,
}

/// How strictly the loader treats keys it does not recognise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KeyPolicy {
    #[default]
    Strict,
    Lenient,
}

impl Instance {
    /// Parses an instance document. Under [`KeyPolicy::Strict`] unknown keys
    /// are rejected; the instance is *not* validated here.
    pub fn from_json_str(text: &str, policy: KeyPolicy) -> Result<Instance> {
        let mut unknown = Vec::new();
        let mut de = serde_json::Deserializer::from_str(text);
        let instance: Instance = serde_ignored::deserialize(&mut de, |path| {
            unknown.push(path.to_string());
        })?;
        de.end()?;
        if policy == KeyPolicy::Strict && !unknown.is_empty() {
            return Err(Error::UnknownKeys(unknown));
        }
        Ok(instance)
    }

    pub fn load(path: impl AsRef<Path>, policy: KeyPolicy) -> Result<Instance> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Instance::from_json_str(&text, policy)
    }

    /// Loads and validates; any violation is an error.
    pub fn load_valid(path: impl AsRef<Path>, policy: KeyPolicy) -> Result<Instance> {
        let instance = Instance::load(path, policy)?;
        instance.ensure_valid()?;
        Ok(instance)
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = validate_instance(self);
        if report.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInstance(report))
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serialization is infallible")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_pretty() + "\n").map_err(|e| Error::io(path, e))
    }

    /// SHA-256 of the compact canonical serialization.
    pub fn content_hash(&self) -> String {
        let text = serde_json::to_string(self).expect("instance serialization is infallible");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn horizon_len(&self) -> usize {
        self.horizon.len
    }

    pub fn t_max(&self) -> usize {
        self.horizon.t_max()
    }

    pub fn product_index(&self, id: &str) -> Option<usize> {
        self.products.iter().position(|p| p.id == id)
    }

    pub fn site_index(&self, id: &str) -> Option<usize> {
        self.sites.iter().position(|s| s.id == id)
    }

    pub fn edge_index(&self, id: &str) -> Option<usize> {
        self.edges.iter().position(|e| e.id == id)
    }

    pub fn regime_index(&self, id: &str) -> Option<usize> {
        self.regimes.iter().position(|r| r.id == id)
    }

    pub fn product(&self, id: &str) -> Option<&Product> {
        self.products.iter().find(|p| p.id == id)
    }

    pub fn site(&self, id: &str) -> Option<&Site> {
        self.sites.iter().find(|s| s.id == id)
    }

    pub fn edge(&self, id: &str) -> Option<&Edge> {
        self.edges.iter().find(|e| e.id == id)
    }

    pub fn regime(&self, id: &str) -> Option<&PumpingRegime> {
        self.regimes.iter().find(|r| r.id == id)
    }

    pub fn storage_sites(&self) -> impl Iterator<Item = (usize, &Site)> {
        self.sites
            .iter()
            .enumerate()
            .filter(|(_, s)| s.kind == SiteKind::Storage)
    }

    /// First site of the regime's path.
    pub fn regime_origin(&self, regime: &PumpingRegime) -> Option<&str> {
        let first = regime.edges.first()?;
        self.edge(first).map(|e| e.origin.as_str())
    }

    /// Last site of the regime's path.
    pub fn regime_destination(&self, regime: &PumpingRegime) -> Option<&str> {
        let last = regime.edges.last()?;
        self.edge(last).map(|e| e.destination.as_str())
    }

    /// Flushing volume of a regime: explicit value or the summed pipe volume.
    pub fn flush_volume(&self, regime: &PumpingRegime) -> i64 {
        regime.flush_volume.unwrap_or_else(|| {
            regime
                .edges
                .iter()
                .filter_map(|e| self.edge(e))
                .map(|e| e.pipe_volume)
                .sum()
        })
    }

    /// Base occupancy series c^base for (site, product): the initial
    /// occupancy plus all deltas at or before each step.
    pub fn base_occupancy(&self, site: &Site, product: &str) -> Vec<i64> {
        let len = self.horizon.len;
        let mut step = vec![0i64; len];
        for d in site.base_deltas.iter().filter(|d| d.product == product) {
            if d.t < len {
                step[d.t] += d.delta;
            }
        }
        let mut level = site.initial_occupancy.get(product).copied().unwrap_or(0);
        step.iter()
            .map(|delta| {
                level += delta;
                level
            })
            .collect()
    }

    /// Capacity ceiling before outages; `None` means unbounded.
    pub fn nominal_capacity_max(&self, site: &Site, product: &str, t: usize) -> Option<i64> {
        site.capacity_max.get(product).map(|p| p.at(t))
    }

    pub fn capacity_min(&self, site: &Site, product: &str, t: usize) -> i64 {
        site.capacity_min.get(product).map_or(0, |p| p.at(t))
    }
}
