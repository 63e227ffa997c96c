//! Enumeration of every placeable batch.
//!
//! A batch spec is one (regime, product, size) combination. Each spec is
//! realized as a chain of placed batches, one per edge of the regime's path,
//! all sharing the same length. The first realization is the *initial*
//! batch, the last the *final* one, anything in between is *transit*.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::{Instance, ProductKind, PumpingRegime, SizeVariant};
use crate::rational::Rational;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Initial,
    Transit,
    Final,
    /// Single-edge regimes: the batch is both initial and final.
    InitialFinal,
}

impl Classification {
    fn for_position(position: usize, path_len: usize) -> Self {
        match (position == 0, position + 1 == path_len) {
            (true, true) => Classification::InitialFinal,
            (true, false) => Classification::Initial,
            (false, true) => Classification::Final,
            (false, false) => Classification::Transit,
        }
    }

    pub fn is_initial(self) -> bool {
        matches!(self, Classification::Initial | Classification::InitialFinal)
    }

    pub fn is_final(self) -> bool {
        matches!(self, Classification::Final | Classification::InitialFinal)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Initial => "initial",
            Classification::Transit => "transit",
            Classification::Final => "final",
            Classification::InitialFinal => "initial_final",
        }
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchSpec {
    /// `regime:product:variant`, unique within a catalog.
    pub id: String,
    pub regime: usize,
    pub product: usize,
    pub product_kind: ProductKind,
    pub volume: i64,
    pub length: usize,
    pub variant: SizeVariant,
    pub cost: Rational,
    /// Edge indices of the regime path, in order.
    pub chain: Vec<usize>,
}

impl BatchSpec {
    pub fn is_staining(&self) -> bool {
        self.product_kind == ProductKind::Staining
    }

    pub fn is_flushing(&self) -> bool {
        self.product_kind == ProductKind::Flushing
    }

    pub fn initial_edge(&self) -> usize {
        self.chain[0]
    }

    pub fn final_edge(&self) -> usize {
        *self.chain.last().expect("chains are never empty")
    }
}

pub fn batch_spec_id(regime: &str, product: &str, variant: SizeVariant) -> String {
    let v = match variant {
        SizeVariant::Standard => "standard",
        SizeVariant::FlushFill => "flush_fill",
    };
    format!("{regime}:{product}:{v}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PlacedBatchRef {
    pub edge: usize,
    pub batch: usize,
    pub classification: Classification,
    /// Index of `edge` in the batch's chain.
    pub position: usize,
}

#[derive(Debug, Clone)]
pub struct BatchCatalog {
    pub specs: Vec<BatchSpec>,
    /// Placed batches per edge, ordered by spec index.
    pub per_edge: Vec<Vec<PlacedBatchRef>>,
    /// F sets: flushing batches able to clean after a staining spec on an edge.
    pub flush_sets: BTreeMap<(usize, usize), Vec<usize>>,
    /// E sets: staining batches on an edge whose product differs from the key product.
    pub exclusion_sets: BTreeMap<(usize, usize), Vec<usize>>,
    /// Flushing volume of each regime.
    pub regime_flush_volume: Vec<i64>,
    pub horizon_len: usize,
    pub t_max: usize,
    pub warnings: Vec<String>,
    by_id: BTreeMap<String, usize>,
}

/// Number of time steps needed to pump `volume` units at the regime's rate
/// for `product`, rounded up.
pub fn compute_batch_length(regime: &PumpingRegime, product: &str, volume: i64) -> Result<usize> {
    let rate = regime
        .flow_rate
        .get(product)
        .copied()
        .filter(Rational::is_positive)
        .ok_or_else(|| Error::CannotPump {
            regime: regime.id.clone(),
            product: product.to_string(),
        })?;
    let steps = (Rational::from_int(volume) * Rational::new(rate.denom(), rate.numer())).ceil_to_i64();
    Ok(steps.max(1) as usize)
}

/// Batch sizes of `product` originating at `site` over all regimes starting there.
pub fn build_batch_sizes(instance: &Instance, site: &str, product: &str) -> Result<BTreeSet<i64>> {
    let mut sizes = BTreeSet::new();
    for regime in &instance.regimes {
        if instance.regime_origin(regime) == Some(site) {
            sizes.extend(
                regime_batch_sizes(instance, regime, product)?
                    .into_iter()
                    .map(|(_, v)| v),
            );
        }
    }
    if sizes.is_empty() {
        sizes.insert(standard_batch(instance, site, product)?);
    }
    Ok(sizes)
}

fn standard_batch(instance: &Instance, site: &str, product: &str) -> Result<i64> {
    instance
        .site(site)
        .and_then(|s| s.standard_batch.get(product).copied())
        .ok_or_else(|| Error::MissingStandardBatch {
            site: site.to_string(),
            product: product.to_string(),
        })
}

/// Batch sizes of `product` restricted to one regime: the origin's standard
/// size, plus the regime's flushing volume for flushing products when it is
/// strictly larger.
pub fn regime_batch_sizes(
    instance: &Instance,
    regime: &PumpingRegime,
    product: &str,
) -> Result<Vec<(SizeVariant, i64)>> {
    let origin = instance.regime_origin(regime).ok_or_else(|| Error::UnknownReference {
        kind: "edge",
        id: regime.edges.first().cloned().unwrap_or_default(),
    })?;
    let kind = instance
        .product(product)
        .ok_or_else(|| Error::UnknownReference {
            kind: "product",
            id: product.to_string(),
        })?
        .kind;
    let standard = standard_batch(instance, origin, product)?;
    let mut sizes = vec![(SizeVariant::Standard, standard)];
    let flush = instance.flush_volume(regime);
    if kind == ProductKind::Flushing && flush > standard {
        sizes.push((SizeVariant::FlushFill, flush));
    }
    Ok(sizes)
}

impl BatchCatalog {
    /// Enumerates all batch specs and their chained placements.
    pub fn build(instance: &Instance) -> Result<BatchCatalog> {
        let mut specs = Vec::new();
        let mut per_edge = vec![Vec::new(); instance.edges.len()];
        let mut by_id = BTreeMap::new();

        for (ri, regime) in instance.regimes.iter().enumerate() {
            let chain: Vec<usize> = regime
                .edges
                .iter()
                .map(|e| {
                    instance.edge_index(e).ok_or_else(|| Error::UnknownReference {
                        kind: "edge",
                        id: e.clone(),
                    })
                })
                .collect::<Result<_>>()?;
            for (pi, product) in instance.products.iter().enumerate() {
                if !regime.flow_rate.contains_key(&product.id) {
                    continue;
                }
                for (variant, volume) in regime_batch_sizes(instance, regime, &product.id)? {
                    let length = compute_batch_length(regime, &product.id, volume)?;
                    let id = batch_spec_id(&regime.id, &product.id, variant);
                    let cost = regime.cost_per_batch.get(&id).copied().unwrap_or_else(|| {
                        regime.cost_per_step.unwrap_or(Rational::ZERO) * Rational::from_int(length as i64)
                    });
                    let index = specs.len();
                    for (position, &edge) in chain.iter().enumerate() {
                        per_edge[edge].push(PlacedBatchRef {
                            edge,
                            batch: index,
                            classification: Classification::for_position(position, chain.len()),
                            position,
                        });
                    }
                    by_id.insert(id.clone(), index);
                    specs.push(BatchSpec {
                        id,
                        regime: ri,
                        product: pi,
                        product_kind: product.kind,
                        volume,
                        length,
                        variant,
                        cost,
                        chain: chain.clone(),
                    });
                }
            }
        }

        let regime_flush_volume: Vec<i64> = instance.regimes.iter().map(|r| instance.flush_volume(r)).collect();

        let mut exclusion_sets = BTreeMap::new();
        let mut flush_sets = BTreeMap::new();
        let mut warnings = Vec::new();
        for (edge, placed) in per_edge.iter().enumerate() {
            for (p0, product) in instance.products.iter().enumerate() {
                if product.kind != ProductKind::Staining {
                    continue;
                }
                let excluded: Vec<usize> = placed
                    .iter()
                    .map(|pb| pb.batch)
                    .filter(|&b| specs[b].is_staining() && specs[b].product != p0)
                    .collect();
                exclusion_sets.insert((edge, p0), excluded);
            }
            for pb in placed {
                let b0 = &specs[pb.batch];
                if !b0.is_staining() {
                    continue;
                }
                let needed = regime_flush_volume[b0.regime];
                let flushers: Vec<usize> = placed
                    .iter()
                    .map(|other| other.batch)
                    .filter(|&b| {
                        let s = &specs[b];
                        s.is_flushing() && s.regime == b0.regime && s.volume >= needed
                    })
                    .collect();
                if flushers.is_empty() && pb.classification.is_initial() {
                    warnings.push(format!(
                        "staining batch can never be flushed: {} on edge {}",
                        b0.id, instance.edges[edge].id
                    ));
                }
                flush_sets.insert((edge, pb.batch), flushers);
            }
        }

        Ok(BatchCatalog {
            specs,
            per_edge,
            flush_sets,
            exclusion_sets,
            regime_flush_volume,
            horizon_len: instance.horizon.len,
            t_max: instance.t_max(),
            warnings,
            by_id,
        })
    }

    pub fn spec_index(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn spec(&self, index: usize) -> &BatchSpec {
        &self.specs[index]
    }

    /// The placed realization of `batch` on `edge`, if the batch uses that edge.
    pub fn placed(&self, edge: usize, batch: usize) -> Option<&PlacedBatchRef> {
        self.per_edge.get(edge)?.iter().find(|pb| pb.batch == batch)
    }

    /// Latest start time at which the batch still fits: `t + L <= t_max`.
    pub fn last_start(&self, batch: usize) -> Option<usize> {
        self.t_max.checked_sub(self.specs[batch].length)
    }

    /// Number of admissible start times of a batch on any of its edges.
    pub fn start_count(&self, batch: usize) -> usize {
        self.last_start(batch).map_or(0, |t| t + 1)
    }

    pub fn placed_count(&self) -> usize {
        self.per_edge.iter().map(Vec::len).sum()
    }

    pub fn flush_set(&self, edge: usize, batch: usize) -> &[usize] {
        self.flush_sets.get(&(edge, batch)).map_or(&[], Vec::as_slice)
    }

    pub fn exclusion_set(&self, edge: usize, product: usize) -> &[usize] {
        self.exclusion_sets.get(&(edge, product)).map_or(&[], Vec::as_slice)
    }

    /// CSV dump: edge, batch id, regime, product, volume, length, classification.
    pub fn to_csv(&self, instance: &Instance) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "edge",
            "batch",
            "regime",
            "product",
            "volume",
            "length",
            "classification",
        ])?;
        for placed in &self.per_edge {
            for pb in placed {
                let s = &self.specs[pb.batch];
                w.write_record([
                    instance.edges[pb.edge].id.as_str(),
                    s.id.as_str(),
                    instance.regimes[s.regime].id.as_str(),
                    instance.products[s.product].id.as_str(),
                    &s.volume.to_string(),
                    &s.length.to_string(),
                    pb.classification.as_str(),
                ])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Csv(e.into_error().into()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn table_four_lengths() {
        let regime = fixtures::t1().regimes[0].clone();
        assert_eq!(compute_batch_length(&regime, "F", 100).unwrap(), 6);
        assert_eq!(compute_batch_length(&regime, "S", 44).unwrap(), 3);
    }

    #[test]
    fn volume_equal_to_rate_takes_one_step() {
        let mut regime = fixtures::t1().regimes[0].clone();
        regime.flow_rate.insert("F".into(), Rational::from_int(25));
        assert_eq!(compute_batch_length(&regime, "F", 25).unwrap(), 1);
        assert_eq!(compute_batch_length(&regime, "F", 26).unwrap(), 2);
    }

    #[test]
    fn zero_rate_is_rejected() {
        let mut regime = fixtures::t1().regimes[0].clone();
        regime.flow_rate.insert("F".into(), Rational::ZERO);
        assert!(matches!(
            compute_batch_length(&regime, "F", 10),
            Err(Error::CannotPump { .. })
        ));
        assert!(compute_batch_length(&regime, "X", 10).is_err());
    }

    #[test]
    fn staining_sizes_are_singletons() {
        let mut inst = fixtures::t1();
        inst.regimes[0].flush_volume = Some(500);
        let sizes = build_batch_sizes(&inst, "R", "S").unwrap();
        assert_eq!(sizes.into_iter().collect::<Vec<_>>(), vec![44]);
    }

    #[test]
    fn flush_volume_equal_to_standard_adds_nothing() {
        let inst = fixtures::t1();
        assert_eq!(inst.flush_volume(&inst.regimes[0]), 100);
        let sizes = build_batch_sizes(&inst, "R", "F").unwrap();
        assert_eq!(sizes.into_iter().collect::<Vec<_>>(), vec![100]);
    }

    #[test]
    fn flushing_sizes_collect_larger_regime_volumes() {
        let mut inst = fixtures::t1();
        let mut r2 = inst.regimes[0].clone();
        r2.id = "r2".into();
        r2.flush_volume = Some(120);
        inst.regimes[0].flush_volume = Some(150);
        inst.regimes.push(r2);
        let sizes = build_batch_sizes(&inst, "R", "F").unwrap();
        assert_eq!(sizes.into_iter().collect::<Vec<_>>(), vec![100, 120, 150]);
        // the regime-restricted view keeps each regime's own size only
        let r1 = regime_batch_sizes(&inst, &inst.regimes[0], "F").unwrap();
        assert_eq!(r1, vec![(SizeVariant::Standard, 100), (SizeVariant::FlushFill, 150)]);
    }

    #[test]
    fn missing_standard_batch_is_an_error() {
        let mut inst = fixtures::t1();
        inst.sites[0].standard_batch.remove("S");
        assert!(matches!(
            build_batch_sizes(&inst, "R", "S"),
            Err(Error::MissingStandardBatch { .. })
        ));
    }

    #[test]
    fn t1_catalog() {
        let inst = fixtures::t1();
        let cat = BatchCatalog::build(&inst).unwrap();
        assert_eq!(cat.specs.len(), 2);
        assert_eq!(cat.per_edge[0].len(), 2);
        assert!(cat.per_edge[0]
            .iter()
            .all(|pb| pb.classification == Classification::InitialFinal));
        let stain = cat.spec_index("r1:S:standard").unwrap();
        let flush = cat.spec_index("r1:F:standard").unwrap();
        // flush volume 100 equals r_V = 100, so it qualifies
        assert_eq!(cat.flush_set(0, stain), &[flush]);
        assert!(cat.warnings.is_empty());
    }

    #[test]
    fn two_edge_regime_has_initial_and_final() {
        let inst = fixtures::two_edge();
        let cat = BatchCatalog::build(&inst).unwrap();
        let long = cat.spec_index("r12:S:standard").unwrap();
        let refs: Vec<_> = cat
            .per_edge
            .iter()
            .flatten()
            .filter(|pb| pb.batch == long)
            .map(|pb| pb.classification)
            .collect();
        assert_eq!(refs, vec![Classification::Initial, Classification::Final]);
    }

    #[test]
    fn unflushable_stain_warns() {
        let mut inst = fixtures::t1();
        inst.regimes[0].flush_volume = Some(100);
        inst.sites[0].standard_batch.insert("F".into(), 90);
        // r_V = 100 > 90 so a flush-fill batch of 100 exists and stains stay flushable
        assert!(BatchCatalog::build(&inst).unwrap().warnings.is_empty());
        inst.regimes[0].flow_rate.remove("F");
        let cat = BatchCatalog::build(&inst).unwrap();
        assert_eq!(cat.warnings.len(), 1);
        assert!(cat.warnings[0].contains("can never be flushed"));
    }

    #[test]
    fn csv_dump_lists_every_placement() {
        let inst = fixtures::two_edge();
        let cat = BatchCatalog::build(&inst).unwrap();
        let csv = cat.to_csv(&inst).unwrap();
        assert_eq!(csv.lines().count(), 1 + cat.placed_count());
        assert!(csv.starts_with("edge,batch,regime,product,volume,length,classification"));
    }
}
