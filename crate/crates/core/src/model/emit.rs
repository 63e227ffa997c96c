//! Constraint emitters, one per family, plus the objective.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::Serialize;

use super::{Family, LinearConstraint, Objective, Sense, StorageCoord, VariableRegistry};
use crate::catalog::{batch_spec_id, BatchCatalog};
use crate::error::{Error, Result};
use crate::instance::{BatchOnEdge, Instance, Outage, PlanEntry, SiteKind};
use crate::rational::Rational;

/// How the occupancy definitions are written.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CapacityForm {
    /// Difference of consecutive steps; each row touches O(batches) terms.
    #[default]
    Telescoped,
    /// Every row sums the full history.
    Cumulative,
}

fn one() -> Rational {
    Rational::ONE
}

fn vol(v: i64) -> Rational {
    Rational::from_int(v)
}

/// Combines duplicate variables and drops zero coefficients.
pub(crate) fn merge_terms(terms: Vec<(usize, Rational)>) -> Vec<(usize, Rational)> {
    let mut acc: BTreeMap<usize, Rational> = BTreeMap::new();
    for (v, c) in terms {
        *acc.entry(v).or_insert(Rational::ZERO) += c;
    }
    acc.into_iter().filter(|(_, c)| !c.is_zero()).collect()
}

/// At most one batch occupies an edge at any step.
pub fn emit_packing(catalog: &BatchCatalog, vars: &VariableRegistry) -> Vec<LinearConstraint> {
    let mut rows = Vec::new();
    for (edge, placed) in catalog.per_edge.iter().enumerate() {
        for t in 0..catalog.horizon_len {
            let mut terms = Vec::new();
            for pb in placed {
                let len = catalog.spec(pb.batch).length;
                let from = (t + 1).saturating_sub(len);
                for start in from..=t {
                    if let Some(v) = vars.placement(edge, pb.batch, start) {
                        terms.push((v, one()));
                    }
                }
            }
            rows.push(LinearConstraint::le(terms, 1, Family::Packing));
        }
    }
    rows
}

/// Consecutive placements of one chain start together.
pub fn emit_routes(catalog: &BatchCatalog, vars: &VariableRegistry) -> Vec<LinearConstraint> {
    let mut rows = Vec::new();
    for (b, spec) in catalog.specs.iter().enumerate() {
        let Some(last) = catalog.last_start(b) else {
            continue;
        };
        for pair in spec.chain.windows(2) {
            for t in 0..=last {
                let (Some(a), Some(c)) = (vars.placement(pair[0], b, t), vars.placement(pair[1], b, t)) else {
                    continue;
                };
                rows.push(LinearConstraint::eq(vec![(a, one()), (c, -one())], 0, Family::Routes));
            }
        }
    }
    rows
}

/// Staining batches must be followed by a flushing batch of the same regime,
/// with no other staining product in between.
///
/// Three row kinds per staining start `t` with end `tau = t + L`: the end
/// marker equals the placement, nothing of another staining product starts at
/// `tau`, and a valid flushing batch starts at `tau` unless the same batch
/// repeats.
pub fn emit_flushing(catalog: &BatchCatalog, vars: &VariableRegistry, relax_terminal: bool) -> Vec<LinearConstraint> {
    let mut links = Vec::new();
    let mut blocks = Vec::new();
    let mut follow_ups = Vec::new();
    for (edge, placed) in catalog.per_edge.iter().enumerate() {
        for pb in placed {
            let spec = catalog.spec(pb.batch);
            if !spec.is_staining() || !pb.classification.is_initial() {
                continue;
            }
            let Some(last) = catalog.last_start(pb.batch) else {
                continue;
            };
            let excluded = catalog.exclusion_set(edge, spec.product);
            let flushers = catalog.flush_set(edge, pb.batch);
            let shortest = flushers
                .iter()
                .map(|&f| catalog.spec(f).length)
                .chain(std::iter::once(spec.length))
                .min()
                .unwrap_or(spec.length);
            for t in 0..=last {
                let tau = t + spec.length;
                let (Some(v), Some(w)) = (vars.placement(edge, pb.batch, t), vars.endpoint(edge, pb.batch, tau)) else {
                    continue;
                };
                links.push(LinearConstraint::eq(vec![(v, one()), (w, -one())], 0, Family::Flushing));

                let mut terms: Vec<_> = excluded
                    .iter()
                    .filter_map(|&b| vars.placement(edge, b, tau))
                    .map(|x| (x, one()))
                    .collect();
                terms.push((w, one()));
                blocks.push(LinearConstraint::le(terms, 1, Family::Flushing));

                if relax_terminal && tau + shortest > catalog.t_max {
                    continue;
                }
                let mut terms = vec![(w, one())];
                if let Some(x) = vars.placement(edge, pb.batch, tau) {
                    terms.push((x, -one()));
                }
                terms.extend(
                    flushers
                        .iter()
                        .filter_map(|&f| vars.placement(edge, f, tau))
                        .map(|x| (x, -one())),
                );
                follow_ups.push(LinearConstraint::le(terms, 0, Family::Flushing));
            }
        }
    }
    links.extend(blocks);
    links.extend(follow_ups);
    links
}

/// Regimes of one exclusion group never run at the same time.
///
/// For every step `t` and every initial batch of a member regime, the row
/// sums starts in `t ..= min(t + L, t_max)`.
pub fn emit_regime_exclusions(
    instance: &Instance,
    catalog: &BatchCatalog,
    vars: &VariableRegistry,
) -> Result<Vec<LinearConstraint>> {
    let mut rows = Vec::new();
    for group in &instance.exclusion_groups {
        let members: BTreeSet<usize> = group
            .members
            .iter()
            .map(|m| {
                instance.regime_index(m).ok_or_else(|| Error::UnknownReference {
                    kind: "regime",
                    id: m.clone(),
                })
            })
            .collect::<Result<_>>()?;
        let batches: Vec<(usize, usize, usize)> = catalog
            .specs
            .iter()
            .enumerate()
            .filter(|(_, s)| members.contains(&s.regime))
            .map(|(b, s)| (s.initial_edge(), b, s.length))
            .collect();
        for t in 0..catalog.horizon_len {
            let mut terms = Vec::new();
            for &(edge, b, len) in &batches {
                for start in t..=(t + len).min(catalog.t_max) {
                    if let Some(v) = vars.placement(edge, b, start) {
                        terms.push((v, one()));
                    }
                }
            }
            rows.push(LinearConstraint::le(terms, 1, Family::Exclusion));
        }
    }
    Ok(rows)
}

/// Total tank-outage reduction per (site, product, t).
pub fn tank_reductions(instance: &Instance) -> Result<BTreeMap<(usize, usize, usize), i64>> {
    let mut out = BTreeMap::new();
    for outage in &instance.outages {
        if let Outage::Tank {
            site,
            product,
            reduction,
            times,
        } = outage
        {
            let s = instance.site_index(site).ok_or_else(|| Error::UnknownReference {
                kind: "site",
                id: site.clone(),
            })?;
            let p = instance.product_index(product).ok_or_else(|| Error::UnknownReference {
                kind: "product",
                id: product.clone(),
            })?;
            for t in times.to_vec() {
                if t < instance.horizon.len {
                    *out.entry((s, p, t)).or_insert(0) += reduction;
                }
            }
        }
    }
    Ok(out)
}

/// Occupancy definitions and capacity bounds for every storage site.
///
/// The blocked occupancy counts an incoming batch from its start and an
/// outgoing batch from its end; the on-stock occupancy does the opposite.
/// The upper bound applies to the former, the lower bound to the latter.
pub fn emit_capacity(
    instance: &Instance,
    catalog: &BatchCatalog,
    vars: &VariableRegistry,
    reductions: &BTreeMap<(usize, usize, usize), i64>,
    form: CapacityForm,
) -> Vec<LinearConstraint> {
    let len = catalog.horizon_len;
    let mut rows = Vec::new();
    for (s, site) in instance.storage_sites() {
        for (p, product) in instance.products.iter().enumerate() {
            let base = instance.base_occupancy(site, &product.id);
            let mut inflow = Vec::new();
            let mut outflow = Vec::new();
            for (b, spec) in catalog.specs.iter().enumerate() {
                if spec.product != p {
                    continue;
                }
                if instance.edges[spec.final_edge()].destination == site.id {
                    inflow.push((spec.final_edge(), b));
                }
                if instance.edges[spec.initial_edge()].origin == site.id {
                    outflow.push((spec.initial_edge(), b));
                }
            }
            // (edge, batch, start) contributions with the delay before they count
            let started = |list: &[(usize, usize)], t: usize, delayed: bool, cumulative: bool| {
                let mut terms = Vec::new();
                for &(edge, b) in list {
                    let spec = catalog.spec(b);
                    let shift = if delayed { spec.length } else { 0 };
                    let Some(upto) = t.checked_sub(shift) else {
                        continue;
                    };
                    let from = if cumulative { 0 } else { upto };
                    for start in from..=upto {
                        if let Some(v) = vars.placement(edge, b, start) {
                            terms.push((v, vol(spec.volume)));
                        }
                    }
                }
                terms
            };
            for upper in [true, false] {
                for t in 0..len {
                    let c = if upper {
                        vars.upper(s, p, t)
                    } else {
                        vars.lower(s, p, t)
                    }
                    .expect("occupancy variables exist for all storage sites");
                    let cumulative = form == CapacityForm::Cumulative || t == 0;
                    let mut terms = vec![(c, one())];
                    let mut rhs = base[t];
                    if !cumulative {
                        let prev = if upper {
                            vars.upper(s, p, t - 1)
                        } else {
                            vars.lower(s, p, t - 1)
                        }
                        .expect("occupancy variables exist for all storage sites");
                        terms.push((prev, -one()));
                        rhs -= base[t - 1];
                    }
                    // inflow raises occupancy, outflow lowers it
                    for (v, c) in started(&inflow, t, !upper, cumulative) {
                        terms.push((v, -c));
                    }
                    for (v, c) in started(&outflow, t, upper, cumulative) {
                        terms.push((v, c));
                    }
                    rows.push(LinearConstraint::eq(
                        merge_terms(terms),
                        rhs,
                        Family::CapacityDefinition,
                    ));
                }
            }
            for t in 0..len {
                let coord = Some(StorageCoord { site: s, product: p, t });
                if let Some(cap) = instance.nominal_capacity_max(site, &product.id, t) {
                    let cap = cap - reductions.get(&(s, p, t)).copied().unwrap_or(0);
                    let c = vars.upper(s, p, t).expect("occupancy variable");
                    let mut row = LinearConstraint::le(vec![(c, one())], cap, Family::CapacityUpper);
                    row.coord = coord;
                    rows.push(row);
                }
            }
            for t in 0..len {
                let coord = Some(StorageCoord { site: s, product: p, t });
                let c = vars.lower(s, p, t).expect("occupancy variable");
                let min = instance.capacity_min(site, &product.id, t);
                let mut row = LinearConstraint::ge(vec![(c, one())], min, Family::CapacityLower);
                row.coord = coord;
                rows.push(row);
            }
        }
    }
    rows
}

fn resolve_on_edge(instance: &Instance, catalog: &BatchCatalog, edge: &str, batch: &str) -> Result<(usize, usize)> {
    let e = instance.edge_index(edge).ok_or_else(|| Error::UnknownReference {
        kind: "edge",
        id: edge.to_string(),
    })?;
    let b = catalog.spec_index(batch).ok_or_else(|| Error::UnknownReference {
        kind: "batch",
        id: batch.to_string(),
    })?;
    if catalog.placed(e, b).is_none() {
        return Err(Error::BatchNotOnEdge {
            edge: edge.to_string(),
            batch: batch.to_string(),
        });
    }
    Ok((e, b))
}

/// Transport outages forbid the listed starts. Tank outages only lower the
/// capacity ceiling and are applied through [`tank_reductions`].
pub fn emit_outages(
    instance: &Instance,
    catalog: &BatchCatalog,
    vars: &VariableRegistry,
) -> Result<Vec<LinearConstraint>> {
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for outage in &instance.outages {
        let Outage::Transport { placements, times } = outage else {
            continue;
        };
        for BatchOnEdge { edge, batch } in placements {
            let (e, b) = resolve_on_edge(instance, catalog, edge, batch)?;
            for t in times.to_vec() {
                if let Some(v) = vars.placement(e, b, t) {
                    if seen.insert(v) {
                        rows.push(LinearConstraint::eq(vec![(v, one())], 0, Family::Outage));
                    }
                }
            }
        }
    }
    Ok(rows)
}

/// Pins fixed transports and already executed placements to one.
///
/// `outage_rows` are the rows returned by [`emit_outages`]; a placement
/// forced both ways (directly or through its chain) is rejected.
pub fn emit_fixed_transport(
    instance: &Instance,
    catalog: &BatchCatalog,
    vars: &VariableRegistry,
    outage_rows: &[LinearConstraint],
) -> Result<Vec<LinearConstraint>> {
    let forbidden: HashSet<usize> = outage_rows
        .iter()
        .filter(|r| r.family == Family::Outage && r.sense == Sense::Eq && r.rhs.is_zero())
        .filter_map(|r| r.terms.first().map(|&(v, _)| v))
        .collect();
    let mut pinned: Vec<(usize, String)> = Vec::new();

    for fixed in &instance.fixed_transports {
        let id = batch_spec_id(&fixed.regime, &fixed.product, fixed.variant);
        let b = catalog.spec_index(&id).ok_or_else(|| Error::UnknownReference {
            kind: "batch",
            id: id.clone(),
        })?;
        let spec = catalog.spec(b);
        for &edge in &spec.chain {
            let v = vars
                .placement(edge, b, fixed.start)
                .ok_or_else(|| Error::FixedOutsideHorizon(format!("{id} at t={}", fixed.start)))?;
            pinned.push((v, format!("{id} at t={}", fixed.start)));
        }
    }
    for PlanEntry { edge, batch, t } in &instance.weights.executed {
        let (e, b) = resolve_on_edge(instance, catalog, edge, batch)?;
        if vars.placement(e, b, *t).is_none() {
            return Err(Error::PlacementOutsideHorizon {
                edge: edge.clone(),
                batch: batch.clone(),
                start: *t,
            });
        }
        for &chain_edge in &catalog.spec(b).chain {
            if let Some(v) = vars.placement(chain_edge, b, *t) {
                pinned.push((v, format!("executed {batch} on {edge} at t={t}")));
            }
        }
    }

    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (v, what) in pinned {
        if forbidden.contains(&v) {
            return Err(Error::ContradictoryFixings(format!(
                "{what} is fixed but falls into a transport outage"
            )));
        }
        if seen.insert(v) {
            rows.push(LinearConstraint::eq(vec![(v, one())], 1, Family::Fixed));
        }
    }
    Ok(rows)
}

/// Volume caps over time windows. By default only initial batches count;
/// `per_edge` limits count every batch on the listed edges.
pub fn emit_throughput_limits(
    instance: &Instance,
    catalog: &BatchCatalog,
    vars: &VariableRegistry,
) -> Result<Vec<LinearConstraint>> {
    let mut rows = Vec::new();
    for limit in &instance.limits {
        let p = instance
            .product_index(&limit.product)
            .ok_or_else(|| Error::UnknownReference {
                kind: "product",
                id: limit.product.clone(),
            })?;
        let window = limit.window.to_vec();
        let mut terms = Vec::new();
        for edge_id in &limit.edges {
            let e = instance.edge_index(edge_id).ok_or_else(|| Error::UnknownReference {
                kind: "edge",
                id: edge_id.clone(),
            })?;
            for pb in &catalog.per_edge[e] {
                let spec = catalog.spec(pb.batch);
                if spec.product != p || !(limit.per_edge || pb.classification.is_initial()) {
                    continue;
                }
                for &t in &window {
                    if let Some(v) = vars.placement(e, pb.batch, t) {
                        terms.push((v, vol(spec.volume)));
                    }
                }
            }
        }
        rows.push(LinearConstraint::le(
            merge_terms(terms),
            limit.limit,
            Family::Throughput,
        ));
    }
    Ok(rows)
}

/// Initial batches of a product leaving a refinery, over `(edge, batch)`.
fn refinery_outputs(
    instance: &Instance,
    catalog: &BatchCatalog,
    refinery: &str,
    product: usize,
) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (e, edge) in instance.edges.iter().enumerate() {
        if edge.origin != refinery {
            continue;
        }
        for pb in &catalog.per_edge[e] {
            if pb.classification.is_initial() && catalog.spec(pb.batch).product == product {
                out.push((e, pb.batch));
            }
        }
    }
    out
}

/// Nominated maximum volume per refinery and product.
pub fn emit_nominations(
    instance: &Instance,
    catalog: &BatchCatalog,
    vars: &VariableRegistry,
) -> Result<Vec<LinearConstraint>> {
    let mut rows = Vec::new();
    for nom in &instance.nominations {
        for limit in &nom.limits {
            let p = instance
                .product_index(&limit.product)
                .ok_or_else(|| Error::UnknownReference {
                    kind: "product",
                    id: limit.product.clone(),
                })?;
            let mut terms = Vec::new();
            for (e, b) in refinery_outputs(instance, catalog, &nom.refinery, p) {
                let v = catalog.spec(b).volume;
                for t in 0..=catalog.last_start(b).unwrap_or(0) {
                    if let Some(x) = vars.placement(e, b, t) {
                        terms.push((x, vol(v)));
                    }
                }
            }
            rows.push(LinearConstraint::le(terms, limit.max_volume, Family::Nomination));
        }
    }
    Ok(rows)
}

/// Weighted objective and the deviation rows it needs.
///
/// Terms: intake of nominated products, distance of the final on-stock
/// occupancy from its optimum (or a signed linear reward), agreement with the
/// previous plan, and the cost of every placement on every edge.
pub fn emit_objective(
    instance: &Instance,
    catalog: &BatchCatalog,
    vars: &VariableRegistry,
) -> Result<(Objective, Vec<LinearConstraint>)> {
    let w = &instance.weights;
    let t_max = catalog.t_max;
    let mut terms = Vec::new();
    let mut constant = Rational::ZERO;
    let mut rows = Vec::new();

    let mut nominated = BTreeSet::new();
    for nom in &instance.nominations {
        for limit in &nom.limits {
            if let Some(p) = instance.product_index(&limit.product) {
                nominated.insert((nom.refinery.clone(), p));
            }
        }
    }
    for (refinery, p) in &nominated {
        let eta = w.eta(&instance.products[*p].id);
        for (e, b) in refinery_outputs(instance, catalog, refinery, *p) {
            let coeff = w.alpha * eta * vol(catalog.spec(b).volume);
            for t in 0..=catalog.last_start(b).unwrap_or(0) {
                if let Some(x) = vars.placement(e, b, t) {
                    terms.push((x, coeff));
                }
            }
        }
    }

    for target in &w.distribution_targets {
        let s = instance
            .site_index(&target.site)
            .ok_or_else(|| Error::UnknownReference {
                kind: "site",
                id: target.site.clone(),
            })?;
        if instance.sites[s].kind != SiteKind::Storage {
            return Err(Error::TargetOnNonStorage(target.site.clone()));
        }
        let p = instance
            .product_index(&target.product)
            .ok_or_else(|| Error::UnknownReference {
                kind: "product",
                id: target.product.clone(),
            })?;
        let c = vars.lower(s, p, t_max).expect("occupancy variable");
        if let Some(opt) = target.optimal {
            let d = vars.deviation(s, p).expect("deviation variable for target");
            rows.push(LinearConstraint::ge(
                vec![(d, one()), (c, -one())],
                -opt,
                Family::Distribution,
            ));
            rows.push(LinearConstraint::ge(
                vec![(d, one()), (c, one())],
                opt,
                Family::Distribution,
            ));
            terms.push((d, -(w.beta * target.k.unwrap_or(Rational::ONE))));
        }
        if let Some(k) = target.signed_weight {
            terms.push((c, w.beta * k));
        }
    }

    for PlanEntry { edge, batch, t } in &w.previous_plan {
        let (e, b) = resolve_on_edge(instance, catalog, edge, batch)?;
        constant = constant - w.gamma;
        if let Some(x) = vars.placement(e, b, *t) {
            terms.push((x, w.gamma));
        }
    }

    if !w.theta.is_zero() {
        for var in vars.iter() {
            if let super::VarKey::Placement { batch, .. } = var.key {
                terms.push((var.id, -(w.theta * catalog.spec(batch).cost)));
            }
        }
    }

    Ok((
        Objective {
            terms: merge_terms(terms),
            constant,
        },
        rows,
    ))
}
