//! Solver-neutral MILP model.
//!
//! [`build_model`] turns an [`Instance`] into variables, tagged linear
//! constraints and a maximization objective. Every constraint carries the
//! [`Family`] it belongs to so that counts can be reported and capacity
//! bounds can be deferred to the lazy loop.

mod emit;
mod eval;

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::catalog::BatchCatalog;
use crate::error::Result;
use crate::instance::Instance;
use crate::rational::Rational;

pub use emit::{
    emit_capacity, emit_fixed_transport, emit_flushing, emit_nominations, emit_objective, emit_outages, emit_packing,
    emit_regime_exclusions, emit_routes, emit_throughput_limits, tank_reductions, CapacityForm,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableKind {
    Placement,
    Endpoint,
    OccupancyUpper,
    OccupancyLower,
    DistributionDeviation,
}

/// Coordinate of a variable. Edge, batch, site and product are indices into
/// the instance / catalog vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum VarKey {
    Placement { edge: usize, batch: usize, t: usize },
    Endpoint { edge: usize, batch: usize, t: usize },
    Upper { site: usize, product: usize, t: usize },
    Lower { site: usize, product: usize, t: usize },
    Deviation { site: usize, product: usize },
}

impl VarKey {
    pub fn kind(&self) -> VariableKind {
        match self {
            VarKey::Placement { .. } => VariableKind::Placement,
            VarKey::Endpoint { .. } => VariableKind::Endpoint,
            VarKey::Upper { .. } => VariableKind::OccupancyUpper,
            VarKey::Lower { .. } => VariableKind::OccupancyLower,
            VarKey::Deviation { .. } => VariableKind::DistributionDeviation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Domain {
    Binary,
    /// Continuous with optional bounds (`None` = infinite).
    Continuous {
        lower: Option<i64>,
        upper: Option<i64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Variable {
    pub id: usize,
    pub key: VarKey,
    pub domain: Domain,
}

impl Variable {
    pub fn kind(&self) -> VariableKind {
        self.key.kind()
    }

    /// Identifier used in solver files.
    pub fn name(&self) -> String {
        let prefix = match self.kind() {
            VariableKind::Placement => "v",
            VariableKind::Endpoint => "w",
            VariableKind::OccupancyUpper => "cu",
            VariableKind::OccupancyLower => "cl",
            VariableKind::DistributionDeviation => "d",
        };
        format!("{prefix}_{}", self.id)
    }
}

/// Dense registry of all model variables with coordinate lookup.
#[derive(Debug, Clone, Default)]
pub struct VariableRegistry {
    vars: Vec<Variable>,
    index: HashMap<VarKey, usize>,
}

impl VariableRegistry {
    pub fn add(&mut self, key: VarKey, domain: Domain) -> usize {
        if let Some(&id) = self.index.get(&key) {
            return id;
        }
        let id = self.vars.len();
        self.vars.push(Variable { id, key, domain });
        self.index.insert(key, id);
        id
    }

    pub fn get(&self, key: &VarKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn placement(&self, edge: usize, batch: usize, t: usize) -> Option<usize> {
        self.get(&VarKey::Placement { edge, batch, t })
    }

    pub fn endpoint(&self, edge: usize, batch: usize, t: usize) -> Option<usize> {
        self.get(&VarKey::Endpoint { edge, batch, t })
    }

    pub fn upper(&self, site: usize, product: usize, t: usize) -> Option<usize> {
        self.get(&VarKey::Upper { site, product, t })
    }

    pub fn lower(&self, site: usize, product: usize, t: usize) -> Option<usize> {
        self.get(&VarKey::Lower { site, product, t })
    }

    pub fn deviation(&self, site: usize, product: usize) -> Option<usize> {
        self.get(&VarKey::Deviation { site, product })
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Variable> {
        self.vars.iter()
    }

    pub fn as_slice(&self) -> &[Variable] {
        &self.vars
    }

    pub fn count(&self, kind: VariableKind) -> usize {
        self.vars.iter().filter(|v| v.kind() == kind).count()
    }
}

impl std::ops::Index<usize> for VariableRegistry {
    type Output = Variable;
    fn index(&self, id: usize) -> &Variable {
        &self.vars[id]
    }
}

/// Creates every variable of the formulation.
///
/// Placements exist only for start times with `t + L(b) <= t_max`; endpoint
/// markers only for staining batches on their initial edge; occupancies for
/// every storage site, product and step; deviations only for distribution
/// targets with an optimal occupancy.
pub fn build_variables(catalog: &BatchCatalog, instance: &Instance) -> VariableRegistry {
    let mut reg = VariableRegistry::default();
    for placed in &catalog.per_edge {
        for pb in placed {
            if let Some(last) = catalog.last_start(pb.batch) {
                for t in 0..=last {
                    reg.add(
                        VarKey::Placement {
                            edge: pb.edge,
                            batch: pb.batch,
                            t,
                        },
                        Domain::Binary,
                    );
                }
            }
        }
    }
    for placed in &catalog.per_edge {
        for pb in placed {
            let spec = catalog.spec(pb.batch);
            if !spec.is_staining() || !pb.classification.is_initial() {
                continue;
            }
            if let Some(last) = catalog.last_start(pb.batch) {
                for t in 0..=last {
                    reg.add(
                        VarKey::Endpoint {
                            edge: pb.edge,
                            batch: pb.batch,
                            t: t + spec.length,
                        },
                        Domain::Binary,
                    );
                }
            }
        }
    }
    let free = Domain::Continuous {
        lower: None,
        upper: None,
    };
    for (site, _) in instance.storage_sites() {
        for product in 0..instance.products.len() {
            for t in 0..instance.horizon.len {
                reg.add(VarKey::Upper { site, product, t }, free);
            }
            for t in 0..instance.horizon.len {
                reg.add(VarKey::Lower { site, product, t }, free);
            }
        }
    }
    for target in &instance.weights.distribution_targets {
        if target.optimal.is_none() {
            continue;
        }
        if let (Some(site), Some(product)) = (
            instance.site_index(&target.site),
            instance.product_index(&target.product),
        ) {
            reg.add(
                VarKey::Deviation { site, product },
                Domain::Continuous {
                    lower: Some(0),
                    upper: None,
                },
            );
        }
    }
    reg
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Packing,
    Routes,
    Flushing,
    Exclusion,
    /// Definitional equalities for the blocked / on-stock occupancies.
    CapacityDefinition,
    CapacityUpper,
    CapacityLower,
    Outage,
    Throughput,
    Nomination,
    Fixed,
    /// Deviation rows linearizing the distributional objective.
    Distribution,
    /// Placements that would overrun the horizon. Enforced by variable
    /// creation, so the model never contains rows of this family; the
    /// validator reports violations under it.
    HorizonFit,
}

impl Family {
    pub const ALL: [Family; 13] = [
        Family::Packing,
        Family::Routes,
        Family::Flushing,
        Family::Exclusion,
        Family::CapacityDefinition,
        Family::CapacityUpper,
        Family::CapacityLower,
        Family::Outage,
        Family::Throughput,
        Family::Nomination,
        Family::Fixed,
        Family::Distribution,
        Family::HorizonFit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Packing => "packing",
            Family::Routes => "routes",
            Family::Flushing => "flushing",
            Family::Exclusion => "exclusion",
            Family::CapacityDefinition => "capacity_definition",
            Family::CapacityUpper => "capacity_upper",
            Family::CapacityLower => "capacity_lower",
            Family::Outage => "outage",
            Family::Throughput => "throughput",
            Family::Nomination => "nomination",
            Family::Fixed => "fixed",
            Family::Distribution => "distribution",
            Family::HorizonFit => "horizon_fit",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl Sense {
    pub fn symbol(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        }
    }

    pub fn holds(self, lhs: Rational, rhs: Rational) -> bool {
        match self {
            Sense::Le => lhs <= rhs,
            Sense::Eq => lhs == rhs,
            Sense::Ge => lhs >= rhs,
        }
    }
}

/// Storage coordinate (site, product, t) of a capacity bound row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct StorageCoord {
    pub site: usize,
    pub product: usize,
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearConstraint {
    pub terms: Vec<(usize, Rational)>,
    pub sense: Sense,
    pub rhs: Rational,
    pub family: Family,
    /// Lazy rows are left out of the solver file until activated.
    pub lazy: bool,
    /// Set for capacity bound rows.
    pub coord: Option<StorageCoord>,
}

impl LinearConstraint {
    pub fn new(terms: Vec<(usize, Rational)>, sense: Sense, rhs: Rational, family: Family) -> Self {
        LinearConstraint {
            terms,
            sense,
            rhs,
            family,
            lazy: false,
            coord: None,
        }
    }

    pub fn le(terms: Vec<(usize, Rational)>, rhs: impl Into<Rational>, family: Family) -> Self {
        Self::new(terms, Sense::Le, rhs.into(), family)
    }

    pub fn eq(terms: Vec<(usize, Rational)>, rhs: impl Into<Rational>, family: Family) -> Self {
        Self::new(terms, Sense::Eq, rhs.into(), family)
    }

    pub fn ge(terms: Vec<(usize, Rational)>, rhs: impl Into<Rational>, family: Family) -> Self {
        Self::new(terms, Sense::Ge, rhs.into(), family)
    }

    /// A row without terms; holds or fails independent of the assignment.
    pub fn is_trivially_satisfied(&self) -> bool {
        self.terms.is_empty() && self.sense.holds(Rational::ZERO, self.rhs)
    }

    pub fn evaluate(&self, values: &[Rational]) -> Rational {
        self.terms.iter().map(|&(v, c)| c * values[v]).sum()
    }

    pub fn is_satisfied(&self, values: &[Rational]) -> bool {
        self.sense.holds(self.evaluate(values), self.rhs)
    }
}

/// Linear maximization objective with a constant offset.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Objective {
    pub terms: Vec<(usize, Rational)>,
    pub constant: Rational,
}

impl Objective {
    pub fn evaluate(&self, values: &[Rational]) -> Rational {
        self.constant + self.terms.iter().map(|&(v, c)| c * values[v]).sum()
    }
}

/// Options accepted by [`build_model`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct BuildOptions {
    /// Mark capacity bound rows lazy instead of materializing them.
    pub capacity_lazy: bool,
    /// Drop the follow-up requirement for staining batches ending too close
    /// to the horizon for any follow-up batch to fit.
    pub relax_terminal_flush: bool,
    pub capacity_form: CapacityForm,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ModelMetadata {
    pub instance_hash: String,
    pub constraint_counts: BTreeMap<Family, usize>,
    pub variable_counts: BTreeMap<VariableKind, usize>,
    pub binaries: usize,
    pub lazy_rows: usize,
    /// Per storage site: largest pipe volume of any regime touching the site,
    /// the worst-case occupancy counting error capacities must buffer.
    pub counting_error_bounds: BTreeMap<String, i64>,
    pub warnings: Vec<String>,
    pub options: BuildOptions,
}

#[derive(Debug, Clone)]
pub struct MilpModel {
    pub catalog: BatchCatalog,
    pub variables: VariableRegistry,
    pub constraints: Vec<LinearConstraint>,
    pub objective: Objective,
    pub metadata: ModelMetadata,
}

/// Builds the full model of a valid instance.
pub fn build_model(instance: &Instance, options: BuildOptions) -> Result<MilpModel> {
    instance.ensure_valid()?;
    let catalog = BatchCatalog::build(instance)?;
    let variables = build_variables(&catalog, instance);

    let mut constraints = Vec::new();
    constraints.extend(emit_packing(&catalog, &variables));
    constraints.extend(emit_routes(&catalog, &variables));
    constraints.extend(emit_flushing(&catalog, &variables, options.relax_terminal_flush));
    constraints.extend(emit_regime_exclusions(instance, &catalog, &variables)?);
    let reductions = tank_reductions(instance)?;
    let mut capacity = emit_capacity(instance, &catalog, &variables, &reductions, options.capacity_form);
    if options.capacity_lazy {
        for row in capacity
            .iter_mut()
            .filter(|r| matches!(r.family, Family::CapacityUpper | Family::CapacityLower))
        {
            row.lazy = true;
        }
    }
    constraints.extend(capacity);
    let outage_rows = emit_outages(instance, &catalog, &variables)?;
    let fixed_rows = emit_fixed_transport(instance, &catalog, &variables, &outage_rows)?;
    constraints.extend(outage_rows);
    constraints.extend(emit_throughput_limits(instance, &catalog, &variables)?);
    constraints.extend(fixed_rows);
    constraints.extend(emit_nominations(instance, &catalog, &variables)?);
    let (objective, distribution_rows) = emit_objective(instance, &catalog, &variables)?;
    constraints.extend(distribution_rows);

    let mut constraint_counts: BTreeMap<Family, usize> = BTreeMap::new();
    for row in &constraints {
        *constraint_counts.entry(row.family).or_default() += 1;
    }
    let mut variable_counts = BTreeMap::new();
    for kind in [
        VariableKind::Placement,
        VariableKind::Endpoint,
        VariableKind::OccupancyUpper,
        VariableKind::OccupancyLower,
        VariableKind::DistributionDeviation,
    ] {
        variable_counts.insert(kind, variables.count(kind));
    }

    let metadata = ModelMetadata {
        instance_hash: instance.content_hash(),
        binaries: variables.iter().filter(|v| matches!(v.domain, Domain::Binary)).count(),
        lazy_rows: constraints.iter().filter(|r| r.lazy).count(),
        constraint_counts,
        variable_counts,
        counting_error_bounds: counting_error_bounds(instance),
        warnings: catalog.warnings.clone(),
        options,
    };

    Ok(MilpModel {
        catalog,
        variables,
        constraints,
        objective,
        metadata,
    })
}

fn counting_error_bounds(instance: &Instance) -> BTreeMap<String, i64> {
    let mut bounds = BTreeMap::new();
    for (_, site) in instance.storage_sites() {
        let worst = instance
            .regimes
            .iter()
            .filter(|r| {
                r.edges
                    .iter()
                    .filter_map(|e| instance.edge(e))
                    .any(|e| e.origin == site.id || e.destination == site.id)
            })
            .map(|r| {
                r.edges
                    .iter()
                    .filter_map(|e| instance.edge(e))
                    .map(|e| e.pipe_volume)
                    .sum::<i64>()
            })
            .max()
            .unwrap_or(0);
        bounds.insert(site.id.clone(), worst);
    }
    bounds
}

impl MilpModel {
    pub fn count(&self, family: Family) -> usize {
        self.metadata.constraint_counts.get(&family).copied().unwrap_or(0)
    }

    /// True when some row has no terms and can never hold.
    pub fn is_trivially_infeasible(&self) -> bool {
        self.constraints
            .iter()
            .any(|r| r.terms.is_empty() && !r.is_trivially_satisfied())
    }

    /// SHA-256 over the complete model text (all rows, lazy ones included).
    pub fn fingerprint(&self) -> String {
        let text = crate::lp::write_lp_with(self, |_| true);
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// Metadata plus the model fingerprint as pretty JSON.
    pub fn metadata_json(&self) -> String {
        #[derive(Serialize)]
        struct Dump<'a> {
            model_hash: String,
            #[serde(flatten)]
            metadata: &'a ModelMetadata,
        }
        serde_json::to_string_pretty(&Dump {
            model_hash: self.fingerprint(),
            metadata: &self.metadata,
        })
        .expect("metadata serialization is infallible")
    }
}

pub use eval::{complete_assignment, violated_rows};

#[cfg(test)]
mod tests;
