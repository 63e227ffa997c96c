//! Transport schedules: the set of batch starts with value one.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::BatchCatalog;
use crate::error::{Error, Result};
use crate::instance::{Instance, PlanEntry};

/// One batch start: `batch` begins on `edge` at step `t`.
pub type Placement = PlanEntry;

/// Every placement of a plan, chained ones included.
///
/// Placements are kept in a sorted set, so iteration order and the JSON form
/// are canonical.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub placements: BTreeSet<Placement>,
}

impl Schedule {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.placements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.placements.is_empty()
    }

    pub fn contains(&self, edge: &str, batch: &str, t: usize) -> bool {
        self.placements.contains(&Placement {
            edge: edge.to_string(),
            batch: batch.to_string(),
            t,
        })
    }

    pub fn insert(&mut self, edge: &str, batch: &str, t: usize) {
        self.placements.insert(Placement {
            edge: edge.to_string(),
            batch: batch.to_string(),
            t,
        });
    }

    /// Builds a schedule from starts of batch specs (indices into the
    /// catalog), placing each on every edge of its chain.
    pub fn from_starts(instance: &Instance, catalog: &BatchCatalog, starts: &[(usize, usize)]) -> Schedule {
        let mut schedule = Schedule::new();
        for &(batch, t) in starts {
            let spec = catalog.spec(batch);
            for &edge in &spec.chain {
                schedule.insert(&instance.edges[edge].id, &spec.id, t);
            }
        }
        schedule
    }

    /// Expands placements given on initial edges only into full chains.
    pub fn from_initial(instance: &Instance, catalog: &BatchCatalog, initial: &[Placement]) -> Result<Schedule> {
        let mut starts = Vec::with_capacity(initial.len());
        for p in initial {
            let batch = catalog.spec_index(&p.batch).ok_or_else(|| Error::UnknownReference {
                kind: "batch",
                id: p.batch.clone(),
            })?;
            let spec = catalog.spec(batch);
            if instance.edges[spec.initial_edge()].id != p.edge {
                return Err(Error::BatchNotOnEdge {
                    edge: p.edge.clone(),
                    batch: p.batch.clone(),
                });
            }
            starts.push((batch, p.t));
        }
        Ok(Schedule::from_starts(instance, catalog, &starts))
    }

    /// Placements on the initial edge of their batch.
    pub fn initial_placements<'a>(
        &'a self,
        instance: &'a Instance,
        catalog: &'a BatchCatalog,
    ) -> impl Iterator<Item = &'a Placement> + 'a {
        self.placements.iter().filter(move |p| {
            catalog
                .spec_index(&p.batch)
                .is_some_and(|b| instance.edges[catalog.spec(b).initial_edge()].id == p.edge)
        })
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("schedule serialization is infallible")
    }

    pub fn from_json_str(text: &str) -> Result<Schedule> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Schedule> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Schedule::from_json_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_pretty()).map_err(|e| Error::io(path, e))
    }
}
