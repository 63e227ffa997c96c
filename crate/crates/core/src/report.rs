//! Tabular exports of schedules.

use crate::catalog::BatchCatalog;
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::schedule::Schedule;

/// One row per placement: edge, batch, product, start, end, volume. Rows are
/// sorted by edge (instance order) and then start.
pub fn export_gantt(instance: &Instance, catalog: &BatchCatalog, schedule: &Schedule) -> Result<String> {
    let mut rows = Vec::with_capacity(schedule.len());
    for p in &schedule.placements {
        let edge = instance.edge_index(&p.edge).ok_or_else(|| Error::UnknownReference {
            kind: "edge",
            id: p.edge.clone(),
        })?;
        let batch = catalog.spec_index(&p.batch).ok_or_else(|| Error::UnknownReference {
            kind: "batch",
            id: p.batch.clone(),
        })?;
        rows.push((edge, p.t, batch));
    }
    rows.sort_unstable();

    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(["edge", "batch", "product", "start", "end", "volume"])?;
    for (edge, t, batch) in rows {
        let spec = catalog.spec(batch);
        out.write_record([
            instance.edges[edge].id.clone(),
            spec.id.clone(),
            instance.products[spec.product].id.clone(),
            t.to_string(),
            (t + spec.length).to_string(),
            spec.volume.to_string(),
        ])?;
    }
    let bytes = out.into_inner().map_err(|e| Error::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn empty_schedule_is_header_only() {
        let inst = fixtures::t1();
        let cat = BatchCatalog::build(&inst).unwrap();
        let csv = export_gantt(&inst, &cat, &Schedule::new()).unwrap();
        assert_eq!(csv, "edge,batch,product,start,end,volume\n");
    }

    #[test]
    fn rows_are_sorted_by_edge_then_start() {
        let inst = fixtures::two_edge();
        let cat = BatchCatalog::build(&inst).unwrap();
        let long_f = cat.spec_index("r12:F:standard").unwrap();
        let short_s = cat.spec_index("r1:S:standard").unwrap();
        let schedule = Schedule::from_starts(&inst, &cat, &[(long_f, 9), (short_s, 0)]);
        let csv = export_gantt(&inst, &cat, &schedule).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(
            lines[1..],
            [
                "e1,r1:S:standard,S,0,3,44",
                "e1,r12:F:standard,F,9,15,100",
                "e2,r12:F:standard,F,9,15,100",
            ]
        );
    }
}
