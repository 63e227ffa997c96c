//! Exact evaluation of a model under a given set of placements.

use std::collections::HashSet;

use super::{Family, MilpModel, Sense, VarKey};
use crate::rational::Rational;

/// Extends a set of placement variables equal to one into a full assignment.
///
/// End markers copy their placement, occupancies follow from the definition
/// rows and deviations take the smallest value their rows allow. Returns
/// `None` when the definition rows cannot be resolved one unknown at a time.
pub fn complete_assignment(model: &MilpModel, ones: &HashSet<usize>) -> Option<Vec<Rational>> {
    let n = model.variables.len();
    let mut values = vec![Rational::ZERO; n];
    let mut known = vec![false; n];
    for var in model.variables.iter() {
        match var.key {
            VarKey::Placement { .. } => {
                if ones.contains(&var.id) {
                    values[var.id] = Rational::ONE;
                }
                known[var.id] = true;
            }
            VarKey::Endpoint { edge, batch, t } => {
                let len = model.catalog.spec(batch).length;
                let on = t
                    .checked_sub(len)
                    .and_then(|start| model.variables.placement(edge, batch, start))
                    .is_some_and(|v| ones.contains(&v));
                if on {
                    values[var.id] = Rational::ONE;
                }
                known[var.id] = true;
            }
            _ => {}
        }
    }

    let definitions: Vec<_> = model
        .constraints
        .iter()
        .filter(|r| r.family == Family::CapacityDefinition && r.sense == Sense::Eq)
        .collect();
    let mut pending: Vec<usize> = (0..definitions.len()).collect();
    while !pending.is_empty() {
        let before = pending.len();
        pending.retain(|&i| {
            let row = definitions[i];
            let unknown: Vec<_> = row.terms.iter().filter(|(v, _)| !known[*v]).collect();
            if unknown.len() != 1 {
                return !unknown.is_empty();
            }
            let (target, coeff) = *unknown[0];
            let rest: Rational = row
                .terms
                .iter()
                .filter(|(v, _)| *v != target)
                .map(|&(v, c)| c * values[v])
                .sum();
            values[target] = (row.rhs - rest) * Rational::new(coeff.denom(), coeff.numer());
            known[target] = true;
            false
        });
        if pending.len() == before {
            return None;
        }
    }

    for var in model.variables.iter() {
        if !matches!(var.key, VarKey::Deviation { .. }) {
            continue;
        }
        let mut best = Rational::ZERO;
        for row in model
            .constraints
            .iter()
            .filter(|r| r.family == Family::Distribution && r.sense == Sense::Ge)
        {
            let Some(&(_, coeff)) = row.terms.iter().find(|(v, _)| *v == var.id) else {
                continue;
            };
            let rest: Rational = row
                .terms
                .iter()
                .filter(|(v, _)| *v != var.id)
                .map(|&(v, c)| c * values[v])
                .sum();
            let bound = (row.rhs - rest) * Rational::new(coeff.denom(), coeff.numer());
            if bound > best {
                best = bound;
            }
        }
        values[var.id] = best;
        known[var.id] = true;
    }

    known.iter().all(|&k| k).then_some(values)
}

/// Indices of all rows (lazy ones included) violated by `values`.
pub fn violated_rows(model: &MilpModel, values: &[Rational]) -> Vec<usize> {
    model
        .constraints
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.is_satisfied(values))
        .map(|(i, _)| i)
        .collect()
}
