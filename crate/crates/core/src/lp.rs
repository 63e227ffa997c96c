//! LP-format export of a [`MilpModel`].
//!
//! Variables are named `<prefix>_<id>`, rows `<family>_<n>` where `n` counts
//! rows of that family in model order, so names stay stable when lazy rows
//! are switched on. Rows without terms are skipped; callers check
//! [`MilpModel::is_trivially_infeasible`] first.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::model::{Domain, Family, LinearConstraint, MilpModel};
use crate::rational::Rational;

const TERMS_PER_LINE: usize = 8;

fn coefficient(c: Rational) -> String {
    if c.denom() == 1 {
        c.numer().abs().to_string()
    } else {
        format!("{}", c.abs().to_f64())
    }
}

fn write_terms(out: &mut String, model: &MilpModel, terms: &[(usize, Rational)]) {
    for (i, &(v, c)) in terms.iter().enumerate() {
        if i > 0 && i % TERMS_PER_LINE == 0 {
            out.push_str("\n   ");
        }
        let sign = if c.is_negative() { "-" } else { "+" };
        if i == 0 && sign == "+" {
            let _ = write!(out, " {} {}", coefficient(c), model.variables[v].name());
        } else {
            let _ = write!(out, " {sign} {} {}", coefficient(c), model.variables[v].name());
        }
    }
}

/// Row name for every constraint, in model order.
pub fn row_names(model: &MilpModel) -> Vec<String> {
    let mut counters: BTreeMap<Family, usize> = BTreeMap::new();
    model
        .constraints
        .iter()
        .map(|row| {
            let n = counters.entry(row.family).or_default();
            let name = format!("{}_{}", row.family, n);
            *n += 1;
            name
        })
        .collect()
}

/// LP text with all non-lazy rows.
pub fn write_lp(model: &MilpModel) -> String {
    write_lp_with(model, |row| !row.1.lazy)
}

/// LP text containing the rows selected by `include(index, row)`.
pub fn write_lp_with(model: &MilpModel, include: impl Fn((usize, &LinearConstraint)) -> bool) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "\\ objective constant {}", model.objective.constant);
    out.push_str("Maximize\n obj:");
    if model.objective.terms.is_empty() {
        if let Some(first) = model.variables.iter().next() {
            let _ = write!(out, " 0 {}", first.name());
        }
    } else {
        write_terms(&mut out, model, &model.objective.terms);
    }
    out.push_str("\nSubject To\n");
    let names = row_names(model);
    for (i, row) in model.constraints.iter().enumerate() {
        if row.terms.is_empty() || !include((i, row)) {
            continue;
        }
        let _ = write!(out, " {}:", names[i]);
        write_terms(&mut out, model, &row.terms);
        let _ = writeln!(out, " {} {}", row.sense.symbol(), rhs(row.rhs));
    }
    out.push_str("Bounds\n");
    for var in model.variables.iter() {
        if let Domain::Continuous { lower, upper } = var.domain {
            match (lower, upper) {
                (None, None) => {
                    let _ = writeln!(out, " {} free", var.name());
                }
                (lower, upper) => {
                    let lo = lower.map_or("-inf".to_string(), |l| l.to_string());
                    let hi = upper.map_or("+inf".to_string(), |u| u.to_string());
                    let _ = writeln!(out, " {lo} <= {} <= {hi}", var.name());
                }
            }
        }
    }
    out.push_str("Binaries\n");
    let binaries: Vec<String> = model
        .variables
        .iter()
        .filter(|v| matches!(v.domain, Domain::Binary))
        .map(|v| v.name())
        .collect();
    for chunk in binaries.chunks(TERMS_PER_LINE) {
        let _ = writeln!(out, " {}", chunk.join(" "));
    }
    out.push_str("End\n");
    out
}

fn rhs(r: Rational) -> String {
    if r.denom() == 1 {
        r.numer().to_string()
    } else {
        format!("{}", r.to_f64())
    }
}

/// Variable id encoded in an LP name, if it is one of ours.
pub fn parse_var_name(name: &str) -> Option<usize> {
    let (prefix, id) = name.rsplit_once('_')?;
    matches!(prefix, "v" | "w" | "cu" | "cl" | "d")
        .then(|| id.parse().ok())
        .flatten()
}
