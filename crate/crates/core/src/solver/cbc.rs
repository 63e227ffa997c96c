//! Reading CBC solution files and logs.

use super::SolveStatus;
use crate::error::{Error, Result};
use crate::lp::parse_var_name;
use crate::model::MilpModel;

/// Status line facts, objective without the model constant.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub status: SolveStatus,
    pub objective: Option<f64>,
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedSolution {
    pub report: SolverReport,
    /// Value of every model variable; present when an incumbent exists.
    pub values: Option<Vec<f64>>,
}

fn excerpt(text: &str) -> String {
    text.lines().take(12).collect::<Vec<_>>().join("\n")
}

fn parse_error(message: impl Into<String>, text: &str) -> Error {
    Error::SolutionParse {
        message: message.into(),
        excerpt: excerpt(text),
    }
}

fn number_after(line: &str, key: &str) -> Option<f64> {
    let rest = &line[line.find(key)? + key.len()..];
    rest.split_whitespace().next()?.parse().ok()
}

/// Parses a solution file plus the solver log.
///
/// Variables missing from the file are zero. Unknown variable names and
/// malformed value lines are errors.
pub fn parse_solution(sol: &str, log: &str, model: &MilpModel) -> Result<ParsedSolution> {
    let header = sol.lines().next().unwrap_or("").trim();
    let result_line = log.lines().find(|l| l.starts_with("Result - ")).unwrap_or("").trim();
    let lower_header = header.to_ascii_lowercase();
    let log_infeasible = log.contains("Problem is infeasible")
        || log.contains("Problem proven infeasible")
        || result_line.contains("infeasible");

    let (status, has_incumbent) =
        if header.starts_with("Optimal (within gap tolerance)") || result_line.contains("within gap tolerance") {
            (SolveStatus::GapReached, true)
        } else if header.starts_with("Optimal") {
            (SolveStatus::Optimal, true)
        } else if lower_header.starts_with("infeasible")
            || lower_header.starts_with("integer infeasible")
            || (header.is_empty() && log_infeasible)
        {
            (SolveStatus::Infeasible, false)
        } else if header.starts_with("Stopped on time") || result_line.contains("Stopped on time") {
            let none = header.contains("no integer solution") || log.contains("No feasible solution found");
            (SolveStatus::TimeLimit, !none && !header.is_empty())
        } else if lower_header.contains("unbounded") {
            (SolveStatus::Error, false)
        } else {
            return Err(parse_error(
                "unrecognized solver status",
                if header.is_empty() { log } else { sol },
            ));
        };

    let objective = if has_incumbent {
        Some(number_after(header, "objective value").ok_or_else(|| parse_error("missing objective value", sol))?)
    } else {
        None
    };
    let bound = log
        .lines()
        .find_map(|l| number_after(l, "Upper bound:").or_else(|| number_after(l, "Lower bound:")));

    let values = if has_incumbent {
        let mut values = vec![0.0; model.variables.len()];
        for line in sol.lines().skip(1) {
            let line = line.trim().trim_start_matches("**").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() < 3 {
                return Err(parse_error(format!("malformed value line {line:?}"), sol));
            }
            let id = parse_var_name(fields[1])
                .filter(|&id| id < values.len())
                .ok_or_else(|| parse_error(format!("unknown variable {}", fields[1]), sol))?;
            values[id] = fields[2]
                .parse()
                .map_err(|_| parse_error(format!("bad value in line {line:?}"), sol))?;
        }
        Some(values)
    } else {
        None
    };

    Ok(ParsedSolution {
        report: SolverReport {
            status,
            objective,
            bound,
        },
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::{build_model, BuildOptions};

    fn model() -> MilpModel {
        build_model(&fixtures::t1_small(), BuildOptions::default()).unwrap()
    }

    #[test]
    fn optimal_file() {
        let m = model();
        let sol = "Optimal - objective value 144.00000000\n      0 v_0   1   100\n     13 v_13  1  44\n";
        let log = "Result - Optimal solution found\n\nObjective value:  144.00000000\n";
        let p = parse_solution(sol, log, &m).unwrap();
        assert_eq!(p.report.status, SolveStatus::Optimal);
        assert_eq!(p.report.objective, Some(144.0));
        let v = p.values.unwrap();
        assert_eq!(v[0], 1.0);
        assert_eq!(v[13], 1.0);
        assert_eq!(v.iter().filter(|&&x| x != 0.0).count(), 2);
    }

    #[test]
    fn all_zero_solution() {
        let m = model();
        let p = parse_solution("Optimal - objective value 0.00000000\n", "", &m).unwrap();
        assert!(p.values.unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn gap_and_time_limit() {
        let m = model();
        let log = "Result - Optimal solution found (within gap tolerance)\nUpper bound:   150.5\n";
        let p = parse_solution("Optimal (within gap tolerance) - objective value 144\n", log, &m).unwrap();
        assert_eq!(p.report.status, SolveStatus::GapReached);
        assert_eq!(p.report.bound, Some(150.5));

        let log = "Result - Stopped on time limit\nObjective value: 100\nUpper bound: 144\n";
        let p = parse_solution("Stopped on time - objective value 100.00000000\n", log, &m).unwrap();
        assert_eq!(p.report.status, SolveStatus::TimeLimit);
        assert!(p.values.is_some());

        let log = "Result - Stopped on time limit\nNo feasible solution found\nUpper bound: 144\n";
        let sol =
            "Stopped on time (no integer solution - continuous used) - objective value 150\n      0 v_0  0.5  1\n";
        let p = parse_solution(sol, log, &m).unwrap();
        assert_eq!(p.report.status, SolveStatus::TimeLimit);
        assert!(p.values.is_none());
    }

    #[test]
    fn infeasible() {
        let m = model();
        let p = parse_solution("Infeasible - objective value 2.00000000\n", "Problem is infeasible", &m).unwrap();
        assert_eq!(p.report.status, SolveStatus::Infeasible);
        assert!(p.values.is_none());
        let p = parse_solution("", "Problem is infeasible - 0.00 seconds", &m).unwrap();
        assert_eq!(p.report.status, SolveStatus::Infeasible);
    }

    #[test]
    fn garbage_is_an_error_with_excerpt() {
        let m = model();
        let err = parse_solution("what is this\n", "", &m).unwrap_err();
        assert!(err.to_string().contains("what is this"));
        let err = parse_solution("Optimal - objective value 1\n 0 zz_1 1 0\n", "", &m).unwrap_err();
        assert!(err.to_string().contains("unknown variable"));
    }
}
