//! DIMACS CNF reading and writing.

use std::fmt::Write as _;

use thiserror::Error;

use crate::formula::{Clause, FormulaState, Var};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct DimacsError {
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> DimacsError {
    DimacsError {
        line,
        message: message.into(),
    }
}

/// A parsed CNF file. Clauses keep their input order (and duplicates), which
/// matters for clause-index based workloads such as soft cores.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cnf {
    pub num_vars: u32,
    pub clauses: Vec<Clause>,
}

impl Cnf {
    /// State over `1..=num_vars` holding the distinct clauses.
    pub fn to_state(&self) -> FormulaState {
        FormulaState::from_parts(
            (1..=self.num_vars).map(Var::new),
            self.clauses.iter().cloned(),
        )
        .expect("parser checks variable bounds")
    }
}

pub fn parse_dimacs(text: &str) -> Result<Cnf, DimacsError> {
    let mut header: Option<(u32, usize)> = None;
    let mut clauses = Vec::new();
    let mut current: Vec<i64> = Vec::new();
    let mut last_line = 0;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        last_line = lineno;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('c') {
            continue;
        }
        if line.starts_with('%') {
            break;
        }
        if line.starts_with('p') {
            if header.is_some() {
                return Err(err(lineno, "duplicate header"));
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 4 || parts[0] != "p" || parts[1] != "cnf" {
                return Err(err(lineno, "expected header `p cnf <vars> <clauses>`"));
            }
            let nv = parts[2]
                .parse::<u32>()
                .map_err(|_| err(lineno, format!("bad variable count `{}`", parts[2])))?;
            let nc = parts[3]
                .parse::<usize>()
                .map_err(|_| err(lineno, format!("bad clause count `{}`", parts[3])))?;
            header = Some((nv, nc));
            continue;
        }
        let Some((num_vars, _)) = header else {
            return Err(err(lineno, "clause before header"));
        };
        for tok in line.split_whitespace() {
            let v: i64 = tok
                .parse()
                .map_err(|_| err(lineno, format!("bad literal `{tok}`")))?;
            if v == 0 {
                let clause =
                    Clause::from_dimacs(&current).map_err(|e| err(lineno, e.to_string()))?;
                clauses.push(clause);
                current.clear();
                continue;
            }
            if v.unsigned_abs() > num_vars as u64 {
                return Err(err(
                    lineno,
                    format!("literal {v} exceeds declared variable count {num_vars}"),
                ));
            }
            current.push(v);
        }
    }
    let Some((num_vars, _)) = header else {
        return Err(err(last_line.max(1), "missing `p cnf` header"));
    };
    if !current.is_empty() {
        return Err(err(last_line, "last clause is not terminated by 0"));
    }
    Ok(Cnf { num_vars, clauses })
}

/// Writes a state as DIMACS. The header variable count is the largest
/// active identifier; inactive gaps are not representable.
pub fn write_dimacs(state: &FormulaState) -> String {
    let nv = state.max_var().map_or(0, |v| v.id());
    let mut out = format!("p cnf {} {}\n", nv, state.clauses().len());
    for c in state.clauses() {
        for l in c.to_dimacs() {
            write!(out, "{l} ").unwrap();
        }
        out.push_str("0\n");
    }
    out
}
