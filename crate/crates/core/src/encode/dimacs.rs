//! DIMACS CNF reader.

use serde::Serialize;

use super::clause::{Canonical, Clause, ClauseSystem, Literal};
use super::DimacsError;

/// Non-fatal findings while reading a CNF file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum DimacsWarning {
    ClauseCountMismatch { declared: usize, found: usize },
}

#[derive(Debug, Clone)]
pub struct ParsedCnf {
    pub system: ClauseSystem,
    pub tautologies_dropped: usize,
    pub duplicates_merged: usize,
    pub warnings: Vec<DimacsWarning>,
}

/// Parses DIMACS CNF. Variables are 1-based in the text and 0-based nets in
/// the result. Tautological clauses are dropped and repeated literals merged;
/// both are counted. A `%` line ends the formula (SATLIB convention).
pub fn parse_dimacs(text: &str) -> Result<ParsedCnf, DimacsError> {
    let mut header: Option<(usize, usize)> = None;
    let mut clauses = Vec::new();
    let mut current: Vec<Literal> = Vec::new();
    let mut clause_line = 0;
    let mut found = 0;
    let mut tautologies_dropped = 0;
    let mut duplicates_merged = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('c') {
            continue;
        }
        if line.starts_with('%') {
            break;
        }
        if line.starts_with('p') {
            if header.is_some() {
                return Err(DimacsError::BadHeader {
                    line: line_no,
                    reason: "duplicate header".into(),
                });
            }
            header = Some(parse_header(line, line_no)?);
            continue;
        }
        let (num_vars, _) = header.ok_or(DimacsError::BadHeader {
            line: line_no,
            reason: "clause before `p cnf` header".into(),
        })?;
        for token in line.split_whitespace() {
            let lit: i64 = token.parse().map_err(|_| DimacsError::BadToken {
                line: line_no,
                token: token.to_string(),
            })?;
            if lit == 0 {
                found += 1;
                match Clause::canonical(std::mem::take(&mut current)) {
                    Canonical::Clause(c, merged) => {
                        duplicates_merged += merged;
                        clauses.push(c);
                    }
                    Canonical::Tautology => tautologies_dropped += 1,
                    Canonical::Empty => return Err(DimacsError::EmptyClause { line: line_no }),
                }
                continue;
            }
            if lit.unsigned_abs() as usize > num_vars {
                return Err(DimacsError::LiteralOutOfRange {
                    line: line_no,
                    literal: lit,
                    num_vars,
                });
            }
            if current.is_empty() {
                clause_line = line_no;
            }
            current.push(Literal::from_dimacs(lit));
        }
    }

    let (num_vars, declared) = header.ok_or(DimacsError::BadHeader {
        line: 0,
        reason: "missing `p cnf` header".into(),
    })?;
    if !current.is_empty() {
        return Err(DimacsError::UnterminatedClause { line: clause_line });
    }
    let mut warnings = Vec::new();
    if found != declared {
        warnings.push(DimacsWarning::ClauseCountMismatch { declared, found });
    }
    Ok(ParsedCnf {
        system: ClauseSystem::new(num_vars, clauses),
        tautologies_dropped,
        duplicates_merged,
        warnings,
    })
}

fn parse_header(line: &str, line_no: usize) -> Result<(usize, usize), DimacsError> {
    let bad = |reason: &str| DimacsError::BadHeader {
        line: line_no,
        reason: reason.to_string(),
    };
    let fields: Vec<&str> = line.split_whitespace().collect();
    match fields.as_slice() {
        ["p", "cnf", vars, count] => {
            let vars = vars
                .parse()
                .map_err(|_| bad("variable count is not a number"))?;
            let count = count
                .parse()
                .map_err(|_| bad("clause count is not a number"))?;
            Ok((vars, count))
        }
        ["p", fmt, ..] if *fmt != "cnf" => Err(bad("format must be `cnf`")),
        _ => Err(bad("expected `p cnf <vars> <clauses>`")),
    }
}
