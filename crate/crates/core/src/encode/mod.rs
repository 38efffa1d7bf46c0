//! Problem compilers and clause-level encodings.

mod clause;
mod dimacs;
mod factor;
mod subset_sum;
mod tseitin;

use thiserror::Error;

pub use clause::{Canonical, Clause, ClauseSystem, Literal};
pub use dimacs::{parse_dimacs, DimacsWarning, ParsedCnf};
pub use factor::{compile_factor, remainder_check, FactorInstance, RemainderTrace};
pub use subset_sum::{compile_subset_sum, SubsetSumInstance, SubsetSumProblem};
pub use tseitin::{gate_clauses, tseitin};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EncodeError {
    #[error("{0} is even; factorization instances must be odd")]
    EvenInput(u64),
    #[error("{0} is too small to factor")]
    TooSmall(u64),
    #[error("factor {factor} does not fit in {bits} bits")]
    WidthOverflow { factor: u64, bits: u32 },
    #[error("subset-sum set is empty")]
    EmptySet,
    #[error("unsupported subset-sum size (N = {n}, p = {p})")]
    UnsupportedSize { n: usize, p: u32 },
    #[error("element {index} = {value} does not fit in {bits} bits")]
    ElementOverflow { index: usize, value: u64, bits: u32 },
    #[error("target {target} does not fit the {width}-bit sum output")]
    TargetOverflow { target: u64, width: u32 },
    #[error("target {target} exceeds the sum of all elements ({total})")]
    TargetExceedsSum { target: u64, total: u64 },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DimacsError {
    #[error("line {line}: bad header: {reason}")]
    BadHeader { line: usize, reason: String },
    #[error("line {line}: literal {literal} outside 1..={num_vars}")]
    LiteralOutOfRange {
        line: usize,
        literal: i64,
        num_vars: usize,
    },
    #[error("line {line}: clause is not terminated by 0")]
    UnterminatedClause { line: usize },
    #[error("line {line}: empty clause")]
    EmptyClause { line: usize },
    #[error("line {line}: unexpected token `{token}`")]
    BadToken { line: usize, token: String },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SystemJsonError {
    #[error("malformed clause system JSON: {0}")]
    Json(String),
    #[error("clause {clause} mentions net {net} outside the system")]
    NetOutOfRange { clause: usize, net: usize },
    #[error("clause {clause} is empty or tautological")]
    Degenerate { clause: usize },
    #[error("origin `{name}` names net {net} outside the system")]
    OriginOutOfRange { name: String, net: usize },
}
