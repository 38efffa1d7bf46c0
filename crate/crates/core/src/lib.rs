//! Boolean problems solved as equilibria of self-organizing logic dynamics.
//!
//! Problems (factorization, subset-sum, CNF) are compiled to terminal-agnostic
//! circuits ([`circuit`], [`encode`]), clausified, relaxed into a continuous
//! flow with per-clause memory ([`dynamics`]) and integrated until the
//! voltages settle on a satisfying assignment ([`integrate`]). [`analyze`]
//! inspects phase space and [`harness`] provides oracles and benchmarks.

// `!(x > 0.0)` style checks are deliberate: NaN must fail them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analyze;
pub mod circuit;
pub mod config;
pub mod dynamics;
pub mod encode;
pub mod harness;
pub mod integrate;
pub mod report;
