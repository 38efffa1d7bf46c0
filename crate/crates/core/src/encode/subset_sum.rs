//! Subset-sum as a selector-masked adder tree with a pinned total.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::circuit::{Assignment, Circuit, CircuitBuilder, GateKind, NetId};

use super::EncodeError;

/// `{ "G": [...], "p": bits, "s": target }`
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubsetSumProblem {
    #[serde(rename = "G")]
    pub g: Vec<u64>,
    pub p: u32,
    pub s: u64,
}

impl SubsetSumProblem {
    pub fn new(g: Vec<u64>, p: u32, s: u64) -> Self {
        SubsetSumProblem { g, p, s }
    }

    /// Width of the sum output: `p + ceil(log2 N)`.
    pub fn sum_width(&self) -> u32 {
        let n = self.g.len().max(1) as u64;
        self.p + (64 - (n - 1).leading_zeros()) * u32::from(n > 1)
    }

    pub fn total(&self) -> u64 {
        self.g.iter().sum()
    }

    /// Sum of the elements picked by `mask` (bit i selects `G[i]`).
    pub fn subset_sum(&self, mask: u64) -> u64 {
        self.g
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, &x)| x)
            .sum()
    }

    /// Element range and width checks shared by the compiler.
    pub fn validate(&self) -> Result<(), EncodeError> {
        if self.g.is_empty() {
            return Err(EncodeError::EmptySet);
        }
        if self.p == 0 || self.p > 48 || self.g.len() > 64 {
            return Err(EncodeError::UnsupportedSize {
                n: self.g.len(),
                p: self.p,
            });
        }
        if let Some((index, &value)) = self.g.iter().enumerate().find(|(_, &x)| x >> self.p != 0) {
            return Err(EncodeError::ElementOverflow {
                index,
                value,
                bits: self.p,
            });
        }
        let width = self.sum_width();
        if self.s >> width != 0 {
            return Err(EncodeError::TargetOverflow {
                target: self.s,
                width,
            });
        }
        Ok(())
    }

    /// The stricter `s <= sum(G)` precondition. Targets above the total
    /// still compile (to an unsatisfiable circuit); front ends call this to
    /// reject them up front.
    pub fn check_target_reachable(&self) -> Result<(), EncodeError> {
        if self.s > self.total() {
            return Err(EncodeError::TargetExceedsSum {
                target: self.s,
                total: self.total(),
            });
        }
        Ok(())
    }
}

/// Net layout of a compiled subset-sum instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetSumInstance {
    pub problem: SubsetSumProblem,
    /// One free net per element; 1 selects the element.
    pub selector_bits: Vec<NetId>,
    /// Little-endian sum output, `sum_width()` wide. `None` marks a column
    /// no element can reach.
    pub sum_bits: Vec<Option<NetId>>,
}

impl SubsetSumInstance {
    /// Selector mask read from an assignment (bit i = element i).
    pub fn decode(&self, a: &Assignment) -> Option<u64> {
        a.read_uint(&self.selector_bits)
    }

    pub fn selected(&self, mask: u64) -> Vec<u64> {
        self.problem
            .g
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, &x)| x)
            .collect()
    }

    pub fn origin(&self) -> BTreeMap<String, NetId> {
        self.selector_bits
            .iter()
            .enumerate()
            .map(|(i, &n)| (format!("sel{i}"), n))
            .collect()
    }
}

/// Compiles `problem` into a circuit whose consistent assignments are
/// exactly the selector vectors summing to `s`.
///
/// Element bits are constants, so masking `AND(sel_i, bit)` folds to the
/// selector itself (bit 1) or to a constant zero (bit 0). Masked operands
/// are summed by a balanced tree of ripple-carry adders.
pub fn compile_subset_sum(
    problem: &SubsetSumProblem,
) -> Result<(Circuit, SubsetSumInstance), EncodeError> {
    problem.validate()?;
    let mut b = CircuitBuilder::new();
    let selector_bits = b.nets(problem.g.len());

    let mut operands: Vec<Vec<Option<NetId>>> = problem
        .g
        .iter()
        .zip(&selector_bits)
        .map(|(&x, &sel)| {
            (0..problem.p)
                .map(|bit| (x >> bit & 1 == 1).then_some(sel))
                .collect()
        })
        .collect();
    while operands.len() > 1 {
        let mut next = Vec::with_capacity(operands.len().div_ceil(2));
        let mut it = operands.chunks(2);
        for pair in &mut it {
            match pair {
                [x, y] => next.push(b.add(x, y)),
                [x] => next.push(x.clone()),
                _ => unreachable!(),
            }
        }
        operands = next;
    }
    let width = problem.sum_width() as usize;
    let mut sum_bits = operands.pop().unwrap_or_default();
    debug_assert!(sum_bits.len() <= width);
    sum_bits.resize(width, None);

    let mut contradiction = None;
    for (j, bit) in sum_bits.iter().enumerate() {
        let want = problem.s >> j & 1 == 1;
        match bit {
            Some(net) => b.pin(*net, want),
            None if want => {
                // Column is structurally zero but the target needs a one.
                let out = *contradiction.get_or_insert_with(|| {
                    let zero = b.net();
                    b.pin(zero, false);
                    b.gate(GateKind::And, &[zero, zero])
                });
                b.pin(out, true);
            }
            None => {}
        }
    }

    let instance = SubsetSumInstance {
        problem: problem.clone(),
        selector_bits,
        sum_bits,
    };
    Ok((b.build(), instance))
}
