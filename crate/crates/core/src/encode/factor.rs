//! Integer factorization as a multiplier circuit with a pinned product.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::circuit::{Assignment, Circuit, CircuitBuilder, GateKind, NetId};

use super::EncodeError;

/// Net layout of a compiled factorization instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorInstance {
    pub n: u64,
    /// `floor(log2 n)`; `n` has `bit_index + 1` bits.
    pub bit_index: u32,
    /// Little-endian bits of the first factor (`bit_index` of them).
    pub p_bits: Vec<NetId>,
    /// Little-endian bits of the second factor (`ceil(bit_index / 2)`).
    pub q_bits: Vec<NetId>,
    /// Little-endian product bits; the first `bit_index + 1` are pinned to
    /// `n`, the rest to zero.
    pub product_bits: Vec<NetId>,
}

impl FactorInstance {
    pub fn p_width(&self) -> u32 {
        self.bit_index
    }

    pub fn q_width(&self) -> u32 {
        self.bit_index.div_ceil(2)
    }

    /// Reads `(p, q)` off an assignment, if both factors are fully decided.
    pub fn decode(&self, a: &Assignment) -> Option<(u64, u64)> {
        Some((a.read_uint(&self.p_bits)?, a.read_uint(&self.q_bits)?))
    }

    pub fn origin(&self) -> BTreeMap<String, NetId> {
        let p = self
            .p_bits
            .iter()
            .enumerate()
            .map(|(j, &n)| (format!("p{j}"), n));
        let q = self
            .q_bits
            .iter()
            .enumerate()
            .map(|(j, &n)| (format!("q{j}"), n));
        p.chain(q).collect()
    }
}

fn bit_index(n: u64) -> u32 {
    63 - n.leading_zeros()
}

/// Builds an array multiplier of an `N`-bit `p` by a `ceil(N/2)`-bit `q`
/// whose product nets are pinned to `n`, with `p_0 = q_0 = 1`.
pub fn compile_factor(n: u64) -> Result<(Circuit, FactorInstance), EncodeError> {
    if n.is_multiple_of(2) {
        return Err(EncodeError::EvenInput(n));
    }
    if n < 9 {
        return Err(EncodeError::TooSmall(n));
    }
    let big_n = bit_index(n);
    let p_width = big_n as usize;
    let q_width = big_n.div_ceil(2) as usize;

    let mut b = CircuitBuilder::new();
    let p_bits = b.nets(p_width);
    let q_bits = b.nets(q_width);
    b.pin(p_bits[0], true);
    b.pin(q_bits[0], true);

    let row = |b: &mut CircuitBuilder, k: usize| -> Vec<Option<NetId>> {
        let mut shifted = vec![None; k];
        shifted.extend(
            p_bits
                .iter()
                .map(|&pi| Some(b.gate(GateKind::And, &[pi, q_bits[k]]))),
        );
        shifted
    };
    let mut acc = row(&mut b, 0);
    for k in 1..q_width {
        let next = row(&mut b, k);
        acc = b.add(&acc, &next);
    }
    let product_bits: Vec<NetId> = acc
        .iter()
        .map(|bit| bit.expect("multiplier columns are never constant"))
        .collect();
    debug_assert!(product_bits.len() > big_n as usize);
    for (j, &net) in product_bits.iter().enumerate() {
        b.pin(net, j <= big_n as usize && n >> j & 1 == 1);
    }

    let instance = FactorInstance {
        n,
        bit_index: big_n,
        p_bits,
        q_bits,
        product_bits,
    };
    Ok((b.build(), instance))
}

/// Remainders `r_0..r_N` of long multiplication and whether they certify
/// `p * q == n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemainderTrace {
    pub r: Vec<f64>,
    /// The remainder constraints hold and no partial product lands above
    /// column `N`.
    pub ok: bool,
}

/// Evaluates the column remainders
///
/// ```text
/// r_0 = p_0 q_0 - n_0
/// r_j = sum_{k=0..j} p_{j-k} q_k + r_{j-1}/2 - n_j            1 <= j < ceil(N/2)
/// r_j = sum_{k=0..ceil(N/2)-1} p_{j-k} q_k + r_{j-1}/2 - n_j   ceil(N/2) <= j < N
/// r_N = sum_{k=0..ceil(N/2)-1} p_{N-1-k} q_{k+1} + r_{N-1}/2 - 1
/// ```
///
/// and accepts when `r_j >= 0`, `r_j` even for `0 < j < N`, and `r_N = 0`.
/// The recurrence only looks at columns up to `N`, so partial products in
/// higher columns (possible when `p` is wide) are rejected separately.
pub fn remainder_check(n: u64, p: u64, q: u64) -> Result<RemainderTrace, EncodeError> {
    if n.is_multiple_of(2) {
        return Err(EncodeError::EvenInput(n));
    }
    if n < 3 {
        return Err(EncodeError::TooSmall(n));
    }
    let big_n = bit_index(n) as usize;
    let half = big_n.div_ceil(2);
    if p >> big_n != 0 {
        return Err(EncodeError::WidthOverflow {
            factor: p,
            bits: big_n as u32,
        });
    }
    if q >> half != 0 {
        return Err(EncodeError::WidthOverflow {
            factor: q,
            bits: half as u32,
        });
    }
    let pb = |i: usize| -> f64 { (p >> i & 1) as f64 };
    let qb = |k: usize| -> f64 { (q >> k & 1) as f64 };
    let nb = |j: usize| -> f64 { (n >> j & 1) as f64 };

    let mut r = Vec::with_capacity(big_n + 1);
    r.push(pb(0) * qb(0) - nb(0));
    for j in 1..big_n {
        let terms = if j < half { j + 1 } else { half };
        let column: f64 = (0..terms).map(|k| pb(j - k) * qb(k)).sum();
        r.push(column + r[j - 1] / 2.0 - nb(j));
    }
    let top: f64 = (0..half)
        .map(|k| {
            if big_n > k {
                pb(big_n - 1 - k) * qb(k + 1)
            } else {
                0.0
            }
        })
        .sum();
    let prev = if big_n >= 1 { r[big_n - 1] } else { 0.0 };
    r.push(top + prev / 2.0 - 1.0);

    let mut ok = r[big_n] == 0.0
        && r[1..big_n]
            .iter()
            .all(|&x| x >= 0.0 && x.fract() == 0.0 && x % 2.0 == 0.0);
    let high_column = (0..big_n)
        .flat_map(|i| (0..half).map(move |k| (i, k)))
        .any(|(i, k)| i + k > big_n && pb(i) * qb(k) != 0.0);
    ok &= !high_column;
    Ok(RemainderTrace { r, ok })
}
