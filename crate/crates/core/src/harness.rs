//! Exhaustive oracles, seeded instance generators and the subset-sum scaling
//! benchmark.

use std::collections::HashMap;
use std::io::{self, Write};
use std::time::Instant;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::Assignment;
use crate::dynamics::DynParams;
use crate::encode::{compile_subset_sum, tseitin, Clause, ClauseSystem, Literal, SubsetSumProblem};
use crate::integrate::{solve, IntegratorConfig, SolveStatus};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HarnessError {
    #[error("instance too large for exhaustive search ({size} > {limit})")]
    TooLarge { size: usize, limit: usize },
    #[error("generator size {0} outside 3..=24")]
    BadSize(usize),
}

/// Lexicographically smallest selector string `sel_0 sel_1 … sel_{N-1}`
/// whose elements sum to `s`, as a mask with bit `i` = element `i`.
pub fn brute_subset_sum(g: &[u64], s: u64) -> Result<Option<u64>, HarnessError> {
    const LIMIT: usize = 30;
    if g.len() > LIMIT {
        return Err(HarnessError::TooLarge {
            size: g.len(),
            limit: LIMIT,
        });
    }
    let n = g.len();
    for word in 0..1u64 << n {
        // Element 0 is the most significant character of the string.
        let mut sum = 0;
        let mut mask = 0;
        for (i, &x) in g.iter().enumerate() {
            if word >> (n - 1 - i) & 1 == 1 {
                sum += x;
                mask |= 1 << i;
            }
        }
        if sum == s {
            return Ok(Some(mask));
        }
    }
    Ok(None)
}

/// Number of subsets summing to `s`; always visits all `2^N` subsets.
pub fn count_subset_solutions(g: &[u64], s: u64) -> u64 {
    (0..1u64 << g.len())
        .filter(|&mask| {
            g.iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, &x)| x)
                .sum::<u64>()
                == s
        })
        .count() as u64
}

/// Meet-in-the-middle subset-sum: tabulates the `2^{N/2}` partial sums of
/// one half and looks up the complement of every partial sum of the other.
/// Returns some solving mask (not necessarily the smallest).
pub fn mitm_subset_sum(g: &[u64], s: u64) -> Option<u64> {
    let half = g.len() / 2;
    let (lo, hi) = g.split_at(half);
    let sums = |part: &[u64]| -> Vec<u64> {
        (0..1u64 << part.len())
            .map(|mask| {
                part.iter()
                    .enumerate()
                    .filter(|(i, _)| mask >> i & 1 == 1)
                    .map(|(_, &x)| x)
                    .sum()
            })
            .collect()
    };
    let mut table: HashMap<u64, u64> = HashMap::new();
    for (mask, sum) in sums(lo).into_iter().enumerate() {
        table.entry(sum).or_insert(mask as u64);
    }
    sums(hi).into_iter().enumerate().find_map(|(mask, sum)| {
        let need = s.checked_sub(sum)?;
        table
            .get(&need)
            .map(|&lo_mask| lo_mask | (mask as u64) << half)
    })
}

/// Smallest odd factor `3 ≤ p ≤ √n`, as `(p, n / p)`; `None` for primes.
pub fn brute_factor(n: u64) -> Option<(u64, u64)> {
    (3..)
        .step_by(2)
        .take_while(|p| p * p <= n)
        .find(|p| n.is_multiple_of(*p))
        .map(|p| (p, n / p))
}

/// First satisfying assignment in lexicographic order (net 0 most
/// significant).
pub fn brute_sat(system: &ClauseSystem) -> Result<Option<Assignment>, HarnessError> {
    const LIMIT: usize = 26;
    let m = system.num_nets;
    if m > LIMIT {
        return Err(HarnessError::TooLarge {
            size: m,
            limit: LIMIT,
        });
    }
    let mut values = vec![false; m];
    for word in 0..1u64 << m {
        for (i, v) in values.iter_mut().enumerate() {
            *v = word >> (m - 1 - i) & 1 == 1;
        }
        if system.satisfied_by(&values) {
            return Ok(Some(Assignment::from_dense(&values)));
        }
    }
    Ok(None)
}

/// Number of satisfying assignments by enumeration.
pub fn count_sat(system: &ClauseSystem) -> Result<u64, HarnessError> {
    const LIMIT: usize = 26;
    let m = system.num_nets;
    if m > LIMIT {
        return Err(HarnessError::TooLarge {
            size: m,
            limit: LIMIT,
        });
    }
    let mut values = vec![false; m];
    let mut count = 0;
    for word in 0..1u64 << m {
        for (i, v) in values.iter_mut().enumerate() {
            *v = word >> i & 1 == 1;
        }
        count += u64::from(system.satisfied_by(&values));
    }
    Ok(count)
}

/// Hard-case subset-sum (`p = N`): `N` elements uniform in `[1, 2^N)` and
/// the sum of a random non-empty subset as target.
pub fn gen_subset_sum_hard(n: usize, seed: u64) -> Result<SubsetSumProblem, HarnessError> {
    if !(3..=24).contains(&n) {
        return Err(HarnessError::BadSize(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g: Vec<u64> = (0..n).map(|_| rng.random_range(1..1u64 << n)).collect();
    let mask = rng.random_range(1..1u64 << n);
    let s = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| g[i]).sum();
    Ok(SubsetSumProblem::new(g, n as u32, s))
}

/// Random 3-SAT with `round(ratio · vars)` clauses over distinct variables,
/// each clause rejected and redrawn until the planted assignment satisfies it.
/// Returns the system and the planted assignment.
pub fn gen_planted_3sat(vars: usize, ratio: f64, seed: u64) -> (ClauseSystem, Vec<bool>) {
    assert!(vars >= 3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let planted: Vec<bool> = (0..vars).map(|_| rng.random_bool(0.5)).collect();
    let count = (ratio * vars as f64).round() as usize;
    let mut clauses = Vec::with_capacity(count);
    while clauses.len() < count {
        let lits: Vec<Literal> = sample(&mut rng, vars, 3)
            .into_iter()
            .map(|net| Literal {
                net,
                positive: rng.random_bool(0.5),
            })
            .collect();
        if lits.iter().any(|l| l.holds(planted[l.net])) {
            clauses.push(Clause::new(lits));
        }
    }
    (ClauseSystem::new(vars, clauses), planted)
}

/// Uniform random 3-SAT (no planted solution).
pub fn gen_random_3sat(vars: usize, ratio: f64, seed: u64) -> ClauseSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = (ratio * vars as f64).round() as usize;
    let clauses = (0..count)
        .map(|_| {
            Clause::new(
                sample(&mut rng, vars, 3)
                    .into_iter()
                    .map(|net| Literal {
                        net,
                        positive: rng.random_bool(0.5),
                    })
                    .collect(),
            )
        })
        .collect();
    ClauseSystem::new(vars, clauses)
}

/// Planted 3-SAT grown clause by clause until the planted assignment is the
/// only solution. Requires `vars ≤ 20`.
pub fn gen_unique_3sat(vars: usize, seed: u64) -> (ClauseSystem, Vec<bool>) {
    assert!((3..=20).contains(&vars));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let planted: Vec<bool> = (0..vars).map(|_| rng.random_bool(0.5)).collect();
    let mut clauses: Vec<Clause> = Vec::new();
    let mut alive: Vec<u32> = (0..1u32 << vars).collect();
    while alive.len() > 1 {
        let lits: Vec<Literal> = sample(&mut rng, vars, 3)
            .into_iter()
            .map(|net| Literal {
                net,
                positive: rng.random_bool(0.5),
            })
            .collect();
        if !lits.iter().any(|l| l.holds(planted[l.net])) {
            continue;
        }
        let before = alive.len();
        alive.retain(|&w| lits.iter().any(|l| l.holds(w >> l.net & 1 == 1)));
        if alive.len() < before {
            clauses.push(Clause::new(lits));
        }
    }
    (ClauseSystem::new(vars, clauses), planted)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub p: u32,
    pub instance_seed: u64,
    pub status: String,
    pub steps_used: u64,
    pub model_time: f64,
    pub wall_time: f64,
    pub brute_force_wall_time: f64,
    pub clause_count: usize,
}

pub const BENCH_COLUMNS: [&str; 9] = [
    "N",
    "p",
    "instance_seed",
    "status",
    "steps_used",
    "model_time",
    "wall_time",
    "brute_force_wall_time",
    "clause_count",
];

impl BenchRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.n,
            self.p,
            self.instance_seed,
            self.status,
            self.steps_used,
            self.model_time,
            self.wall_time,
            self.brute_force_wall_time,
            self.clause_count
        )
    }

    pub fn solved(&self) -> bool {
        self.status == "solved"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub model: String,
    pub params: std::collections::BTreeMap<String, f64>,
    pub r2: f64,
}

/// Ordinary least squares `y = a + b x`; returns `(a, b, r2)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a_, b_)| (b_ - (a + b * a_)).powi(2))
        .sum();
    let r2 = if ss_tot == 0.0 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Some((a, b, r2))
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Exponential (`median steps ~ A · base^N`) and power-law
/// (`median steps ~ A · (M + 2K)^k`) fits over per-`N` medians.
/// `dims[i]` is the phase-space dimension of row `i`.
pub fn scaling_fits(rows: &[BenchRow], dims: &[usize]) -> Vec<FitSummary> {
    let mut by_n: std::collections::BTreeMap<usize, (Vec<f64>, Vec<f64>)> = Default::default();
    for (row, &dim) in rows.iter().zip(dims) {
        let entry = by_n.entry(row.n).or_default();
        entry.0.push(row.steps_used.max(1) as f64);
        entry.1.push(dim as f64);
    }
    let mut ns = Vec::new();
    let mut log_steps = Vec::new();
    let mut log_dims = Vec::new();
    for (n, (mut steps, mut d)) in by_n {
        ns.push(n as f64);
        log_steps.push(median(&mut steps).ln());
        log_dims.push(median(&mut d).ln());
    }
    let mut fits = Vec::new();
    if let Some((a, b, r2)) = linear_fit(&ns, &log_steps) {
        fits.push(FitSummary {
            model: "exponential".into(),
            params: [
                ("prefactor".to_string(), a.exp()),
                ("base".to_string(), b.exp()),
            ]
            .into_iter()
            .collect(),
            r2,
        });
    }
    if let Some((a, k, r2)) = linear_fit(&log_dims, &log_steps) {
        fits.push(FitSummary {
            model: "power_law".into(),
            params: [
                ("prefactor".to_string(), a.exp()),
                ("exponent".to_string(), k),
            ]
            .into_iter()
            .collect(),
            r2,
        });
    }
    fits
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchResult {
    pub rows: Vec<BenchRow>,
    pub fits: Vec<FitSummary>,
    /// Rows whose reported solution failed the oracle check (always empty
    /// unless the solver is unsound).
    pub verification_failures: Vec<usize>,
}

/// Seed of instance `index` at size `n`.
pub fn instance_seed(base: u64, n: usize, index: usize) -> u64 {
    base ^ ((n as u64) << 32 | index as u64)
}

/// Solves `instances_per_n` planted hard-case instances for every `N` in
/// `sizes`, verifies each answer against the exhaustive oracle and writes
/// the rows as CSV to `out`.
pub fn bench_scaling<W: Write>(
    sizes: &[usize],
    instances_per_n: usize,
    base_seed: u64,
    params: &DynParams,
    config: &IntegratorConfig,
    mut out: W,
) -> io::Result<BenchResult> {
    writeln!(out, "{}", BENCH_COLUMNS.join(","))?;
    let mut rows = Vec::new();
    let mut dims = Vec::new();
    let mut verification_failures = Vec::new();
    for &n in sizes {
        for index in 0..instances_per_n {
            let seed = instance_seed(base_seed, n, index);
            let row = match bench_one(n, seed, params, config) {
                Ok((row, dim, verified)) => {
                    if !verified {
                        verification_failures.push(rows.len());
                    }
                    dims.push(dim);
                    row
                }
                Err(status) => {
                    dims.push(0);
                    BenchRow {
                        n,
                        p: n as u32,
                        instance_seed: seed,
                        status,
                        steps_used: 0,
                        model_time: 0.0,
                        wall_time: 0.0,
                        brute_force_wall_time: 0.0,
                        clause_count: 0,
                    }
                }
            };
            writeln!(out, "{}", row.csv_line())?;
            rows.push(row);
        }
    }
    out.flush()?;
    let ok: Vec<usize> = (0..rows.len()).filter(|&i| dims[i] > 0).collect();
    let fit_rows: Vec<BenchRow> = ok.iter().map(|&i| rows[i].clone()).collect();
    let fit_dims: Vec<usize> = ok.iter().map(|&i| dims[i]).collect();
    let fits = scaling_fits(&fit_rows, &fit_dims);
    Ok(BenchResult {
        rows,
        fits,
        verification_failures,
    })
}

/// One benchmark instance: `(row, phase-space dimension, verified)`.
fn bench_one(
    n: usize,
    seed: u64,
    params: &DynParams,
    config: &IntegratorConfig,
) -> Result<(BenchRow, usize, bool), String> {
    let problem = gen_subset_sum_hard(n, seed).map_err(|e| format!("error: {e}"))?;
    let (circuit, instance) = compile_subset_sum(&problem).map_err(|e| format!("error: {e}"))?;
    let system = tseitin(&circuit);
    let dim = system.num_nets + 2 * system.num_clauses();

    let start = Instant::now();
    let (report, _) = solve(&system, params, config).map_err(|e| format!("error: {e}"))?;
    let wall_time = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let count = count_subset_solutions(&problem.g, problem.s);
    let brute_force_wall_time = start.elapsed().as_secs_f64();

    let verified = match report.status {
        SolveStatus::Solved => {
            let mask = report
                .assignment
                .as_ref()
                .and_then(|a| instance.decode(a))
                .unwrap_or(u64::MAX);
            count > 0 && mask != u64::MAX && problem.subset_sum(mask) == problem.s
        }
        SolveStatus::BudgetExhausted => true,
    };
    let status = match report.status {
        SolveStatus::Solved => "solved",
        SolveStatus::BudgetExhausted => "budget_exhausted",
    };
    Ok((
        BenchRow {
            n,
            p: problem.p,
            instance_seed: seed,
            status: status.to_string(),
            steps_used: report.steps_used,
            model_time: report.model_time,
            wall_time,
            brute_force_wall_time,
            clause_count: system.num_clauses(),
        },
        dim,
        verified,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subset_oracle_examples() {
        assert_eq!(brute_subset_sum(&[3, 5, 7], 8), Ok(Some(0b011)));
        assert_eq!(brute_subset_sum(&[3, 5, 7], 0), Ok(Some(0)));
        assert_eq!(brute_subset_sum(&[2, 3], 7), Ok(None));
        assert!(brute_subset_sum(&[1; 31], 3).is_err());
    }

    #[test]
    fn subset_oracle_prefers_later_elements() {
        // "01…" sorts before "10…": 3 = G[1] beats 3 = G[0].
        assert_eq!(brute_subset_sum(&[3, 3], 3), Ok(Some(0b10)));
    }

    #[test]
    fn mitm_agrees_with_enumeration() {
        for seed in 0..40 {
            let p = gen_subset_sum_hard(10, seed).unwrap();
            let mut q = p.clone();
            q.s = p.s + seed % 3;
            for inst in [&p, &q] {
                let brute = brute_subset_sum(&inst.g, inst.s).unwrap();
                let mitm = mitm_subset_sum(&inst.g, inst.s);
                assert_eq!(brute.is_some(), mitm.is_some());
                if let Some(mask) = mitm {
                    assert_eq!(inst.subset_sum(mask), inst.s);
                }
            }
        }
    }

    #[test]
    fn factor_oracle() {
        assert_eq!(brute_factor(35), Some((5, 7)));
        assert_eq!(brute_factor(9), Some((3, 3)));
        assert_eq!(brute_factor(13), None);
    }

    #[test]
    fn sat_oracle() {
        let sys = ClauseSystem::new(2, vec![Clause::new(vec![Literal::pos(0), Literal::neg(1)])]);
        let a = brute_sat(&sys).unwrap().unwrap();
        assert_eq!((a.get(0), a.get(1)), (Some(false), Some(false)));
        let contra = ClauseSystem::new(
            1,
            vec![
                Clause::new(vec![Literal::pos(0)]),
                Clause::new(vec![Literal::neg(0)]),
            ],
        );
        assert_eq!(brute_sat(&contra), Ok(None));
        assert_eq!(count_sat(&sys), Ok(3));
    }

    #[test]
    fn hard_generator() {
        let a = gen_subset_sum_hard(8, 42).unwrap();
        assert_eq!(a, gen_subset_sum_hard(8, 42).unwrap());
        assert_ne!(a, gen_subset_sum_hard(8, 43).unwrap());
        for seed in 0..50 {
            let p = gen_subset_sum_hard(6, seed).unwrap();
            assert_eq!(p.p, 6);
            assert!(p.g.iter().all(|&x| (1..64).contains(&x)));
            assert!(p.s > 0);
            assert!(brute_subset_sum(&p.g, p.s).unwrap().is_some());
        }
        assert_eq!(gen_subset_sum_hard(2, 0), Err(HarnessError::BadSize(2)));
    }

    #[test]
    fn planted_generators() {
        let (sys, planted) = gen_planted_3sat(50, 4.3, 7);
        assert_eq!(sys.num_clauses(), 215);
        assert!(sys.satisfied_by(&planted));
        let (sys, planted) = gen_unique_3sat(10, 3);
        assert!(sys.satisfied_by(&planted));
        assert_eq!(count_sat(&sys), Ok(1));
    }

    #[test]
    fn fits_recover_exact_models() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 + 0.5 * v).collect();
        let (a, b, r2) = linear_fit(&x, &y).unwrap();
        assert!((a - 2.0).abs() < 1e-12 && (b - 0.5).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
