//! Continuous relaxation of a clause system.
//!
//! Every net carries a voltage `v ∈ [-1, 1]` (+1 is logical 1, -1 logical 0)
//! and every clause `m` carries a short memory `xs_m ∈ [0, 1]` and a long
//! memory `xl_m ∈ [1, l_max·K]`. With `a_j = 1 - s_j v_j` for the literals of
//! a clause, the clause value is `C_m = ½ min_j a_j` and
//!
//! ```text
//! dv_n  = Σ_{m ∋ n} xl_m xs_m G_mn + (1 + ζ xl_m)(1 - xs_m) R_mn
//! G_mn  = ½ s_mn min_{j ≠ n} a_j
//! R_mn  = ½ (s_mn - v_n)   if n is the clause minimizer, else 0
//! dxs_m = β (xs_m + ε)(C_m - γ)
//! dxl_m = α (C_m - δ)
//! ```
//!
//! plus a weak latch `κ (sgn v_n - v_n)` on every voltage. The latch vanishes
//! on logic levels; it only resolves nets that no clause needs any more,
//! which the clause terms above leave wherever they happen to be.
//!
//! `G` is a soft push that is on whenever the other literals are failing;
//! `R` is the rigid correction that pulls the best literal onto its value and
//! dominates while the short memory says the clause is fine. Persistent
//! violation raises both memories, handing control to the long-memory
//! weighted `G` term.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::Assignment;
use crate::encode::{Clause, ClauseSystem};

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error(
        "state dimensions ({v}, {xs}, {xl}) do not match system ({nets} nets, {clauses} clauses)"
    )]
    DimensionMismatch {
        v: usize,
        xs: usize,
        xl: usize,
        nets: usize,
        clauses: usize,
    },
    #[error("invalid dynamics parameters: {0}")]
    InvalidParams(String),
    #[error("flow produced a non-finite value")]
    NonFiniteFlow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub zeta: f64,
    /// Per-clause long-memory cap; the effective cap is `l_max · K`.
    pub l_max: f64,
    /// Strength of the pull of each voltage toward its nearest logic level.
    pub latch: f64,
}

impl Default for DynParams {
    fn default() -> Self {
        DynParams {
            alpha: 5.0,
            beta: 20.0,
            gamma: 0.25,
            delta: 0.05,
            epsilon: 1e-3,
            zeta: 0.1,
            l_max: 1e4,
            latch: 0.05,
        }
    }
}

impl DynParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let fields = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("delta", self.delta),
            ("epsilon", self.epsilon),
            ("zeta", self.zeta),
            ("l_max", self.l_max),
        ];
        if let Some((name, value)) = fields.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(DynamicsError::InvalidParams(format!(
                "{name} must be positive and finite, got {value}"
            )));
        }
        if !(self.delta < self.gamma && self.gamma < 1.0) {
            return Err(DynamicsError::InvalidParams(
                "require delta < gamma < 1".into(),
            ));
        }
        if !(self.latch >= 0.0 && self.latch.is_finite()) {
            return Err(DynamicsError::InvalidParams("latch must be >= 0".into()));
        }
        if self.l_max < 1.0 {
            return Err(DynamicsError::InvalidParams("l_max must be >= 1".into()));
        }
        Ok(())
    }
}

/// Point in phase space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverState {
    pub v: Vec<f64>,
    pub xs: Vec<f64>,
    pub xl: Vec<f64>,
    pub t: f64,
}

impl SolverState {
    pub fn dim(&self) -> usize {
        self.v.len() + self.xs.len() + self.xl.len()
    }

    /// Flat `(v, xs, xl)` coordinates.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        out.extend_from_slice(&self.v);
        out.extend_from_slice(&self.xs);
        out.extend_from_slice(&self.xl);
        out
    }

    /// Overwrites the coordinates from a flat vector laid out like `to_vec`.
    pub fn set_from_slice(&mut self, x: &[f64]) {
        let (m, k) = (self.v.len(), self.xs.len());
        self.v.copy_from_slice(&x[..m]);
        self.xs.copy_from_slice(&x[m..m + k]);
        self.xl.copy_from_slice(&x[m + k..]);
    }
}

/// Time derivatives at a state, unclamped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowEval {
    pub dv: Vec<f64>,
    pub dxs: Vec<f64>,
    pub dxl: Vec<f64>,
}

impl FlowEval {
    pub fn zeros(nets: usize, clauses: usize) -> Self {
        FlowEval {
            dv: vec![0.0; nets],
            dxs: vec![0.0; clauses],
            dxl: vec![0.0; clauses],
        }
    }

    pub fn max_abs_dv(&self) -> f64 {
        self.dv.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn max_norm(&self) -> f64 {
        self.dv
            .iter()
            .chain(&self.dxs)
            .chain(&self.dxl)
            .fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.dv
            .iter()
            .chain(&self.dxs)
            .chain(&self.dxl)
            .all(|x| x.is_finite())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dv.len() + 2 * self.dxs.len());
        out.extend_from_slice(&self.dv);
        out.extend_from_slice(&self.dxs);
        out.extend_from_slice(&self.dxl);
        out
    }
}

/// `½ min_j (1 - s_j v_j)` over the clause literals.
pub fn clause_value(clause: &Clause, v: &[f64]) -> f64 {
    0.5 * clause
        .literals()
        .iter()
        .map(|l| 1.0 - l.sign() * v[l.net])
        .fold(f64::INFINITY, f64::min)
}

/// Sign with `sign0(0) = 0`.
#[inline]
fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Clauses per parallel work unit.
const PAR_CHUNK: usize = 512;

/// Flattened clause system plus parameters; the evaluation engine behind
/// [`flow`].
#[derive(Debug, Clone)]
pub struct FlowField {
    params: DynParams,
    num_nets: usize,
    /// Clause `m` owns literal slots `offsets[m]..offsets[m + 1]`.
    offsets: Vec<usize>,
    lit_net: Vec<u32>,
    lit_sign: Vec<f64>,
    /// Slots touching net `n`: `net_slots[net_offsets[n]..net_offsets[n + 1]]`,
    /// in increasing clause order.
    net_offsets: Vec<usize>,
    net_slots: Vec<u32>,
    xl_cap: f64,
    parallel: bool,
}

/// Clause-level summary gathered during a flow evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ClauseSummary {
    /// Largest clause value `C_m`.
    pub max_clause_value: f64,
}

impl FlowField {
    pub fn new(system: &ClauseSystem, params: DynParams) -> Result<Self, DynamicsError> {
        params.validate()?;
        let mut offsets = Vec::with_capacity(system.clauses.len() + 1);
        let mut lit_net = Vec::new();
        let mut lit_sign = Vec::new();
        offsets.push(0);
        for clause in &system.clauses {
            for lit in clause.literals() {
                lit_net.push(lit.net as u32);
                lit_sign.push(lit.sign());
            }
            offsets.push(lit_net.len());
        }
        let mut counts = vec![0usize; system.num_nets + 1];
        for &n in &lit_net {
            counts[n as usize + 1] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let net_offsets = counts.clone();
        let mut fill = counts;
        let mut net_slots = vec![0u32; lit_net.len()];
        for (slot, &n) in lit_net.iter().enumerate() {
            net_slots[fill[n as usize]] = slot as u32;
            fill[n as usize] += 1;
        }
        let k = system.clauses.len();
        Ok(FlowField {
            params,
            num_nets: system.num_nets,
            offsets,
            lit_net,
            lit_sign,
            net_offsets,
            net_slots,
            xl_cap: params.l_max * (k.max(1) as f64),
            parallel: false,
        })
    }

    /// Enables clause-parallel evaluation. Results are bit-identical to the
    /// sequential path.
    pub fn with_parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    pub fn params(&self) -> &DynParams {
        &self.params
    }

    pub fn num_nets(&self) -> usize {
        self.num_nets
    }

    pub fn num_clauses(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.num_nets + 2 * self.num_clauses()
    }

    pub fn xl_cap(&self) -> f64 {
        self.xl_cap
    }

    /// Number of clauses mentioning net `n`.
    pub fn degree(&self, n: usize) -> usize {
        self.net_offsets[n + 1] - self.net_offsets[n]
    }

    /// Lower and upper bound of flat coordinate `i`.
    pub fn bounds(&self, i: usize) -> (f64, f64) {
        let (m, k) = (self.num_nets, self.num_clauses());
        if i < m {
            (-1.0, 1.0)
        } else if i < m + k {
            (0.0, 1.0)
        } else {
            (1.0, self.xl_cap)
        }
    }

    pub fn check_dims(&self, state: &SolverState) -> Result<(), DynamicsError> {
        let k = self.num_clauses();
        if state.v.len() != self.num_nets || state.xs.len() != k || state.xl.len() != k {
            return Err(DynamicsError::DimensionMismatch {
                v: state.v.len(),
                xs: state.xs.len(),
                xl: state.xl.len(),
                nets: self.num_nets,
                clauses: k,
            });
        }
        Ok(())
    }

    /// Initial state: random voltages, `xs = 0.5`, `xl = 1`. Nets that no
    /// clause mentions never move, so they start at logical 0.
    pub fn init_state<R: Rng>(&self, rng: &mut R) -> SolverState {
        let v = (0..self.num_nets)
            .map(|n| {
                let x = rng.random_range(-1.0..=1.0);
                if self.degree(n) == 0 {
                    -1.0
                } else {
                    x
                }
            })
            .collect();
        let k = self.num_clauses();
        SolverState {
            v,
            xs: vec![0.5; k],
            xl: vec![1.0; k],
            t: 0.0,
        }
    }

    /// Projects a state onto the box.
    pub fn clamp(&self, state: &mut SolverState) {
        for v in &mut state.v {
            *v = v.clamp(-1.0, 1.0);
        }
        for x in &mut state.xs {
            *x = x.clamp(0.0, 1.0);
        }
        for x in &mut state.xl {
            *x = x.clamp(1.0, self.xl_cap);
        }
    }

    pub fn in_box(&self, state: &SolverState) -> bool {
        state.v.iter().all(|v| (-1.0..=1.0).contains(v))
            && state.xs.iter().all(|x| (0.0..=1.0).contains(x))
            && state.xl.iter().all(|x| (1.0..=self.xl_cap).contains(x))
    }

    /// Clause `m` contribution: passes one dv term per literal slot to
    /// `emit(slot, term)` and returns `(C_m, dxs_m, dxl_m)`.
    #[inline(always)]
    fn clause_terms<E: FnMut(usize, f64)>(
        &self,
        m: usize,
        state: &SolverState,
        mut emit: E,
    ) -> (f64, f64, f64) {
        let p = &self.params;
        let lo = self.offsets[m];
        let hi = self.offsets[m + 1];
        let mut min1 = f64::INFINITY;
        let mut min2 = f64::INFINITY;
        let mut arg = lo;
        for slot in lo..hi {
            let a = 1.0 - self.lit_sign[slot] * state.v[self.lit_net[slot] as usize];
            if a < min1 {
                min2 = min1;
                min1 = a;
                arg = slot;
            } else if a < min2 {
                min2 = a;
            }
        }
        // Unit clause: the minimum over no other literals is taken as 2,
        // the fully violated value.
        if min2 == f64::INFINITY {
            min2 = 2.0;
        }
        let c = 0.5 * min1;
        let xs = state.xs[m];
        let xl = state.xl[m];
        let gain = xl * xs;
        let rigid = (1.0 + p.zeta * xl) * (1.0 - xs);
        for slot in lo..hi {
            let s = self.lit_sign[slot];
            let term = if slot == arg {
                let v = state.v[self.lit_net[slot] as usize];
                gain * 0.5 * s * min2 + rigid * 0.5 * (s - v)
            } else {
                gain * 0.5 * s * min1
            };
            emit(slot, term);
        }
        let dxs = p.beta * (xs + p.epsilon) * (c - p.gamma);
        let dxl = p.alpha * (c - p.delta);
        (c, dxs, dxl)
    }

    /// Evaluates the flow into `out`.
    pub fn eval_into(&self, state: &SolverState, out: &mut FlowEval) -> ClauseSummary {
        if self.parallel && self.num_clauses() >= 2 * PAR_CHUNK {
            return self.eval_parallel(state, out);
        }
        out.dv.iter_mut().for_each(|x| *x = 0.0);
        let mut max_c: f64 = 0.0;
        for m in 0..self.num_clauses() {
            let dv = &mut out.dv;
            let (c, dxs, dxl) = self.clause_terms(m, state, |slot, term| {
                dv[self.lit_net[slot] as usize] += term
            });
            out.dxs[m] = dxs;
            out.dxl[m] = dxl;
            max_c = max_c.max(c);
        }
        let latch = self.params.latch;
        for (dv, &v) in out.dv.iter_mut().zip(&state.v) {
            *dv += latch * (sign0(v) - v);
        }
        ClauseSummary {
            max_clause_value: max_c,
        }
    }

    fn eval_parallel(&self, state: &SolverState, out: &mut FlowEval) -> ClauseSummary {
        let k = self.num_clauses();
        let mut contrib = vec![0.0f64; self.lit_net.len()];
        // Disjoint (clauses, slots, dxs, dxl) work units.
        let mut units = Vec::with_capacity(k.div_ceil(PAR_CHUNK));
        {
            let mut rest_c: &mut [f64] = &mut contrib;
            let mut rest_s: &mut [f64] = &mut out.dxs;
            let mut rest_l: &mut [f64] = &mut out.dxl;
            let mut start = 0;
            while start < k {
                let end = (start + PAR_CHUNK).min(k);
                let slots = self.offsets[end] - self.offsets[start];
                let (c, rc) = std::mem::take(&mut rest_c).split_at_mut(slots);
                let (s, rs) = std::mem::take(&mut rest_s).split_at_mut(end - start);
                let (l, rl) = std::mem::take(&mut rest_l).split_at_mut(end - start);
                units.push((start, end, c, s, l));
                rest_c = rc;
                rest_s = rs;
                rest_l = rl;
                start = end;
            }
        }
        let max_c = units
            .into_par_iter()
            .map(|(start, end, c, s, l)| {
                let base = self.offsets[start];
                let mut max_c: f64 = 0.0;
                for m in start..end {
                    let (cv, dxs, dxl) =
                        self.clause_terms(m, state, |slot, term| c[slot - base] = term);
                    s[m - start] = dxs;
                    l[m - start] = dxl;
                    max_c = max_c.max(cv);
                }
                max_c
            })
            .collect::<Vec<f64>>()
            .into_iter()
            .fold(0.0, f64::max);
        let latch = self.params.latch;
        out.dv.par_iter_mut().enumerate().for_each(|(n, dv)| {
            let mut acc = 0.0;
            for &slot in &self.net_slots[self.net_offsets[n]..self.net_offsets[n + 1]] {
                acc += contrib[slot as usize];
            }
            let v = state.v[n];
            *dv = acc + latch * (sign0(v) - v);
        });
        ClauseSummary {
            max_clause_value: max_c,
        }
    }

    pub fn eval(&self, state: &SolverState) -> FlowEval {
        let mut out = FlowEval::zeros(self.num_nets, self.num_clauses());
        self.eval_into(state, &mut out);
        out
    }

    /// Flow with components zeroed where the coordinate sits on a bound
    /// and the flow points out of the box. Zeros of this field are the
    /// equilibria of the clamped dynamics.
    pub fn projected(&self, state: &SolverState, flow: &FlowEval) -> FlowEval {
        let mut out = flow.clone();
        let project = |x: f64, d: &mut f64, lo: f64, hi: f64| {
            if (x <= lo && *d < 0.0) || (x >= hi && *d > 0.0) {
                *d = 0.0;
            }
        };
        for (x, d) in state.v.iter().zip(&mut out.dv) {
            project(*x, d, -1.0, 1.0);
        }
        for (x, d) in state.xs.iter().zip(&mut out.dxs) {
            project(*x, d, 0.0, 1.0);
        }
        for (x, d) in state.xl.iter().zip(&mut out.dxl) {
            project(*x, d, 1.0, self.xl_cap);
        }
        out
    }

    /// Central-difference Jacobian over the flat `(v, xs, xl)` coordinates.
    /// Steps are `h · max(1, |x_j|)`; coordinates within one step of a
    /// bound use a one-sided difference into the box and are listed in
    /// `one_sided`.
    pub fn jacobian_fd(&self, state: &SolverState, h: f64) -> FdJacobian {
        let n = self.dim();
        let x0 = state.to_vec();
        let mut probe = state.clone();
        let mut matrix = DMatrix::zeros(n, n);
        let mut one_sided = Vec::new();
        let eval_at = |probe: &mut SolverState, x: &[f64]| {
            probe.set_from_slice(x);
            self.eval(probe).to_vec()
        };
        let mut x = x0.clone();
        for j in 0..n {
            let (lo, hi) = self.bounds(j);
            let step = h * x0[j].abs().max(1.0);
            let up = x0[j] + step <= hi;
            let down = x0[j] - step >= lo;
            let (xp, xm) = match (up, down) {
                (true, true) => (x0[j] + step, x0[j] - step),
                (true, false) => (x0[j] + step, x0[j]),
                (false, true) => (x0[j], x0[j] - step),
                (false, false) => (x0[j] + step, x0[j] - step),
            };
            if !(up && down) {
                one_sided.push(j);
            }
            x[j] = xp;
            let fp = eval_at(&mut probe, &x);
            x[j] = xm;
            let fm = eval_at(&mut probe, &x);
            x[j] = x0[j];
            let width = xp - xm;
            for i in 0..n {
                matrix[(i, j)] = (fp[i] - fm[i]) / width;
            }
        }
        FdJacobian { matrix, one_sided }
    }
}

#[derive(Debug, Clone)]
pub struct FdJacobian {
    pub matrix: DMatrix<f64>,
    /// Coordinates differenced one-sidedly because they sit at a bound.
    pub one_sided: Vec<usize>,
}

/// Flow of `system` at `state`.
pub fn flow(
    system: &ClauseSystem,
    state: &SolverState,
    params: &DynParams,
) -> Result<FlowEval, DynamicsError> {
    let field = FlowField::new(system, *params)?;
    field.check_dims(state)?;
    Ok(field.eval(state))
}

/// Finite-difference Jacobian of the flow, `(M + 2K)²` entries.
pub fn jacobian_fd(
    system: &ClauseSystem,
    state: &SolverState,
    params: &DynParams,
    h: f64,
) -> Result<FdJacobian, DynamicsError> {
    let field = FlowField::new(system, *params)?;
    field.check_dims(state)?;
    Ok(field.jacobian_fd(state, h))
}

/// Reads logic values off voltages: `v ≥ thr` is 1, `v ≤ -thr` is 0, anything
/// in between is left undecided.
pub fn decode(state: &SolverState, threshold: f64) -> Assignment {
    decode_voltages(&state.v, threshold)
}

pub fn decode_voltages(v: &[f64], threshold: f64) -> Assignment {
    v.iter()
        .enumerate()
        .filter_map(|(n, &x)| {
            if x >= threshold {
                Some((n, true))
            } else if x <= -threshold {
                Some((n, false))
            } else {
                None
            }
        })
        .collect()
}
