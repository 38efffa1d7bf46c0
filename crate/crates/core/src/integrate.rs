//! Time stepping, equilibrium detection and the solve loop.

use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::Assignment;
use crate::dynamics::{decode, DynParams, DynamicsError, FlowEval, FlowField, SolverState};
use crate::encode::ClauseSystem;
use crate::report::sha256_hex;

#[derive(Debug, Error, PartialEq)]
pub enum SolveError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("invalid integrator config: {0}")]
    InvalidConfig(String),
    #[error("clause system is empty")]
    EmptySystem,
    #[error("non-finite flow at step {step} of attempt {attempt}")]
    NonFiniteFlow { step: u64, attempt: u32 },
    #[error("solved state does not satisfy clause {0}")]
    UnsoundReport(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    EulerAdaptive,
    Trapezoid,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "euler_adaptive" | "euler" => Ok(Method::EulerAdaptive),
            "trapezoid" => Ok(Method::Trapezoid),
            other => Err(format!(
                "unknown method `{other}` (euler_adaptive | trapezoid)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub method: Method,
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Largest voltage change the step-size controller aims for.
    pub dv_max: f64,
    /// Step budget per attempt.
    pub max_steps: u64,
    /// Consecutive satisfied states required to call an equilibrium.
    pub hold_steps: u32,
    pub decode_threshold: f64,
    pub noise_amp: f64,
    pub rng_seed: u64,
    /// Number of attempts; attempt `i` is seeded with `rng_seed + i`.
    pub restarts: u32,
    pub newton_tol: f64,
    pub newton_max_iter: u32,
    /// Keep every `sample_stride`-th state in the trajectory; 0 keeps only
    /// the first and last.
    pub sample_stride: u64,
    /// Clause-parallel flow evaluation.
    pub parallel: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            method: Method::EulerAdaptive,
            dt_init: 0.0625,
            dt_min: 1.0 / 1024.0,
            dt_max: 1.0,
            dv_max: 0.1,
            max_steps: 1_000_000,
            hold_steps: 10,
            decode_threshold: 0.5,
            noise_amp: 0.0,
            rng_seed: 0,
            restarts: 1,
            newton_tol: 1e-9,
            newton_max_iter: 20,
            sample_stride: 0,
            parallel: false,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        let bad = |msg: &str| Err(SolveError::InvalidConfig(msg.to_string()));
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_init && self.dt_init <= self.dt_max) {
            return bad("require 0 < dt_min <= dt_init <= dt_max");
        }
        if !(self.dv_max > 0.0) {
            return bad("dv_max must be positive");
        }
        if self.hold_steps == 0 {
            return bad("hold_steps must be >= 1");
        }
        if !(self.decode_threshold > 0.0 && self.decode_threshold < 1.0) {
            return bad("decode_threshold must lie in (0, 1)");
        }
        if !(self.noise_amp >= 0.0 && self.noise_amp.is_finite()) {
            return bad("noise_amp must be >= 0");
        }
        if self.restarts == 0 {
            return bad("restarts must be >= 1");
        }
        if !(self.newton_tol > 0.0) || self.newton_max_iter == 0 {
            return bad("newton_tol and newton_max_iter must be positive");
        }
        Ok(())
    }
}

/// Step size for the next step: `clip(0.9 · dv_max / max|dv|, dt_min, dt_max)`,
/// or `dt_max` when the voltages are at rest.
pub fn adapt_dt(prev_flow: &FlowEval, _dt: f64, config: &IntegratorConfig) -> f64 {
    let peak = prev_flow.max_abs_dv();
    if peak == 0.0 {
        return config.dt_max;
    }
    (0.9 * config.dv_max / peak).clamp(config.dt_min, config.dt_max)
}

/// Zeroes voltage derivatives that point out of `[-1, 1]` at a rail. The
/// clamped step ignores them anyway; left in, they would throttle `dt`.
fn pin_outward_dv(state: &SolverState, flow: &mut FlowEval) {
    for (v, d) in state.v.iter().zip(&mut flow.dv) {
        if (*v <= -1.0 && *d < 0.0) || (*v >= 1.0 && *d > 0.0) {
            *d = 0.0;
        }
    }
}

fn axpy_clamped(field: &FlowField, base: &SolverState, flow: &FlowEval, dt: f64) -> SolverState {
    let mut next = SolverState {
        v: base
            .v
            .iter()
            .zip(&flow.dv)
            .map(|(x, d)| x + dt * d)
            .collect(),
        xs: base
            .xs
            .iter()
            .zip(&flow.dxs)
            .map(|(x, d)| x + dt * d)
            .collect(),
        xl: base
            .xl
            .iter()
            .zip(&flow.dxl)
            .map(|(x, d)| x + dt * d)
            .collect(),
        t: base.t + dt,
    };
    field.clamp(&mut next);
    next
}

fn euler_in_place(field: &FlowField, state: &mut SolverState, flow: &FlowEval, dt: f64) {
    for (x, d) in state.v.iter_mut().zip(&flow.dv) {
        *x = (*x + dt * d).clamp(-1.0, 1.0);
    }
    for (x, d) in state.xs.iter_mut().zip(&flow.dxs) {
        *x = (*x + dt * d).clamp(0.0, 1.0);
    }
    let cap = field.xl_cap();
    for (x, d) in state.xl.iter_mut().zip(&flow.dxl) {
        *x = (*x + dt * d).clamp(1.0, cap);
    }
    state.t += dt;
}

/// Forward Euler step `x ← clamp(x + dt·F(x))`.
pub fn step_euler(
    field: &FlowField,
    state: &SolverState,
    dt: f64,
) -> Result<SolverState, DynamicsError> {
    field.check_dims(state)?;
    let flow = field.eval(state);
    if !flow.is_finite() {
        return Err(DynamicsError::NonFiniteFlow);
    }
    Ok(axpy_clamped(field, state, &flow, dt))
}

/// Diagnostics of one trapezoid step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TrapezoidInfo {
    pub iterations: u32,
    /// The implicit solve did not converge and an Euler step of `dt/4` was
    /// taken instead.
    pub fell_back: bool,
}

/// Implicit trapezoid step `x' = x + dt/2 (F(x) + F(x'))`, solved by damped
/// fixed-point iteration on the clamped map. Falls back to one Euler step of
/// `dt/4` when the iteration fails to reach `newton_tol` (max-norm).
pub fn step_trapezoid(
    field: &FlowField,
    state: &SolverState,
    dt: f64,
    config: &IntegratorConfig,
) -> Result<(SolverState, TrapezoidInfo), DynamicsError> {
    field.check_dims(state)?;
    let f0 = field.eval(state);
    trapezoid_with_flow(field, state, &f0, dt, config)
}

fn trapezoid_with_flow(
    field: &FlowField,
    state: &SolverState,
    f0: &FlowEval,
    dt: f64,
    config: &IntegratorConfig,
) -> Result<(SolverState, TrapezoidInfo), DynamicsError> {
    if !f0.is_finite() {
        return Err(DynamicsError::NonFiniteFlow);
    }
    let mut y = axpy_clamped(field, state, f0, dt);
    let mut fy = FlowEval::zeros(field.num_nets(), field.num_clauses());
    let mut damping = 1.0;
    let mut last_change = f64::INFINITY;
    let half = 0.5 * dt;
    for iteration in 1..=config.newton_max_iter {
        field.eval_into(&y, &mut fy);
        if !fy.is_finite() {
            return Err(DynamicsError::NonFiniteFlow);
        }
        let mut change: f64 = 0.0;
        let mut update = |x0: &[f64], a: &[f64], b: &[f64], y: &mut [f64], lo: f64, hi: f64| {
            for i in 0..y.len() {
                let target = (x0[i] + half * (a[i] + b[i])).clamp(lo, hi);
                let next = y[i] + damping * (target - y[i]);
                change = change.max((next - y[i]).abs());
                y[i] = next;
            }
        };
        update(&state.v, &f0.dv, &fy.dv, &mut y.v, -1.0, 1.0);
        update(&state.xs, &f0.dxs, &fy.dxs, &mut y.xs, 0.0, 1.0);
        update(&state.xl, &f0.dxl, &fy.dxl, &mut y.xl, 1.0, field.xl_cap());
        if change <= config.newton_tol {
            y.t = state.t + dt;
            return Ok((
                y,
                TrapezoidInfo {
                    iterations: iteration,
                    fell_back: false,
                },
            ));
        }
        if change > last_change {
            damping *= 0.5;
        }
        last_change = change;
    }
    let fallback = axpy_clamped(field, state, f0, dt / 4.0);
    Ok((
        fallback,
        TrapezoidInfo {
            iterations: config.newton_max_iter,
            fell_back: true,
        },
    ))
}

/// Whether `state` decodes to a total assignment satisfying every clause.
pub fn decodes_to_solution(system: &ClauseSystem, state: &SolverState, threshold: f64) -> bool {
    let a = decode(state, threshold);
    a.len() == system.num_nets && system.satisfied_by_assignment(&a)
}

/// True iff the last `hold_steps` states each decode to a satisfying
/// total assignment.
pub fn detect_equilibrium(
    system: &ClauseSystem,
    recent_states: &[SolverState],
    config: &IntegratorConfig,
) -> bool {
    let hold = config.hold_steps as usize;
    recent_states.len() >= hold
        && recent_states[recent_states.len() - hold..]
            .iter()
            .all(|s| decodes_to_solution(system, s, config.decode_threshold))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SwitchEvent {
    pub step: u64,
    pub net: usize,
    /// `+1` for a switch to logical 1, `-1` for a switch to logical 0.
    pub new_sign: i8,
}

/// Hysteretic switch detector: a net switches when it becomes decided
/// with the opposite sign of its last decided value.
#[derive(Debug, Clone)]
pub struct SwitchTracker {
    threshold: f64,
    last: Vec<i8>,
}

impl SwitchTracker {
    pub fn new(v: &[f64], threshold: f64) -> Self {
        let mut t = SwitchTracker {
            threshold,
            last: vec![0; v.len()],
        };
        t.observe(0, v, &mut Vec::new());
        t
    }

    pub fn observe(&mut self, step: u64, v: &[f64], events: &mut Vec<SwitchEvent>) {
        for (net, (&x, last)) in v.iter().zip(&mut self.last).enumerate() {
            let sign = if x >= self.threshold {
                1
            } else if x <= -self.threshold {
                -1
            } else {
                continue;
            };
            if *last != sign {
                if *last != 0 {
                    events.push(SwitchEvent {
                        step,
                        net,
                        new_sign: sign,
                    });
                }
                *last = sign;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub sample_stride: u64,
    pub steps: Vec<u64>,
    pub times: Vec<f64>,
    pub states: Vec<SolverState>,
    pub switch_events: Vec<SwitchEvent>,
}

impl Trajectory {
    pub fn new(sample_stride: u64) -> Self {
        Trajectory {
            sample_stride,
            steps: Vec::new(),
            times: Vec::new(),
            states: Vec::new(),
            switch_events: Vec::new(),
        }
    }

    /// Appends a sample; a repeated step is ignored.
    pub fn push(&mut self, step: u64, state: &SolverState) {
        if self.steps.last() == Some(&step) {
            return;
        }
        self.steps.push(step);
        self.times.push(state.t);
        self.states.push(state.clone());
    }

    /// `step,t,v_0,…,v_{M-1}` per sample. Floats use Rust's shortest
    /// round-trip formatting, so re-reading is exact.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let nets = self.states.first().map_or(0, |s| s.v.len());
        write!(out, "step,t")?;
        for n in 0..nets {
            write!(out, ",v_{n}")?;
        }
        writeln!(out)?;
        for ((step, t), state) in self.steps.iter().zip(&self.times).zip(&self.states) {
            write!(out, "{step},{t:?}")?;
            for v in &state.v {
                write!(out, ",{v:?}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn events_json(&self) -> String {
        serde_json::to_string_pretty(&self.switch_events).expect("events serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Solved,
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsEcho {
    pub dynamics: DynParams,
    pub integrator: IntegratorConfig,
}

impl ParamsEcho {
    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        sha256_hex(
            serde_json::to_string(self)
                .expect("params serialize")
                .as_bytes(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClauseStats {
    pub num_nets: usize,
    pub num_clauses: usize,
    /// Clauses violated by the sign of the final voltages.
    pub violated_at_end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StepperStats {
    pub trapezoid_fallbacks: u64,
    pub fixed_point_iterations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub assignment: Option<Assignment>,
    /// Steps over all attempts.
    pub steps_used: u64,
    /// Model time over all attempts.
    pub model_time: f64,
    /// Attempts made, including the successful one.
    pub restarts_used: u32,
    pub params_echo: ParamsEcho,
    pub config_hash: String,
    pub clause_stats: ClauseStats,
    pub stepper_stats: StepperStats,
}

impl SolveReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn is_solved(&self) -> bool {
        self.status == SolveStatus::Solved
    }
}

struct Attempt {
    solved: Option<Assignment>,
    steps: u64,
    final_state: SolverState,
    trajectory: Trajectory,
}

fn run_attempt(
    system: &ClauseSystem,
    field: &FlowField,
    config: &IntegratorConfig,
    attempt: u32,
    stats: &mut StepperStats,
) -> Result<Attempt, SolveError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed.wrapping_add(u64::from(attempt)));
    let mut state = field.init_state(&mut rng);
    let noise = (config.noise_amp > 0.0).then(|| Normal::new(0.0, 1.0).expect("unit normal"));
    let threshold = config.decode_threshold;
    let clause_cut = 0.5 * (1.0 - threshold);
    let mut flow = FlowEval::zeros(field.num_nets(), field.num_clauses());
    let mut trajectory = Trajectory::new(config.sample_stride);
    let mut tracker = SwitchTracker::new(&state.v, threshold);
    let mut dt = config.dt_init;
    let mut hold = 0u32;
    trajectory.push(0, &state);

    let mut step = 0u64;
    let solved = loop {
        let summary = field.eval_into(&state, &mut flow);
        if !flow.is_finite() {
            return Err(SolveError::NonFiniteFlow { step, attempt });
        }
        let satisfied =
            summary.max_clause_value <= clause_cut && state.v.iter().all(|v| v.abs() >= threshold);
        if satisfied {
            hold += 1;
            if hold >= config.hold_steps {
                let a = decode(&state, threshold);
                if a.len() == system.num_nets && system.satisfied_by_assignment(&a) {
                    break Some(a);
                }
                hold = 0;
            }
        } else {
            hold = 0;
        }
        if step >= config.max_steps {
            break None;
        }

        pin_outward_dv(&state, &mut flow);
        dt = adapt_dt(&flow, dt, config);
        match config.method {
            Method::EulerAdaptive => euler_in_place(field, &mut state, &flow, dt),
            Method::Trapezoid => {
                let (next, info) = trapezoid_with_flow(field, &state, &flow, dt, config)?;
                stats.fixed_point_iterations += u64::from(info.iterations);
                stats.trapezoid_fallbacks += u64::from(info.fell_back);
                state = next;
            }
        }
        if let Some(normal) = &noise {
            let sd = config.noise_amp * dt.sqrt();
            for v in &mut state.v {
                *v = (*v + sd * normal.sample(&mut rng)).clamp(-1.0, 1.0);
            }
        }
        step += 1;
        tracker.observe(step, &state.v, &mut trajectory.switch_events);
        if config.sample_stride > 0 && step.is_multiple_of(config.sample_stride) {
            trajectory.push(step, &state);
        }
    };
    trajectory.push(step, &state);
    Ok(Attempt {
        solved,
        steps: step,
        final_state: state,
        trajectory,
    })
}

/// Integrates from random initial voltages until the voltages hold a
/// satisfying assignment for `hold_steps` consecutive states, restarting
/// with the next seed when an attempt exhausts `max_steps`. Budget
/// exhaustion is reported as such; it is never taken as proof that no
/// solution exists.
pub fn solve(
    system: &ClauseSystem,
    params: &DynParams,
    config: &IntegratorConfig,
) -> Result<(SolveReport, Trajectory), SolveError> {
    config.validate()?;
    if system.num_nets == 0 {
        return Err(SolveError::EmptySystem);
    }
    let field = FlowField::new(system, *params)?.with_parallel(config.parallel);
    let mut stats = StepperStats::default();
    let mut steps_used = 0;
    let mut model_time = 0.0;
    let mut last = None;
    for attempt in 0..config.restarts {
        let run = run_attempt(system, &field, config, attempt, &mut stats)?;
        steps_used += run.steps;
        model_time += run.final_state.t;
        let done = run.solved.is_some();
        last = Some((attempt + 1, run));
        if done {
            break;
        }
    }
    let (restarts_used, run) = last.expect("at least one attempt");

    let signs: Vec<bool> = run.final_state.v.iter().map(|&v| v >= 0.0).collect();
    let violated_at_end = system.violated(&signs).len();
    if let Some(a) = &run.solved {
        let dense = a
            .to_dense(system.num_nets)
            .expect("solved assignment is total");
        if let Some(&m) = system.violated(&dense).first() {
            return Err(SolveError::UnsoundReport(m));
        }
    }
    let params_echo = ParamsEcho {
        dynamics: *params,
        integrator: *config,
    };
    let report = SolveReport {
        status: if run.solved.is_some() {
            SolveStatus::Solved
        } else {
            SolveStatus::BudgetExhausted
        },
        assignment: run.solved,
        steps_used,
        model_time,
        restarts_used,
        config_hash: params_echo.hash(),
        params_echo,
        clause_stats: ClauseStats {
            num_nets: system.num_nets,
            num_clauses: system.num_clauses(),
            violated_at_end,
        },
        stepper_stats: stats,
    };
    Ok((report, run.trajectory))
}
