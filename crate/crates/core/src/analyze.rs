//! Phase-space diagnostics: critical points of the projected flow, their
//! linear stability, voltage switch events and avalanche statistics.
//!
//! The raw flow has no interior zeros whenever `γ ≠ δ` (the memories can
//! only rest on their bounds), so critical points are zeros of the flow
//! projected onto the box: every coordinate is either interior with zero
//! derivative or on a bound with its derivative pointing outward.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{DynParams, DynamicsError, FlowField, SolverState};
use crate::encode::ClauseSystem;
use crate::integrate::{SwitchEvent, SwitchTracker, Trajectory};

#[derive(Debug, Error, PartialEq)]
pub enum AnalyzeError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("residual {residual:e} exceeds tolerance {tol:e}")]
    ResidualTooLarge { residual: f64, tol: f64 },
    #[error("location has {got} coordinates, system has {want}")]
    BadLocation { got: usize, want: usize },
    #[error("trajectory CSV line {line}: {reason}")]
    BadTrajectory { line: usize, reason: String },
    #[error("atlas JSON: {0}")]
    BadAtlas(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointKind {
    Stable,
    Saddle,
    Repeller,
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    /// Flat `(v, xs, xl)` location.
    pub x: Vec<f64>,
    /// Max-norm of the projected flow at `x`.
    pub residual: f64,
    /// Real parts of the Jacobian spectrum, ascending.
    pub eig_re: Vec<f64>,
    pub index: usize,
    pub n_center: usize,
    pub kind: PointKind,
}

impl CriticalPoint {
    pub fn n_stable(&self) -> usize {
        self.eig_re.len() - self.index - self.n_center
    }

    pub fn voltages(&self, num_nets: usize) -> &[f64] {
        &self.x[..num_nets]
    }
}

/// Kind from spectrum counts: `pos`/`neg` eigenvalues beyond tolerance and
/// `center` within it.
pub fn kind_of(pos: usize, neg: usize, center: usize) -> PointKind {
    match (pos, neg, center) {
        (0, n, _) if n > 0 => PointKind::Stable,
        (p, n, _) if p > 0 && n > 0 => PointKind::Saddle,
        (p, 0, 0) if p > 0 => PointKind::Repeller,
        _ => PointKind::Degenerate,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalSearch {
    pub seeds: usize,
    pub rng_seed: u64,
    pub newton_tol: f64,
    pub max_iter: usize,
    pub dedup_tol: f64,
    /// Center tolerance relative to the largest `|eig_re|`.
    pub lambda_tol: f64,
    /// Finite-difference step for Jacobians.
    pub fd_step: f64,
}

impl Default for CriticalSearch {
    fn default() -> Self {
        CriticalSearch {
            seeds: 64,
            rng_seed: 0,
            newton_tol: 1e-9,
            max_iter: 50,
            dedup_tol: 1e-4,
            lambda_tol: 1e-6,
            fd_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalAtlas {
    pub points: Vec<CriticalPoint>,
    pub seeds: usize,
    pub converged: usize,
    pub not_converged: usize,
    pub duplicates: usize,
}

impl CriticalAtlas {
    /// The atlas as a JSON array of points.
    pub fn points_json(&self) -> String {
        serde_json::to_string_pretty(&self.points).expect("points serialize")
    }
}

fn state_from(field: &FlowField, x: &[f64]) -> SolverState {
    let (m, k) = (field.num_nets(), field.num_clauses());
    SolverState {
        v: x[..m].to_vec(),
        xs: x[m..m + k].to_vec(),
        xl: x[m + k..].to_vec(),
        t: 0.0,
    }
}

/// Max-norm of the projected flow at `x`.
pub fn residual(field: &FlowField, x: &[f64]) -> f64 {
    let state = state_from(field, x);
    let flow = field.eval(&state);
    field.projected(&state, &flow).max_norm()
}

/// Classifies a critical point from the spectrum of the finite-difference
/// Jacobian of the raw flow.
pub fn classify(
    field: &FlowField,
    x: &[f64],
    newton_tol: f64,
    lambda_tol: f64,
    fd_step: f64,
) -> Result<CriticalPoint, AnalyzeError> {
    if x.len() != field.dim() {
        return Err(AnalyzeError::BadLocation {
            got: x.len(),
            want: field.dim(),
        });
    }
    let res = residual(field, x);
    if !(res <= newton_tol) {
        return Err(AnalyzeError::ResidualTooLarge {
            residual: res,
            tol: newton_tol,
        });
    }
    let jac = field.jacobian_fd(&state_from(field, x), fd_step).matrix;
    let mut eig_re: Vec<f64> = jac.complex_eigenvalues().iter().map(|z| z.re).collect();
    eig_re.sort_by(f64::total_cmp);
    Ok(point_from_spectrum(x.to_vec(), res, eig_re, lambda_tol))
}

fn point_from_spectrum(
    x: Vec<f64>,
    residual: f64,
    eig_re: Vec<f64>,
    lambda_tol: f64,
) -> CriticalPoint {
    let scale = eig_re.iter().fold(0.0f64, |a, e| a.max(e.abs()));
    let tol = lambda_tol * scale;
    let pos = eig_re.iter().filter(|&&e| e > tol).count();
    let neg = eig_re.iter().filter(|&&e| e < -tol).count();
    let center = eig_re.len() - pos - neg;
    CriticalPoint {
        x,
        residual,
        eig_re,
        index: pos,
        n_center: center,
        kind: kind_of(pos, neg, center),
    }
}

/// Newton solver for the projected-flow zeros of one field. Works on
/// `P(x) = clamp(x + τ F(x)) - x` with `τ_i` the width of coordinate `i`,
/// whose zeros are exactly the projected-flow zeros.
struct Newton<'a> {
    field: &'a FlowField,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl<'a> Newton<'a> {
    fn new(field: &'a FlowField) -> Self {
        let (lo, hi) = (0..field.dim()).map(|i| field.bounds(i)).unzip();
        Newton { field, lo, hi }
    }

    fn clamp(&self, x: &mut [f64]) {
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = xi.clamp(self.lo[i], self.hi[i]);
        }
    }

    fn map(&self, x: &[f64]) -> (DVector<f64>, f64) {
        let state = state_from(self.field, x);
        let flow = self.field.eval(&state);
        let res = self.field.projected(&state, &flow).max_norm();
        let f = flow.to_vec();
        let p = DVector::from_iterator(
            x.len(),
            (0..x.len()).map(|i| {
                let tau = self.hi[i] - self.lo[i];
                (x[i] + tau * f[i]).clamp(self.lo[i], self.hi[i]) - x[i]
            }),
        );
        (p, res)
    }

    fn jacobian(&self, x: &[f64], p0: &DVector<f64>, h: f64) -> DMatrix<f64> {
        let n = x.len();
        let mut jac = DMatrix::zeros(n, n);
        let mut probe = x.to_vec();
        for j in 0..n {
            let step = h * x[j].abs().max(1.0);
            // Difference into the box.
            let signed = if x[j] + step <= self.hi[j] {
                step
            } else {
                -step
            };
            probe[j] = x[j] + signed;
            let (pj, _) = self.map(&probe);
            probe[j] = x[j];
            jac.set_column(j, &((pj - p0) / signed));
        }
        jac
    }

    /// Short clamped-Euler relaxation along the flow, used when the Newton
    /// line search stalls on a kink of the field.
    fn relax(&self, x: &mut [f64], steps: usize) {
        for _ in 0..steps {
            let flow = self.field.eval(&state_from(self.field, x)).to_vec();
            let peak = flow.iter().fold(0.0f64, |a, d| a.max(d.abs()));
            if peak == 0.0 {
                return;
            }
            let dt = (0.05 / peak).min(1.0);
            for (xi, d) in x.iter_mut().zip(&flow) {
                *xi += dt * d;
            }
            self.clamp(x);
        }
    }

    /// Damped Newton with flow relaxation as the globalization fallback.
    /// Returns the converged location and its residual.
    fn solve(&self, mut x: Vec<f64>, tol: f64, max_iter: usize, h: f64) -> Option<(Vec<f64>, f64)> {
        const RELAX_STEPS: usize = 200;
        let (mut p, mut res) = self.map(&x);
        for _ in 0..max_iter {
            if res <= tol {
                return Some((x, res));
            }
            let jac = self.jacobian(&x, &p, h);
            let rhs = -&p;
            let dir = match jac.clone().lu().solve(&rhs) {
                Some(d) if d.iter().all(|v| v.is_finite()) => Some(d),
                _ => jac.pseudo_inverse(1e-12).ok().map(|pinv| pinv * rhs),
            };
            let norm0 = p.norm();
            let mut accepted = false;
            if let Some(dir) = dir {
                let mut lambda = 1.0;
                for _ in 0..30 {
                    let mut trial: Vec<f64> = x
                        .iter()
                        .zip(dir.iter())
                        .map(|(a, d)| a + lambda * d)
                        .collect();
                    self.clamp(&mut trial);
                    let (pt, rt) = self.map(&trial);
                    if pt.norm() < norm0 || rt <= tol {
                        x = trial;
                        (p, res) = (pt, rt);
                        accepted = true;
                        break;
                    }
                    lambda *= 0.5;
                }
            }
            if !accepted {
                self.relax(&mut x, RELAX_STEPS);
                (p, res) = self.map(&x);
            }
        }
        (res <= tol).then_some((x, res))
    }
}

/// Random interior seed: uniform voltages and short memories, log-uniform
/// long memories.
fn random_seed<R: Rng>(field: &FlowField, rng: &mut R) -> Vec<f64> {
    let (m, k) = (field.num_nets(), field.num_clauses());
    let cap_ln = field.xl_cap().ln();
    let mut x = Vec::with_capacity(field.dim());
    x.extend((0..m).map(|_| rng.random_range(-1.0..1.0)));
    x.extend((0..k).map(|_| rng.random_range(0.0..1.0)));
    x.extend((0..k).map(|_| rng.random_range(0.0..cap_ln).exp()));
    x
}

/// Locates and classifies critical points from `search.seeds` random
/// starting points. Seeds run in parallel; results are merged in seed order
/// and deduplicated by max-norm distance.
pub fn find_critical(
    system: &ClauseSystem,
    params: &DynParams,
    search: &CriticalSearch,
) -> Result<CriticalAtlas, AnalyzeError> {
    let field = FlowField::new(system, *params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(search.rng_seed);
    let seeds: Vec<Vec<f64>> = (0..search.seeds)
        .map(|_| random_seed(&field, &mut rng))
        .collect();
    let newton = Newton::new(&field);
    let found: Vec<Option<CriticalPoint>> = seeds
        .into_par_iter()
        .map(|x0| {
            let (x, _) = newton.solve(x0, search.newton_tol, search.max_iter, search.fd_step)?;
            classify(
                &field,
                &x,
                search.newton_tol,
                search.lambda_tol,
                search.fd_step,
            )
            .ok()
        })
        .collect();

    let mut atlas = CriticalAtlas {
        points: Vec::new(),
        seeds: search.seeds,
        converged: 0,
        not_converged: 0,
        duplicates: 0,
    };
    for point in found {
        let Some(point) = point else {
            atlas.not_converged += 1;
            continue;
        };
        atlas.converged += 1;
        let dup = atlas.points.iter().any(|q| {
            q.x.iter()
                .zip(&point.x)
                .all(|(a, b)| (a - b).abs() < search.dedup_tol)
        });
        if dup {
            atlas.duplicates += 1;
        } else {
            atlas.points.push(point);
        }
    }
    Ok(atlas)
}

/// Parses an atlas JSON array and re-checks every residual.
pub fn load_atlas(
    json: &str,
    system: &ClauseSystem,
    params: &DynParams,
    newton_tol: f64,
) -> Result<Vec<CriticalPoint>, AnalyzeError> {
    let points: Vec<CriticalPoint> =
        serde_json::from_str(json).map_err(|e| AnalyzeError::BadAtlas(e.to_string()))?;
    let field = FlowField::new(system, *params)?;
    for p in &points {
        if p.x.len() != field.dim() {
            return Err(AnalyzeError::BadLocation {
                got: p.x.len(),
                want: field.dim(),
            });
        }
        let res = residual(&field, &p.x);
        if !(res <= newton_tol) {
            return Err(AnalyzeError::ResidualTooLarge {
                residual: res,
                tol: newton_tol,
            });
        }
    }
    Ok(points)
}

/// Switch events over the samples of a trajectory. A net switches when it
/// goes from decided one way (`|v| ≥ threshold`) to decided the other way.
pub fn switch_events(trajectory: &Trajectory, threshold: f64) -> Vec<SwitchEvent> {
    let mut events = Vec::new();
    let Some(first) = trajectory.states.first() else {
        return events;
    };
    let mut tracker = SwitchTracker::new(&first.v, threshold);
    for (state, &step) in trajectory.states.iter().zip(&trajectory.steps).skip(1) {
        tracker.observe(step, &state.v, &mut events);
    }
    events
}

/// Reads a trajectory CSV (`step,t,v_0,…`) back into voltage-only samples.
pub fn read_trajectory_csv(text: &str) -> Result<Trajectory, AnalyzeError> {
    let bad = |line: usize, reason: &str| AnalyzeError::BadTrajectory {
        line,
        reason: reason.to_string(),
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| bad(1, "empty file"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 2 || cols[0] != "step" || cols[1] != "t" {
        return Err(bad(1, "header must start with `step,t`"));
    }
    let nets = cols.len() - 2;
    let mut traj = Trajectory::new(0);
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != nets + 2 {
            return Err(bad(idx + 1, "wrong number of fields"));
        }
        let step: u64 = fields[0].parse().map_err(|_| bad(idx + 1, "bad step"))?;
        let t: f64 = fields[1].parse().map_err(|_| bad(idx + 1, "bad time"))?;
        let v = fields[2..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| bad(idx + 1, "bad voltage"))?;
        traj.steps.push(step);
        traj.times.push(t);
        traj.states.push(SolverState {
            v,
            xs: Vec::new(),
            xl: Vec::new(),
            t,
        });
    }
    if traj.states.is_empty() {
        return Err(bad(2, "no samples"));
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvalancheStats {
    /// Cluster size to number of clusters.
    pub histogram: BTreeMap<usize, usize>,
    pub clusters: usize,
    pub max_size: usize,
    pub mean_size: f64,
}

impl AvalancheStats {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("size,count\n");
        for (size, count) in &self.histogram {
            out.push_str(&format!("{size},{count}\n"));
        }
        out
    }
}

/// Greedy clustering of events (in step order): an event joins the current
/// cluster when it is at most `window_steps` after the previous event.
pub fn avalanche_stats(events: &[SwitchEvent], window_steps: u64) -> AvalancheStats {
    assert!(window_steps >= 1, "window_steps must be >= 1");
    let mut sizes = Vec::new();
    let mut prev: Option<u64> = None;
    for e in events {
        match prev {
            Some(p) if e.step - p <= window_steps => *sizes.last_mut().expect("open cluster") += 1,
            _ => sizes.push(1usize),
        }
        prev = Some(e.step);
    }
    let mut histogram = BTreeMap::new();
    for &s in &sizes {
        *histogram.entry(s).or_insert(0) += 1;
    }
    AvalancheStats {
        clusters: sizes.len(),
        max_size: sizes.iter().copied().max().unwrap_or(0),
        mean_size: if sizes.is_empty() {
            0.0
        } else {
            sizes.iter().sum::<usize>() as f64 / sizes.len() as f64
        },
        histogram,
    }
}
