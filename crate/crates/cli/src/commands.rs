use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context as _};
use memsolve::analyze::{
    avalanche_stats, find_critical, read_trajectory_csv, switch_events, CriticalSearch, PointKind,
};
use memsolve::circuit::Circuit;
use memsolve::config::RunConfig;
use memsolve::encode::{
    compile_factor, compile_subset_sum, parse_dimacs, remainder_check, tseitin, ClauseSystem,
    SubsetSumProblem,
};
use memsolve::harness::{bench_scaling, gen_subset_sum_hard};
use memsolve::integrate::{solve, SolveReport, SolveStatus, Trajectory};
use serde::Serialize;
use serde_json::json;

use crate::output::RunOutput;

pub struct Context {
    pub cfg: RunConfig,
    pub argv: Vec<String>,
}

pub enum SubsetSource {
    File(PathBuf),
    Generate { n: usize, seed: u64 },
}

const SOLVED: u8 = 0;
const EXHAUSTED: u8 = 2;

fn status_code(report: &SolveReport) -> ExitCode {
    ExitCode::from(match report.status {
        SolveStatus::Solved => SOLVED,
        SolveStatus::BudgetExhausted => EXHAUSTED,
    })
}

/// Solves `system` and writes the system, trajectory and switch events.
fn solve_system(
    ctx: &Context,
    out: &mut RunOutput,
    system: &ClauseSystem,
) -> anyhow::Result<(SolveReport, Trajectory)> {
    out.write("system.json", system.to_json().as_bytes())?;
    let (report, trajectory) = solve(system, &ctx.cfg.dynamics, &ctx.cfg.integrator)?;
    let mut csv = Vec::new();
    trajectory.write_csv(&mut csv)?;
    out.write("trajectory.csv", &csv)?;
    out.write("switch_events.json", trajectory.events_json().as_bytes())?;
    Ok((report, trajectory))
}

#[derive(Serialize)]
struct ProblemReport<'a, P: Serialize, R: Serialize> {
    problem: P,
    result: Option<R>,
    solve: &'a SolveReport,
}

pub fn factor(ctx: &Context, n: u64) -> anyhow::Result<ExitCode> {
    let (circuit, instance) = compile_factor(n)?;
    let system = tseitin(&circuit).with_origin(instance.origin());
    let mut out = RunOutput::create(&ctx.cfg.out)?;
    let (report, _) = solve_system(ctx, &mut out, &system)?;
    let mut result = None;
    if let Some(a) = &report.assignment {
        let (p, q) = instance
            .decode(a)
            .context("solved assignment leaves factor bits undecided")?;
        let trace = remainder_check(n, p, q)?;
        if !trace.ok {
            bail!("decoded factors {p} x {q} fail the remainder check");
        }
        println!("p = {p}");
        println!("q = {q}");
        result = Some(json!({ "p": p, "q": q, "remainder": trace.r, "remainder_ok": trace.ok }));
    } else {
        println!("budget exhausted after {} steps", report.steps_used);
    }
    let doc = ProblemReport {
        problem: json!({ "kind": "factor", "n": n, "bit_index": instance.bit_index }),
        result,
        solve: &report,
    };
    out.write_json("report.json", &doc)?;
    out.finish(&ctx.argv, &ctx.cfg)?;
    Ok(status_code(&report))
}

pub fn subset_sum(ctx: &Context, source: SubsetSource) -> anyhow::Result<ExitCode> {
    let problem = match source {
        SubsetSource::File(path) => {
            let text = read(&path)?;
            serde_json::from_str::<SubsetSumProblem>(&text)
                .with_context(|| format!("malformed instance {}", path.display()))?
        }
        SubsetSource::Generate { n, seed } => gen_subset_sum_hard(n, seed)?,
    };
    problem.validate()?;
    problem.check_target_reachable()?;
    let (circuit, instance) = compile_subset_sum(&problem)?;
    let system = tseitin(&circuit).with_origin(instance.origin());
    let mut out = RunOutput::create(&ctx.cfg.out)?;
    out.write_json("instance.json", &problem)?;
    let (report, _) = solve_system(ctx, &mut out, &system)?;
    let mut result = None;
    if let Some(a) = &report.assignment {
        let mask = instance
            .decode(a)
            .context("solved assignment leaves selectors undecided")?;
        let selected = instance.selected(mask);
        if problem.subset_sum(mask) != problem.s {
            bail!("decoded subset does not sum to {}", problem.s);
        }
        let shown: Vec<String> = selected.iter().map(u64::to_string).collect();
        println!("selected: {}", shown.join(" "));
        let indices: Vec<usize> = (0..problem.g.len())
            .filter(|i| mask >> i & 1 == 1)
            .collect();
        result = Some(json!({ "indices": indices, "selected": selected, "sum": problem.s }));
    } else {
        println!("budget exhausted after {} steps", report.steps_used);
    }
    let doc = ProblemReport {
        problem: json!({ "kind": "subset_sum", "instance": &problem }),
        result,
        solve: &report,
    };
    out.write_json("report.json", &doc)?;
    out.finish(&ctx.argv, &ctx.cfg)?;
    Ok(status_code(&report))
}

pub fn sat(ctx: &Context, path: &Path) -> anyhow::Result<ExitCode> {
    let text = read(path)?;
    let parsed = parse_dimacs(&text).with_context(|| format!("in {}", path.display()))?;
    for w in &parsed.warnings {
        eprintln!("warning: {w:?}");
    }
    let system = parsed.system;
    let mut out = RunOutput::create(&ctx.cfg.out)?;
    let (report, _) = solve_system(ctx, &mut out, &system)?;
    let mut result = None;
    if let Some(a) = &report.assignment {
        let dense = a.to_dense(system.num_nets).context("partial assignment")?;
        let lits: Vec<i64> = dense
            .iter()
            .enumerate()
            .map(|(i, &b)| if b { i as i64 + 1 } else { -(i as i64 + 1) })
            .collect();
        println!("s SATISFIABLE");
        for chunk in lits.chunks(10) {
            let line: Vec<String> = chunk.iter().map(i64::to_string).collect();
            println!("v {}", line.join(" "));
        }
        println!("v 0");
        result = Some(json!({ "literals": lits }));
    } else {
        println!("s UNKNOWN");
    }
    let doc = ProblemReport {
        problem: json!({
            "kind": "sat",
            "num_vars": system.num_nets,
            "num_clauses": system.num_clauses(),
            "tautologies_dropped": parsed.tautologies_dropped,
            "duplicates_merged": parsed.duplicates_merged,
        }),
        result,
        solve: &report,
    };
    out.write_json("report.json", &doc)?;
    out.finish(&ctx.argv, &ctx.cfg)?;
    Ok(status_code(&report))
}

fn parse_range(text: &str) -> anyhow::Result<Vec<usize>> {
    let (lo, hi) = match text.split_once(':') {
        Some((lo, hi)) => (lo.trim().parse::<usize>()?, hi.trim().parse::<usize>()?),
        None => {
            let n = text.trim().parse::<usize>()?;
            (n, n)
        }
    };
    if lo > hi || lo < 3 || hi > 24 {
        bail!("size range {text} must lie within 3:24 with LO <= HI");
    }
    Ok((lo..=hi).collect())
}

pub fn bench(ctx: &Context, sizes: &str, per_n: usize) -> anyhow::Result<ExitCode> {
    let sizes = parse_range(sizes).with_context(|| format!("bad --n value `{sizes}`"))?;
    if per_n == 0 {
        bail!("--per-n must be at least 1");
    }
    let mut out = RunOutput::create(&ctx.cfg.out)?;
    let mut csv = Vec::new();
    let result = bench_scaling(
        &sizes,
        per_n,
        ctx.cfg.seed(),
        &ctx.cfg.dynamics,
        &ctx.cfg.integrator,
        &mut csv,
    )?;
    out.write("bench.csv", &csv)?;
    out.write_json("fits.json", &result.fits)?;
    let solved = result.rows.iter().filter(|r| r.solved()).count();
    println!("solved {solved}/{} rows", result.rows.len());
    for fit in &result.fits {
        let params: Vec<String> = fit
            .params
            .iter()
            .map(|(k, v)| format!("{k}={v:.4}"))
            .collect();
        println!("{}: {} r2={:.4}", fit.model, params.join(" "), fit.r2);
    }
    out.finish(&ctx.argv, &ctx.cfg)?;
    if !result.verification_failures.is_empty() {
        bail!(
            "rows {:?} failed oracle verification",
            result.verification_failures
        );
    }
    Ok(ExitCode::from(if solved == 0 { EXHAUSTED } else { SOLVED }))
}

/// Reads a clause system from its JSON form, a circuit JSON or DIMACS.
fn load_system(path: &Path) -> anyhow::Result<ClauseSystem> {
    let text = read(path)?;
    if let Ok(system) = ClauseSystem::from_json(&text) {
        return Ok(system);
    }
    if let Ok(circuit) = Circuit::from_json(&text) {
        return Ok(tseitin(&circuit));
    }
    if text.trim_start().starts_with('{') {
        ClauseSystem::from_json(&text).with_context(|| format!("in {}", path.display()))
    } else {
        Ok(parse_dimacs(&text)
            .with_context(|| format!("in {}", path.display()))?
            .system)
    }
}

pub fn critical(
    ctx: &Context,
    path: &Path,
    seeds: usize,
    max_iter: usize,
) -> anyhow::Result<ExitCode> {
    if seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    let system = load_system(path)?;
    let search = CriticalSearch {
        seeds,
        rng_seed: ctx.cfg.seed(),
        newton_tol: ctx.cfg.integrator.newton_tol,
        max_iter,
        ..CriticalSearch::default()
    };
    let atlas = find_critical(&system, &ctx.cfg.dynamics, &search)?;
    let mut out = RunOutput::create(&ctx.cfg.out)?;
    let mut text = atlas.points_json();
    text.push('\n');
    out.write("atlas.json", text.as_bytes())?;
    let mut kinds: BTreeMap<PointKind, usize> = BTreeMap::new();
    for p in &atlas.points {
        *kinds.entry(p.kind).or_default() += 1;
    }
    let summary = json!({
        "search": search,
        "seeds": atlas.seeds,
        "converged": atlas.converged,
        "not_converged": atlas.not_converged,
        "duplicates": atlas.duplicates,
        "points": atlas.points.len(),
        "kinds": kinds,
    });
    out.write_json("atlas_summary.json", &summary)?;
    println!(
        "{} distinct critical points ({} of {} seeds converged)",
        atlas.points.len(),
        atlas.converged,
        atlas.seeds
    );
    for (kind, count) in &kinds {
        println!("  {kind:?}: {count}");
    }
    out.finish(&ctx.argv, &ctx.cfg)?;
    Ok(ExitCode::SUCCESS)
}

pub fn avalanche(
    ctx: &Context,
    path: &Path,
    window: u64,
    threshold: Option<f64>,
) -> anyhow::Result<ExitCode> {
    if window == 0 {
        bail!("--window must be at least 1");
    }
    let threshold = threshold.unwrap_or(ctx.cfg.integrator.decode_threshold);
    if !(threshold > 0.0 && threshold < 1.0) {
        bail!("--threshold must lie in (0, 1)");
    }
    let trajectory = read_trajectory_csv(&read(path)?)?;
    let events = switch_events(&trajectory, threshold);
    let stats = avalanche_stats(&events, window);
    let mut out = RunOutput::create(&ctx.cfg.out)?;
    out.write_json("events.json", &events)?;
    out.write("avalanche.csv", stats.to_csv().as_bytes())?;
    out.write_json("avalanche.json", &stats)?;
    println!(
        "{} events in {} clusters (max {}, mean {:.3})",
        events.len(),
        stats.clusters,
        stats.max_size,
        stats.mean_size
    );
    out.finish(&ctx.argv, &ctx.cfg)?;
    Ok(ExitCode::SUCCESS)
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}
