use memsolve::analyze::{
    avalanche_stats, find_critical, load_atlas, read_trajectory_csv, switch_events, CriticalSearch,
    PointKind,
};
use memsolve::dynamics::{decode_voltages, DynParams};
use memsolve::encode::{Clause, ClauseSystem, Literal};
use memsolve::harness::gen_planted_3sat;
use memsolve::integrate::{solve, IntegratorConfig, SolveReport, Trajectory};

fn search(seeds: usize) -> CriticalSearch {
    CriticalSearch {
        seeds,
        rng_seed: 3,
        ..CriticalSearch::default()
    }
}

#[test]
fn stable_points_of_one_clause_satisfy_it() {
    let clause = Clause::new(vec![Literal::pos(0), Literal::neg(1), Literal::pos(2)]);
    let system = ClauseSystem::new(3, vec![clause.clone()]);
    let atlas = find_critical(&system, &DynParams::default(), &search(128)).unwrap();
    let stable: Vec<_> = atlas
        .points
        .iter()
        .filter(|p| p.kind == PointKind::Stable)
        .collect();
    assert!(!stable.is_empty());
    for p in stable {
        let decided = decode_voltages(p.voltages(3), 0.5);
        let satisfied = clause
            .literals()
            .iter()
            .any(|l| decided.get(l.net).is_some_and(|b| l.holds(b)));
        assert!(satisfied, "{:?}", p.voltages(3));
    }
}

#[test]
fn contradictory_units_have_no_solution_equilibria() {
    let system = ClauseSystem::new(
        1,
        vec![
            Clause::new(vec![Literal::pos(0)]),
            Clause::new(vec![Literal::neg(0)]),
        ],
    );
    let atlas = find_critical(&system, &DynParams::default(), &search(128)).unwrap();
    for p in atlas.points.iter().filter(|p| p.kind == PointKind::Stable) {
        let decided = decode_voltages(p.voltages(1), 0.5);
        if let Some(values) = decided.to_dense(1) {
            assert!(!system.satisfied_by(&values));
        }
    }
}

#[test]
fn atlas_counts_add_up_and_reload() {
    let system = ClauseSystem::new(2, vec![Clause::new(vec![Literal::pos(0), Literal::pos(1)])]);
    let s = search(64);
    let atlas = find_critical(&system, &DynParams::default(), &s).unwrap();
    assert_eq!(atlas.converged + atlas.not_converged, 64);
    assert_eq!(atlas.points.len() + atlas.duplicates, atlas.converged);
    for (i, a) in atlas.points.iter().enumerate() {
        for b in &atlas.points[i + 1..] {
            let gap =
                a.x.iter()
                    .zip(&b.x)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
            assert!(gap >= s.dedup_tol);
        }
    }
    let reloaded = load_atlas(
        &atlas.points_json(),
        &system,
        &DynParams::default(),
        s.newton_tol,
    )
    .unwrap();
    assert_eq!(reloaded, atlas.points);
}

#[test]
fn atlas_is_reproducible() {
    let system = ClauseSystem::new(2, vec![Clause::new(vec![Literal::pos(0), Literal::neg(1)])]);
    let a = find_critical(&system, &DynParams::default(), &search(32)).unwrap();
    let b = find_critical(&system, &DynParams::default(), &search(32)).unwrap();
    assert_eq!(a.points_json(), b.points_json());
}

fn planted_run(vars: usize, seed: u64) -> (ClauseSystem, SolveReport, Trajectory) {
    let (system, _) = gen_planted_3sat(vars, 4.2, seed);
    let cfg = IntegratorConfig {
        sample_stride: 1,
        rng_seed: seed,
        ..IntegratorConfig::default()
    };
    let (report, trajectory) = solve(&system, &DynParams::default(), &cfg).unwrap();
    (system, report, trajectory)
}

#[test]
fn switch_count_bounds_hamming_distance() {
    let mut checked = 0;
    for seed in 0..5 {
        let (system, report, trajectory) = planted_run(30, seed);
        let Some(end) = report.assignment else {
            continue;
        };
        checked += 1;
        let start = decode_voltages(&trajectory.states[0].v, 0.5);
        let flipped = (0..system.num_nets)
            .filter(|&n| start.get(n).is_some_and(|b| Some(b) != end.get(n)))
            .count();
        let events = switch_events(&trajectory, 0.5);
        assert!(
            events.len() >= flipped,
            "seed {seed}: {} < {flipped}",
            events.len()
        );
        for net in 0..system.num_nets {
            let signs: Vec<i8> = events
                .iter()
                .filter(|e| e.net == net)
                .map(|e| e.new_sign)
                .collect();
            assert!(signs.windows(2).all(|w| w[0] != w[1]));
        }
    }
    assert!(checked >= 3);
}

#[test]
fn events_survive_a_csv_round_trip() {
    let (_, _, trajectory) = planted_run(20, 1);
    let mut csv = Vec::new();
    trajectory.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let direct = serde_json::to_string(&switch_events(&trajectory, 0.5)).unwrap();
    let first =
        serde_json::to_string(&switch_events(&read_trajectory_csv(&text).unwrap(), 0.5)).unwrap();
    let second =
        serde_json::to_string(&switch_events(&read_trajectory_csv(&text).unwrap(), 0.5)).unwrap();
    assert_eq!(first, direct);
    assert_eq!(first, second);
}

#[test]
fn hard_planted_run_has_an_avalanche() {
    // Recorded fixture: 60 variables near the threshold ratio, seed 7.
    let (_, _, trajectory) = planted_run(60, 7);
    let events = switch_events(&trajectory, 0.5);
    let stats = avalanche_stats(&events, 10);
    assert!(stats.max_size >= 2, "{:?}", stats.histogram);
}
