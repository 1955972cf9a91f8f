//! Property tests for the invariants each module promises.

mod common;

use common::{bfs_connected, draw, links_from_powers, random_mission};
use fanet_core::kinematics::{build_distance_matrix, positions_over_slots, validate_all};
use fanet_core::planner::tensor::{masked_softmax, Mat};
use fanet_core::planner::{
    decode_rollout, exhaustive_oracle, heuristic_plan, random_instance, train, DecodeMode, Instance, InstanceConfig, ModelConfig, ModelParams,
    TrainConfig,
};
use fanet_core::power::{build_problems, oracle_grid, solve_all, solve_uav, EnergyBudget, UavPowerProblem};
use fanet_core::radio::{link_throughput, link_up, path_loss, reach_power};
use fanet_core::scenario::{generate_waypoints, load_scenario, TerrainGrid};
use fanet_core::simulator::{connectivity_rate_frozen, mtp_series, run_pipeline, square_area, throughput_series, PlannerChoice, SimOptions, SquareAreaConfig, TopoChoice};
use fanet_core::topology::{connectivity_exponent, optimize_series, power_test};
use fanet_core::units::{dbm_to_w, w_to_dbm};
use fanet_core::{Point3, PowerSchedule, RadioParams, ReachabilityMatrix};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn point() -> impl Strategy<Value = Point3> {
    (-1e3..1e3f64, -1e3..1e3f64, 0.0..300.0f64).prop_map(|(x, y, z)| Point3::new(x, y, z))
}

// ---- scenario ----

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn scenario_save_load_round_trip(seed in any::<u64>(), uavs in 2usize..9, slots in 1usize..80) {
        let cfg = SquareAreaConfig { n_slots: slots, ..SquareAreaConfig::table_one().with_uavs(uavs) };
        let scenario = square_area(&cfg, seed);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scenario.json");
        scenario.save(&path).unwrap();
        prop_assert_eq!(load_scenario(&path).unwrap(), scenario);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn flat_waypoint_grid_counts_and_uniqueness(ex in 50.0..400.0f64, ey in 50.0..400.0f64, cam in 15.0..60.0f64, oh in 0.1..0.8f64, ov in 0.1..0.8f64) {
        let terrain = TerrainGrid::from_fn(ex, ey, 10.0, |_, _| 0.0).camera(cam, cam * 0.75, oh, ov, 30.0);
        let wps = generate_waypoints(&terrain).unwrap();
        let distinct = |coord: fn(&Point3) -> f64| {
            let mut v: Vec<f64> = wps.iter().map(coord).collect();
            v.sort_by(f64::total_cmp);
            v.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
            v.len() as f64
        };
        let expect_x = (ex / ((1.0 - oh) * cam) + 1.0).ceil();
        let expect_y = (ey / ((1.0 - ov) * cam * 0.75) + 1.0).ceil();
        prop_assert!((distinct(|p| p.x) - expect_x).abs() <= 1.0);
        prop_assert!((distinct(|p| p.y) - expect_y).abs() <= 1.0);
        for (i, p) in wps.iter().enumerate() {
            prop_assert!(wps[..i].iter().all(|q| q.dist(p) > 1e-9));
        }
    }
}

// ---- kinematics ----

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn route_length_visits_and_sampling(seed in any::<u64>(), a in 1usize..7, slots in 2usize..40) {
        let (scenario, traj, pos) = random_mission(seed, a, slots);
        let dist = build_distance_matrix(&scenario.nodes());
        let by_segments: f64 = traj
            .routes
            .iter()
            .flat_map(|r| r.windows(2).map(|w| scenario.node(w[0]).dist(&scenario.node(w[1]))))
            .sum();
        let by_visits = traj.visit_matrix(scenario.num_nodes()).weighted_length(&dist);
        prop_assert!((by_segments - by_visits).abs() <= 1e-9 * by_segments.max(1.0));
        prop_assert!((traj.total_length(&dist) - by_segments).abs() <= 1e-9 * by_segments.max(1.0));

        let visits = traj.visit_matrix(scenario.num_nodes());
        for j in scenario.start_points.len()..scenario.num_nodes() {
            prop_assert_eq!(visits.entries(j), 1);
        }

        prop_assert_eq!(&positions_over_slots(&traj, &scenario).unwrap(), &pos);
        let dt = pos.slot_duration;
        for (u, track) in pos.tracks.iter().enumerate() {
            let v = scenario.uavs[u].speed_mps;
            for n in 0..slots {
                let (p0, p1) = (pos.positions[u][n], pos.positions[u][n + 1]);
                let d = p0.dist(&p1);
                prop_assert!(d <= v * dt * (1.0 + 1e-9) + 1e-9);
                let mid = track.position_at((n as f64 + 0.5) * dt);
                // a straight full-speed slot stays on one segment
                if (d - v * dt).abs() <= 1e-9 * v * dt {
                    prop_assert!(mid.dist(&p0.lerp(&p1, 0.5)) <= 1e-6);
                }
            }
        }
    }
}

// ---- radio ----

proptest! {
    #[test]
    fn channel_is_reciprocal(a in point(), b in point()) {
        prop_assume!(a.dist(&b) > 1e-6);
        let radio = RadioParams::default_fanet();
        prop_assert_eq!(path_loss(a.dist(&b), &radio).unwrap(), path_loss(b.dist(&a), &radio).unwrap());
    }

    #[test]
    fn link_monotone_and_rate_concave(d in 1.0..5e3f64, p in 1e-6..5.0f64, step in 1e-4..0.5f64) {
        let radio = RadioParams::default_fanet();
        let h = path_loss(d, &radio).unwrap().h;
        if link_up(p, h, radio.sensitivity_w) {
            prop_assert!(link_up(p + step, h, radio.sensitivity_w));
        }
        prop_assert!(link_up(reach_power(d, &radio), h, radio.sensitivity_w));
        let r = |x: f64| link_throughput(x, h, &radio);
        prop_assert!(r(p + step) > r(p));
        prop_assert!(r(p + 2.0 * step) - r(p + step) <= r(p + step) - r(p));
    }

    #[test]
    fn dbm_round_trip(dbm in -130.0..40.0f64) {
        let back = w_to_dbm(dbm_to_w(dbm));
        prop_assert!((back - dbm).abs() <= 1e-12 * dbm.abs().max(1.0));
    }
}

// ---- topology ----

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ctop_outputs_hold_every_invariant(seed in any::<u64>(), a in 3usize..11, slots in 1usize..30) {
        let (scenario, _, pos) = random_mission(seed, a, slots);
        let topo = optimize_series(&pos, &scenario).unwrap();
        prop_assert_eq!(&optimize_series(&pos, &scenario).unwrap(), &topo);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (n, m) in topo.matrices.iter().enumerate() {
            prop_assert!(m.is_symmetric() && m.has_unit_diagonal());
            prop_assert!(m.min_degree() >= scenario.k_min);
            let connected = bfs_connected(m);
            prop_assert!(connected);
            prop_assert_eq!(power_test(m, connectivity_exponent(a, scenario.k_min)), connected);
            for u in 0..a {
                let (lo, hi) = (topo.intervals.p_min[u][n], topo.intervals.p_max[u][n]);
                prop_assert!(lo <= hi && hi <= scenario.uavs[u].p_max_w, "uav {} slot {}: [{}, {})", u, n, lo, hi);
            }
            for _ in 0..10 {
                let p: Vec<f64> = (0..a).map(|u| draw(&mut rng, topo.intervals.p_min[u][n], topo.intervals.p_max[u][n])).collect();
                prop_assert_eq!(&links_from_powers(&pos.slot(n), &p, &scenario.radio), m);
            }
        }
    }
}

// ---- power ----

fn power_problem(max_slots: usize) -> impl Strategy<Value = UavPowerProblem> {
    (1..=max_slots).prop_flat_map(|n| {
        (
            prop::collection::vec((1e-3..0.5f64, 0.0..1.0f64), n),
            prop::collection::vec(prop::collection::vec(1e-9..1e-5f64, 0..4), n),
            0.0..1.3f64,
            0.1..10.0f64,
        )
            .prop_map(|(boxes, gains, slack, dt)| {
                let lo: Vec<f64> = boxes.iter().map(|b| b.0).collect();
                let hi: Vec<f64> = boxes.iter().map(|b| b.0 + b.1).collect();
                let floor: f64 = lo.iter().sum::<f64>() * dt;
                let ceil: f64 = hi.iter().sum::<f64>() * dt;
                UavPowerProblem {
                    uav: 0,
                    lo,
                    hi,
                    gains,
                    budget: EnergyBudget { e_max_j: floor + slack * (ceil - floor), slot_duration_s: dt },
                    bandwidth_hz: 83.5e6,
                    noise_power_w: 1e-14,
                }
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn solver_feasible_stationary_and_dominant(pr in power_problem(5)) {
        let s = solve_uav(&pr).unwrap();
        for n in 0..pr.num_slots() {
            prop_assert!(pr.lo[n] <= s.p[n] && s.p[n] <= pr.hi[n]);
        }
        prop_assert!(pr.energy(&s.p) <= pr.budget.e_max_j + 1e-9);
        prop_assert!(s.kkt_residual <= 1e-8, "kkt {}", s.kkt_residual);
        let width = pr.lo.iter().zip(&pr.hi).map(|(l, h)| h - l).fold(0.0, f64::max);
        let grid = oracle_grid(std::slice::from_ref(&pr), (width / 12.0).max(1e-9)).unwrap();
        let (fs, fg) = (pr.objective(&s.p), pr.objective(&grid[0]));
        prop_assert!(fs >= fg * (1.0 - 1e-9) - 1e-6, "{} < {}", fs, fg);
    }

    #[test]
    fn marginal_strictly_decreasing(pr in power_problem(1), p in 0.0..2.0f64, step in 1e-3..1.0f64) {
        prop_assume!(!pr.gains[0].is_empty());
        prop_assert!(pr.marginal(0, p + step) < pr.marginal(0, p));
    }
}

// ---- planner ----

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn emitted_plans_validate(seed in any::<u64>(), w in 3usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pair = random_instance(&InstanceConfig::pair(w), &mut rng);
        let single = random_instance(&InstanceConfig::single_uav(w + 3), &mut rng);
        let model = ModelParams::init(&ModelConfig { dim: 16, heads: 2, layers: 1, ff_hidden: 32, clip: 10.0, bn_momentum: 0.1 }, seed).unwrap();
        let mut plans = vec![(&pair, exhaustive_oracle(&pair).unwrap().plan), (&pair, heuristic_plan(&pair, seed).unwrap()), (&single, heuristic_plan(&single, seed).unwrap())];
        for mode in [DecodeMode::Greedy, DecodeMode::Sample] {
            for inst in [&pair, &single] {
                // the mask can run out of options on a pair; nothing is emitted then
                if let Ok(r) = decode_rollout(inst, &model, mode, seed) {
                    plans.push((inst, r.plan));
                }
            }
        }
        for (inst, plan) in plans {
            let report = validate_all(&plan, &inst.scenario).unwrap();
            prop_assert!(report.violations.is_empty(), "{:?}", report.violations);
        }
    }

    #[test]
    fn greedy_routes_ignore_waypoint_labels(seed in any::<u64>(), w in 4usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&InstanceConfig::single_uav(w), &mut rng);
        let model = ModelParams::init(&ModelConfig { dim: 16, heads: 2, layers: 2, ff_hidden: 32, clip: 10.0, bn_momentum: 0.1 }, seed).unwrap();
        let mut shuffled = inst.scenario.clone();
        shuffled.waypoints.reverse();
        shuffled.waypoints.rotate_left(seed as usize % w);
        let shuffled = Instance::new(shuffled);
        let route = |i: &Instance| -> Vec<Point3> {
            let r = decode_rollout(i, &model, DecodeMode::Greedy, 0).unwrap();
            r.plan.routes[0].iter().map(|&id| i.scenario.node(id)).collect()
        };
        prop_assert_eq!(route(&inst), route(&shuffled));
    }

    #[test]
    fn masked_entries_get_zero_probability(logits in prop::collection::vec(prop::collection::vec(-20.0..20.0f64, 6), 1..5), bits in prop::collection::vec(prop::collection::vec(any::<bool>(), 6), 5)) {
        let rows = logits.len();
        let mut mask: Vec<Vec<bool>> = bits[..rows].to_vec();
        for (r, m) in mask.iter_mut().enumerate() {
            m[r % 6] = true;
        }
        let probs = masked_softmax(&Mat::from_rows(&logits), &mask);
        for r in 0..rows {
            let row = probs.row(r);
            let total: f64 = row.iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-6);
            for c in 0..6 {
                if !mask[r][c] {
                    prop_assert_eq!(row[c], 0.0);
                }
            }
        }
    }
}

#[test]
fn baseline_history_is_non_increasing() {
    let cfg = TrainConfig {
        epochs: 4,
        steps_per_epoch: 10,
        batch_size: 16,
        learning_rate: 1e-3,
        alpha: 0.05,
        validation_size: 64,
        baseline_every: 5,
        max_grad_norm: 1.0,
        seed: 3,
        instances: InstanceConfig::single_uav(5),
        model: ModelConfig { dim: 8, heads: 2, layers: 1, ff_hidden: 16, clip: 10.0, bn_momentum: 0.1 },
    };
    let out = train(&cfg).unwrap();
    assert!(!out.baseline_history.is_empty());
    assert!(out.baseline_history.windows(2).all(|w| w[1] <= w[0]), "{:?}", out.baseline_history);
}

// ---- simulator ----

fn random_matrices(a: usize) -> impl Strategy<Value = Vec<ReachabilityMatrix>> {
    let pairs: Vec<(usize, usize)> = (0..a).flat_map(|i| (i + 1..a).map(move |j| (i, j))).collect();
    prop::collection::vec(prop::collection::vec(any::<bool>(), pairs.len()), 2..8).prop_map(move |slots| {
        slots
            .into_iter()
            .map(|bits| {
                let edges: Vec<(usize, usize)> = pairs.iter().zip(bits).filter(|(_, b)| *b).map(|(e, _)| *e).collect();
                ReachabilityMatrix::from_edges(a, &edges)
            })
            .collect()
    })
}

/// Survivors of `removed` are connected, by a search that skips it.
fn survivors_connected(m: &ReachabilityMatrix, removed: usize) -> bool {
    let alive: Vec<usize> = (0..m.len()).filter(|&u| u != removed).collect();
    let mut seen = vec![false; m.len()];
    let mut stack = vec![alive[0]];
    seen[alive[0]] = true;
    while let Some(u) = stack.pop() {
        for &v in &alive {
            if !seen[v] && m.get(u, v) {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    alive.iter().all(|&u| seen[u])
}

/// A few slots of random graphs plus a failure slot.
fn xi_case() -> impl Strategy<Value = (Vec<ReachabilityMatrix>, usize)> {
    (3usize..7).prop_flat_map(random_matrices).prop_flat_map(|ms| {
        let last = ms.len() - 1;
        (Just(ms), 1..=last)
    })
}

proptest! {
    #[test]
    fn xi_bounded_and_one_iff_survivors_connected((ms, n_dc) in xi_case()) {
        let xi = connectivity_rate_frozen(&ms, n_dc).unwrap();
        prop_assert!((0.0..=1.0).contains(&xi));
        let all = (n_dc..ms.len()).all(|n| (0..ms[n].len()).all(|r| survivors_connected(&ms[n], r)));
        prop_assert_eq!(xi == 1.0, all);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn optimized_powers_beat_interval_floor(seed in any::<u64>(), a in 3usize..9, slots in 2usize..30) {
        let (scenario, _, pos) = random_mission(seed, a, slots);
        let topo = optimize_series(&pos, &scenario).unwrap();
        let chosen = solve_all(&topo, &pos, &scenario).unwrap();
        let floor = PowerSchedule { p: topo.intervals.p_min.clone() };
        let t_opt = throughput_series(&topo.matrices, &chosen, &pos, &scenario.radio).unwrap().total;
        let t_min = throughput_series(&topo.matrices, &floor, &pos, &scenario.radio).unwrap().total;
        prop_assert!(t_opt >= t_min * (1.0 - 1e-12), "{} < {}", t_opt, t_min);
        // and the budget holds
        let problems = build_problems(&topo, &pos, &scenario).unwrap();
        for (pr, p) in problems.iter().zip(&chosen.p) {
            prop_assert!(pr.energy(p) <= pr.budget.e_max_j + 1e-9);
        }
    }

    #[test]
    fn mtp_ledger_never_overspends(seed in any::<u64>(), a in 2usize..8, slots in 5usize..60) {
        let (scenario, _, pos) = random_mission(seed, a, slots);
        let out = mtp_series(&pos, &scenario);
        let dt = pos.slot_duration;
        for u in 0..a {
            let cap = scenario.uavs[u].p_max_w;
            let mut spent = 0.0;
            for n in 0..=slots {
                let p = out.powers.p[u][n];
                let silent = out.depleted_at[u].is_some_and(|d| n >= d);
                if silent {
                    prop_assert_eq!(p, 0.0);
                    prop_assert_eq!(out.matrices[n].degree(u), 0);
                } else {
                    prop_assert_eq!(p, cap);
                }
                spent += dt * p;
                prop_assert!(spent <= scenario.uavs[u].e_max_j);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn pipeline_is_deterministic(seed in 0u64..1000, topo in prop::sample::select(TopoChoice::ALL.to_vec())) {
        let scenario = square_area(&SquareAreaConfig { n_slots: 20, ..SquareAreaConfig::table_one() }, seed);
        let run = || run_pipeline(&scenario, &PlannerChoice::Heuristic, topo, seed, &SimOptions::default()).unwrap();
        let (x, y) = (run(), run());
        prop_assert_eq!(x.to_json(), y.to_json());
        prop_assert_eq!(x, y);
    }
}
