#![allow(dead_code)]

use fanet_core::kinematics::{positions_over_slots, PositionSeries};
use fanet_core::simulator::{square_area, SquareAreaConfig};
use fanet_core::{Scenario, TrajectorySet};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Square-area fleet of `a` UAVs flying shuffled round-robin routes.
///
/// Powers are drawn from 29..30 dBm so the whole 500 m box is within
/// range; flight budgets are stretched to cover the routes.
pub fn random_mission(seed: u64, a: usize, n_slots: usize) -> (Scenario, TrajectorySet, PositionSeries) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = SquareAreaConfig { n_slots, p_max_dbm: (29.0, 30.0), ..SquareAreaConfig::table_one().with_uavs(a) };
    let mut scenario = square_area(&cfg, seed);
    let s = scenario.start_points.len();
    let mut order: Vec<usize> = (s..scenario.num_nodes()).collect();
    order.shuffle(&mut rng);
    let mut routes: Vec<Vec<usize>> = (0..a).map(|i| vec![i]).collect();
    for (i, w) in order.into_iter().enumerate() {
        routes[i % a].push(w);
    }
    let traj = TrajectorySet::new(routes);
    let longest = traj
        .routes
        .iter()
        .map(|r| r.windows(2).map(|w| scenario.node(w[0]).dist(&scenario.node(w[1]))).sum::<f64>())
        .fold(0.0, f64::max);
    let t_max = longest / cfg.speed_mps * rng.random_range(1.05..1.5) + 1.0;
    for u in &mut scenario.uavs {
        u.t_max_s = t_max;
    }
    let pos = positions_over_slots(&traj, &scenario).expect("budgets cover the routes");
    (scenario, traj, pos)
}

/// Uniform draw from `[lo, hi)`, or `lo` on an empty interval.
pub fn draw<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        let p = rng.random_range(lo..hi);
        if p < hi { p } else { lo }
    } else {
        lo
    }
}

/// Links of one slot re-derived from per-UAV powers with the link rule.
pub fn links_from_powers(positions: &[fanet_core::Point3], p: &[f64], radio: &fanet_core::RadioParams) -> fanet_core::ReachabilityMatrix {
    use fanet_core::radio::{link_up, path_loss};
    let n = positions.len();
    let mut m = fanet_core::ReachabilityMatrix::identity(n);
    for a in 0..n {
        for b in a + 1..n {
            let h = path_loss(positions[a].dist(&positions[b]), radio).unwrap().h;
            if link_up(p[a], h, radio.sensitivity_w) && link_up(p[b], h, radio.sensitivity_w) {
                m.link(a, b, true);
            }
        }
    }
    m
}

/// Connectivity by breadth-first search from UAV 0, written out here
/// rather than borrowed from the library.
pub fn bfs_connected(m: &fanet_core::ReachabilityMatrix) -> bool {
    let n = m.len();
    let mut seen = vec![false; n];
    let mut queue = std::collections::VecDeque::from([0]);
    seen[0] = true;
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if !seen[v] && m.get(u, v) {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen.into_iter().all(|s| s)
}
