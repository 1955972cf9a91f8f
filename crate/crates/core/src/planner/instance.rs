//! Planning instances: the scenario slice the planner sees, plus a random
//! instance generator for training and tests.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Point3;
use crate::kinematics::TrajectorySet;
use crate::scenario::{RadioParams, Scenario, UavSpec, DEFAULT_SUBSAMPLES};

/// A planning problem. Tokens `0..A` are the UAVs' start points (in UAV
/// order), tokens `A..A+W` the waypoints.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub scenario: Scenario,
}

impl Instance {
    pub fn new(scenario: Scenario) -> Self {
        Self { scenario }
    }

    pub fn num_uavs(&self) -> usize {
        self.scenario.num_uavs()
    }

    pub fn num_waypoints(&self) -> usize {
        self.scenario.waypoints.len()
    }

    pub fn num_tokens(&self) -> usize {
        self.num_uavs() + self.num_waypoints()
    }

    pub fn is_start_token(&self, tok: usize) -> bool {
        tok < self.num_uavs()
    }

    /// Scenario node id of a token.
    pub fn token_node(&self, tok: usize) -> usize {
        let a = self.num_uavs();
        if tok < a {
            self.scenario.uavs[tok].start_point
        } else {
            self.scenario.start_points.len() + (tok - a)
        }
    }

    /// Token of a waypoint node id.
    pub fn node_token(&self, node: usize) -> usize {
        node - self.scenario.start_points.len() + self.num_uavs()
    }

    pub fn token_point(&self, tok: usize) -> Point3 {
        self.scenario.node(self.token_node(tok))
    }

    /// Token coordinates shifted to the bounding-box corner and divided by
    /// the largest extent, so every instance lives in the unit cube.
    pub fn normalized_coordinates(&self) -> Vec<[f64; 3]> {
        let pts: Vec<Point3> = (0..self.num_tokens()).map(|t| self.token_point(t)).collect();
        let lo = pts.iter().fold(Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY), |m, p| {
            Point3::new(m.x.min(p.x), m.y.min(p.y), m.z.min(p.z))
        });
        let hi = pts.iter().fold(Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY), |m, p| {
            Point3::new(m.x.max(p.x), m.y.max(p.y), m.z.max(p.z))
        });
        let scale = (hi.x - lo.x).max(hi.y - lo.y).max(hi.z - lo.z);
        let scale = if scale > 0.0 { scale } else { 1.0 };
        pts.iter().map(|p| [(p.x - lo.x) / scale, (p.y - lo.y) / scale, (p.z - lo.z) / scale]).collect()
    }

    /// Upper bound on any plan's length: tokens times the largest node
    /// distance.
    pub fn length_bound(&self) -> f64 {
        let nodes = self.scenario.nodes();
        let mut far: f64 = 0.0;
        for (i, p) in nodes.iter().enumerate() {
            for q in &nodes[i + 1..] {
                far = far.max(p.dist(q));
            }
        }
        self.num_tokens() as f64 * far
    }

    /// Splits a token sequence into per-UAV routes of scenario node ids.
    pub fn routes_from_sequence(&self, seq: &[usize]) -> TrajectorySet {
        let mut routes: Vec<Vec<usize>> = vec![Vec::new(); self.num_uavs()];
        let mut cur = None;
        for &tok in seq {
            if self.is_start_token(tok) {
                cur = Some(tok);
            }
            if let Some(a) = cur {
                routes[a].push(self.token_node(tok));
            }
        }
        for (a, r) in routes.iter_mut().enumerate() {
            if r.is_empty() {
                r.push(self.scenario.uavs[a].start_point);
            }
        }
        TrajectorySet::new(routes)
    }
}

/// Distribution of random instances: waypoints uniform in a box at a fixed
/// altitude band, UAVs starting at the box corners.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceConfig {
    pub num_uavs: usize,
    pub num_waypoints: usize,
    pub extent_m: f64,
    pub altitude_m: f64,
    /// Waypoint heights vary by up to this much around `altitude_m`.
    pub altitude_jitter_m: f64,
    pub speed_mps: f64,
    pub t_max_s: f64,
    pub p_max_w: f64,
    pub e_max_j: f64,
    pub k_min: usize,
    pub d_min_m: f64,
    pub n_slots: usize,
    pub carrier_frequency_hz: f64,
}

impl InstanceConfig {
    /// Single UAV, no connectivity constraint: an open-path TSP from a corner.
    pub fn single_uav(num_waypoints: usize) -> Self {
        Self {
            num_uavs: 1,
            num_waypoints,
            extent_m: 1000.0,
            altitude_m: 100.0,
            altitude_jitter_m: 0.0,
            speed_mps: 10.0,
            t_max_s: 1e5,
            p_max_w: 1.0,
            e_max_j: 1e6,
            k_min: 0,
            d_min_m: 0.0,
            n_slots: 10,
            carrier_frequency_hz: 2.4e9,
        }
    }

    /// Two UAVs from adjacent corners that must stay in mutual range.
    pub fn pair(num_waypoints: usize) -> Self {
        Self {
            num_uavs: 2,
            num_waypoints,
            extent_m: 1000.0,
            altitude_m: 100.0,
            altitude_jitter_m: 0.0,
            speed_mps: 10.0,
            t_max_s: 1500.0,
            // range 1.3 x extent at 2.4 GHz and -70 dBm
            p_max_w: crate::units::dbm_to_w(-70.0) * 1300.0f64.powi(2) / crate::units::free_space_constant(2.4e9),
            e_max_j: 1e6,
            k_min: 1,
            d_min_m: 1.0,
            n_slots: 20,
            carrier_frequency_hz: 2.4e9,
        }
    }
}

impl Default for InstanceConfig {
    fn default() -> Self {
        Self::single_uav(10)
    }
}

const CORNERS: [(f64, f64); 4] = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)];

pub fn random_instance<R: Rng + ?Sized>(cfg: &InstanceConfig, rng: &mut R) -> Instance {
    let radio = RadioParams::from_carrier(cfg.carrier_frequency_hz, 83.5e6, crate::units::dbm_to_w(-110.0), crate::units::dbm_to_w(-70.0));
    let e = cfg.extent_m;
    let start_points: Vec<Point3> = (0..cfg.num_uavs)
        .map(|a| {
            let (cx, cy) = CORNERS[a % 4];
            // UAVs beyond the fourth share corners, offset along the edge.
            let shift = (a / 4) as f64 * 0.05 * e;
            Point3::new(cx * e + shift, cy * e, cfg.altitude_m)
        })
        .collect();
    let waypoints = (0..cfg.num_waypoints)
        .map(|_| {
            let dz = if cfg.altitude_jitter_m > 0.0 { rng.random_range(-cfg.altitude_jitter_m..cfg.altitude_jitter_m) } else { 0.0 };
            Point3::new(rng.random_range(0.0..e), rng.random_range(0.0..e), cfg.altitude_m + dz)
        })
        .collect();
    let uavs = (0..cfg.num_uavs)
        .map(|a| UavSpec { id: a, start_point: a, speed_mps: cfg.speed_mps, t_max_s: cfg.t_max_s, p_max_w: cfg.p_max_w, e_max_j: cfg.e_max_j })
        .collect();
    Instance::new(Scenario {
        uavs,
        start_points,
        waypoints,
        radio,
        k_min: cfg.k_min.min(cfg.num_uavs.saturating_sub(1)),
        delta: 2,
        l_max_m: f64::MAX,
        d_min_m: cfg.d_min_m,
        n_slots: cfg.n_slots,
        subsamples_per_slot: DEFAULT_SUBSAMPLES,
        seed: 0,
    })
}
