//! Synthetic comparison scenarios.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::Point3;
use crate::scenario::{RadioParams, Scenario, UavSpec};
use crate::units::dbm_to_w;

/// Knobs of the square-area comparison scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct SquareAreaConfig {
    pub extent_m: f64,
    pub num_uavs: usize,
    pub num_waypoints: usize,
    pub n_slots: usize,
    pub altitude_m: f64,
    /// Spread of the waypoint cloud around the centre.
    pub sigma_m: f64,
    pub speed_mps: f64,
    pub t_max_s: f64,
    pub p_max_dbm: (f64, f64),
    pub e_max_j: (f64, f64),
    pub carrier_hz: f64,
    pub k_min: usize,
    pub delta: usize,
}

impl SquareAreaConfig {
    /// 500 m x 500 m, four UAVs, 50 slots, `K_min = 2`, `delta = 2`.
    pub fn table_one() -> Self {
        Self {
            extent_m: 500.0,
            num_uavs: 4,
            num_waypoints: 24,
            n_slots: 50,
            altitude_m: 100.0,
            sigma_m: 100.0,
            speed_mps: 5.0,
            t_max_s: 360.0,
            p_max_dbm: (27.0, 30.0),
            e_max_j: (150.0, 200.0),
            // 5.8 GHz gives ~290 m of range at 27 dBm, less than the corner spacing
            carrier_hz: 2.4e9,
            k_min: 2,
            delta: 2,
        }
    }

    pub fn with_uavs(mut self, num_uavs: usize) -> Self {
        self.num_waypoints = self.num_waypoints / self.num_uavs.max(1) * num_uavs;
        self.num_uavs = num_uavs;
        self
    }
}

/// Starts on the corners, then the edge midpoints; later rounds move
/// towards the centre.
fn start_point(a: usize, e: f64, z: f64) -> Point3 {
    const SPOTS: [(f64, f64); 8] = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (0.5, 0.0), (0.0, 0.5), (1.0, 0.5), (0.5, 1.0)];
    let (x, y) = SPOTS[a % 8];
    let inward = 0.2 * (a / 8) as f64;
    Point3::new((x + (0.5 - x) * inward) * e, (y + (0.5 - y) * inward) * e, z)
}

/// Gaussian waypoint cloud in a square with UAVs starting on the boundary.
pub fn square_area(cfg: &SquareAreaConfig, seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = cfg.extent_m;
    let normal = Normal::new(0.5 * e, cfg.sigma_m).expect("finite spread");
    let lo = 0.05 * e;
    let hi = 0.95 * e;
    let waypoints = (0..cfg.num_waypoints)
        .map(|_| {
            let x = normal.sample(&mut rng).clamp(lo, hi);
            let y = normal.sample(&mut rng).clamp(lo, hi);
            Point3::new(x, y, cfg.altitude_m)
        })
        .collect();
    let uavs = (0..cfg.num_uavs)
        .map(|a| UavSpec {
            id: a,
            start_point: a,
            speed_mps: cfg.speed_mps,
            t_max_s: cfg.t_max_s,
            p_max_w: dbm_to_w(rng.random_range(cfg.p_max_dbm.0..=cfg.p_max_dbm.1)),
            e_max_j: rng.random_range(cfg.e_max_j.0..=cfg.e_max_j.1),
        })
        .collect();
    Scenario {
        uavs,
        start_points: (0..cfg.num_uavs).map(|a| start_point(a, e, cfg.altitude_m)).collect(),
        waypoints,
        radio: RadioParams::from_carrier(cfg.carrier_hz, 83.5e6, dbm_to_w(-110.0), dbm_to_w(-70.0)),
        k_min: cfg.k_min.min(cfg.num_uavs.saturating_sub(1)),
        delta: cfg.delta,
        l_max_m: 1e7,
        d_min_m: 1.0,
        n_slots: cfg.n_slots,
        subsamples_per_slot: crate::scenario::DEFAULT_SUBSAMPLES,
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_is_valid_and_seeded() {
        let a = square_area(&SquareAreaConfig::table_one(), 3);
        a.validate().unwrap();
        assert_eq!(a, square_area(&SquareAreaConfig::table_one(), 3));
        assert_ne!(a, square_area(&SquareAreaConfig::table_one(), 4));
        assert!(a.waypoints.iter().all(|p| p.x >= 25.0 && p.x <= 475.0));
        let eight = square_area(&SquareAreaConfig::table_one().with_uavs(8), 0);
        eight.validate().unwrap();
        assert_eq!(eight.waypoints.len(), 48);
        let many = square_area(&SquareAreaConfig::table_one().with_uavs(12), 0);
        for (i, p) in many.start_points.iter().enumerate() {
            assert!(many.start_points[..i].iter().all(|q| q.dist(p) > 1.0));
        }
    }
}
