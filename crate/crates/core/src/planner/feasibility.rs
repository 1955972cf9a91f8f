//! Incremental plan feasibility.
//!
//! A partial plan is read as a full plan in which every UAV hovers at the
//! last node of its partial route forever. [`PlanState`] keeps that
//! hypothesis feasible at every instant of the check grid: appending a node
//! to UAV `a` only changes `a`'s positions from its current elapsed time
//! on, so only those instants are re-checked. Any completed plan built this
//! way passes the independent validator.

use crate::geometry::Point3;
use crate::kinematics::{in_max_power_range, sample_times, Track};
use crate::scenario::Scenario;

#[derive(Clone, Debug)]
pub struct PlanState<'a> {
    scenario: &'a Scenario,
    times: Vec<f64>,
    routes: Vec<Vec<usize>>,
    tracks: Vec<Track>,
    length: f64,
    /// `pos[t][a]` under the hover hypothesis.
    pos: Vec<Vec<Point3>>,
    /// `degree[t][a]`: UAVs within `a`'s max-power range at instant `t`.
    degree: Vec<Vec<usize>>,
}

impl<'a> PlanState<'a> {
    /// Every UAV at its start point.
    pub fn new(scenario: &'a Scenario) -> Self {
        let times: Vec<f64> = sample_times(scenario.n_slots, scenario.slot_duration(), scenario.subsamples_per_slot).iter().map(|s| s.t).collect();
        let routes: Vec<Vec<usize>> = scenario.uavs.iter().map(|u| vec![u.start_point]).collect();
        let tracks: Vec<Track> = scenario.uavs.iter().map(|u| Track::new(vec![scenario.start_points[u.start_point]], u.speed_mps)).collect();
        let pos: Vec<Vec<Point3>> = times.iter().map(|&t| tracks.iter().map(|tr| tr.position_at(t)).collect()).collect();
        let mut state = Self { scenario, times, routes, tracks, length: 0.0, pos, degree: Vec::new() };
        state.degree = state.pos.iter().map(|here| state.degrees(here)).collect();
        state
    }

    fn degrees(&self, here: &[Point3]) -> Vec<usize> {
        let (mu, gamma) = (self.scenario.radio.mu_f, self.scenario.radio.sensitivity_w);
        (0..here.len())
            .map(|a| {
                let p = self.scenario.uavs[a].p_max_w;
                (0..here.len()).filter(|&b| b != a && in_max_power_range(p, here[a].dist_sq(&here[b]), mu, gamma)).count()
            })
            .collect()
    }

    pub fn routes(&self) -> &[Vec<usize>] {
        &self.routes
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn elapsed(&self, uav: usize) -> f64 {
        self.tracks[uav].duration()
    }

    pub fn last_node(&self, uav: usize) -> usize {
        *self.routes[uav].last().unwrap()
    }

    /// True when the hover hypothesis holds at every instant; only the
    /// initial state can fail this, since appends preserve it.
    pub fn hypothesis_feasible(&self) -> bool {
        let k = self.scenario.k_min;
        let d_min = self.scenario.d_min_m;
        self.degree.iter().all(|d| d.iter().all(|&x| x >= k))
            && self.pos.iter().all(|here| {
                (0..here.len()).all(|a| (a + 1..here.len()).all(|b| here[a].dist(&here[b]) >= d_min))
            })
    }

    /// Smallest max-power degree of any UAV from `uav`'s elapsed time on.
    pub fn min_degree_ahead(&self, uav: usize) -> usize {
        let first = self.first_instant(self.elapsed(uav));
        self.degree[first..].iter().flat_map(|d| d.iter().copied()).min().unwrap_or(0)
    }

    /// Index of the last grid instant at or before `t` (the first instant
    /// whose position may change when a route is extended beyond `t`).
    fn first_instant(&self, t: f64) -> usize {
        self.times.partition_point(|&x| x < t).saturating_sub(1)
    }

    fn extended(&self, uav: usize, node: usize) -> Track {
        let mut pts: Vec<Point3> = self.routes[uav].iter().map(|&id| self.scenario.node(id)).collect();
        pts.push(self.scenario.node(node));
        Track::new(pts, self.scenario.uavs[uav].speed_mps)
    }

    /// Whether UAV `uav` may fly to `node` next without breaking the time
    /// budget, the total-length limit, separation or any UAV's max-power
    /// degree at any later instant.
    pub fn can_append(&self, uav: usize, node: usize) -> bool {
        let seg = self.scenario.node(self.last_node(uav)).dist(&self.scenario.node(node));
        if self.length + seg > self.scenario.l_max_m {
            return false;
        }
        let track = self.extended(uav, node);
        if track.duration() > self.scenario.uavs[uav].t_max_s {
            return false;
        }
        self.check_track(uav, &track)
    }

    fn check_track(&self, uav: usize, track: &Track) -> bool {
        let sc = self.scenario;
        let (mu, gamma) = (sc.radio.mu_f, sc.radio.sensitivity_w);
        let k_min = sc.k_min;
        let p_self = sc.uavs[uav].p_max_w;
        let first = self.first_instant(self.elapsed(uav));
        for ti in first..self.times.len() {
            let x = track.position_at(self.times[ti]);
            let old = self.pos[ti][uav];
            let here = &self.pos[ti];
            let mut own = 0;
            for b in 0..here.len() {
                if b == uav {
                    continue;
                }
                let d2 = x.dist_sq(&here[b]);
                if x.dist(&here[b]) < sc.d_min_m {
                    return false;
                }
                let pb = sc.uavs[b].p_max_w;
                let before = in_max_power_range(pb, old.dist_sq(&here[b]), mu, gamma) as usize;
                let after = in_max_power_range(pb, d2, mu, gamma) as usize;
                if self.degree[ti][b] - before + after < k_min {
                    return false;
                }
                own += in_max_power_range(p_self, d2, mu, gamma) as usize;
            }
            if own < k_min {
                return false;
            }
        }
        true
    }

    /// Appends without checking; callers use [`PlanState::can_append`].
    pub fn append(&mut self, uav: usize, node: usize) {
        let seg = self.scenario.node(self.last_node(uav)).dist(&self.scenario.node(node));
        let first = self.first_instant(self.elapsed(uav));
        let track = self.extended(uav, node);
        self.routes[uav].push(node);
        self.length += seg;
        for ti in first..self.times.len() {
            self.pos[ti][uav] = track.position_at(self.times[ti]);
            let d = self.degrees(&self.pos[ti]);
            self.degree[ti] = d;
        }
        self.tracks[uav] = track;
    }
}
