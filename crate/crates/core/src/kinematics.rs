//! Route geometry and straight-segment, constant-speed kinematics.
//!
//! A UAV leaves its start point at `t = 0`, flies its route at constant
//! speed and hovers at its last waypoint afterwards. Slot boundaries are
//! `t_n = n * dt` with `dt = max_a T_max / N`; checks that need finer time
//! resolution also look at `subsamples_per_slot` evenly spaced instants
//! inside each slot (see [`sample_times`]).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::scenario::Scenario;

/// Symmetric matrix of Euclidean node-to-node distances.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }
}

pub fn build_distance_matrix(points: &[Point3]) -> DistanceMatrix {
    let n = points.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = points[i].dist(&points[j]);
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    DistanceMatrix { n, d }
}

/// Ordered node-id routes, one per UAV; each starts at that UAV's start point.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectorySet {
    pub routes: Vec<Vec<usize>>,
}

impl TrajectorySet {
    pub fn new(routes: Vec<Vec<usize>>) -> Self {
        Self { routes }
    }

    /// Sum of consecutive-segment distances along each route.
    pub fn total_length(&self, dist: &DistanceMatrix) -> f64 {
        (0..self.routes.len()).map(|a| self.route_length(a, dist)).sum()
    }

    pub fn route_length(&self, uav: usize, dist: &DistanceMatrix) -> f64 {
        self.routes[uav].windows(2).map(|w| dist.get(w[0], w[1])).sum()
    }

    /// The 0/1 tensor `e[i][j][a]`: route `a` flies edge `i -> j`.
    pub fn visit_matrix(&self, n_nodes: usize) -> VisitMatrix {
        let mut m = VisitMatrix { n: n_nodes, uavs: self.routes.len(), e: vec![0; n_nodes * n_nodes * self.routes.len()] };
        for (a, route) in self.routes.iter().enumerate() {
            for w in route.windows(2) {
                m.e[(w[0] * n_nodes + w[1]) * m.uavs + a] = 1;
            }
        }
        m
    }

    fn check_shape(&self, scenario: &Scenario) -> Result<()> {
        if self.routes.len() != scenario.num_uavs() {
            return Err(Error::validation(
                "plan.routes",
                format!("{} routes for {} UAVs", self.routes.len(), scenario.num_uavs()),
            ));
        }
        for (a, route) in self.routes.iter().enumerate() {
            if route.first() != Some(&scenario.uavs[a].start_point) {
                return Err(Error::validation(format!("plan.routes[{a}]"), "route must begin at the UAV's start point"));
            }
            if let Some(&bad) = route.iter().find(|&&id| id >= scenario.num_nodes()) {
                return Err(Error::validation(format!("plan.routes[{a}]"), format!("node id {bad} out of range")));
            }
        }
        Ok(())
    }
}

/// Dense `(S+W) x (S+W) x A` visit tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct VisitMatrix {
    n: usize,
    uavs: usize,
    e: Vec<u8>,
}

impl VisitMatrix {
    pub fn get(&self, i: usize, j: usize, a: usize) -> u8 {
        self.e[(i * self.n + j) * self.uavs + a]
    }

    /// `sum_a sum_i e[i][j][a]`: how many times node `j` is entered.
    pub fn entries(&self, j: usize) -> usize {
        (0..self.n).flat_map(|i| (0..self.uavs).map(move |a| (i, a))).map(|(i, a)| self.get(i, j, a) as usize).sum()
    }

    /// `sum_a sum_j e[i][j][a]`: how many times node `i` is left.
    pub fn exits(&self, i: usize) -> usize {
        (0..self.n).flat_map(|j| (0..self.uavs).map(move |a| (j, a))).map(|(j, a)| self.get(i, j, a) as usize).sum()
    }

    /// `sum e[i][j][a] * l[i][j]`.
    pub fn weighted_length(&self, dist: &DistanceMatrix) -> f64 {
        let mut total = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                for a in 0..self.uavs {
                    if self.get(i, j, a) == 1 {
                        total += dist.get(i, j);
                    }
                }
            }
        }
        total
    }
}

/// Constant-speed motion along a polyline.
#[derive(Clone, Debug, PartialEq)]
pub struct Track {
    points: Vec<Point3>,
    cumulative: Vec<f64>,
    speed: f64,
}

impl Track {
    pub fn new(points: Vec<Point3>, speed: f64) -> Self {
        let mut cumulative = Vec::with_capacity(points.len());
        let mut s = 0.0;
        cumulative.push(0.0);
        for w in points.windows(2) {
            s += w[0].dist(&w[1]);
            cumulative.push(s);
        }
        Self { points, cumulative, speed }
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap_or(&0.0)
    }

    pub fn duration(&self) -> f64 {
        self.length() / self.speed
    }

    pub fn position_at(&self, t: f64) -> Point3 {
        let s = (self.speed * t.max(0.0)).min(self.length());
        let k = self.cumulative.partition_point(|&c| c <= s);
        if k >= self.points.len() {
            return *self.points.last().unwrap();
        }
        let (s0, s1) = (self.cumulative[k - 1], self.cumulative[k]);
        self.points[k - 1].lerp(&self.points[k], (s - s0) / (s1 - s0))
    }
}

/// One instant of the check grid: slot boundary (`sub == 0`) or an interior sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleTime {
    pub slot: usize,
    pub sub: usize,
    pub t: f64,
}

/// Slot boundaries `0..=N` interleaved with `subsamples` interior instants per slot.
pub fn sample_times(n_slots: usize, slot_duration: f64, subsamples: usize) -> Vec<SampleTime> {
    let mut out = Vec::with_capacity(n_slots * (subsamples + 1) + 1);
    for n in 0..=n_slots {
        out.push(SampleTime { slot: n, sub: 0, t: n as f64 * slot_duration });
        if n < n_slots {
            for k in 1..=subsamples {
                let t = (n as f64 + k as f64 / (subsamples + 1) as f64) * slot_duration;
                out.push(SampleTime { slot: n, sub: k, t });
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct PositionSeries {
    /// `positions[a][n]`: UAV `a` at slot boundary `t_n`.
    pub positions: Vec<Vec<Point3>>,
    pub slot_duration: f64,
    pub tracks: Vec<Track>,
}

impl PositionSeries {
    pub fn num_uavs(&self) -> usize {
        self.positions.len()
    }

    pub fn num_slots(&self) -> usize {
        self.positions.first().map_or(0, Vec::len)
    }

    /// All UAV positions at slot boundary `n`.
    pub fn slot(&self, n: usize) -> Vec<Point3> {
        self.positions.iter().map(|p| p[n]).collect()
    }

    pub fn position_at(&self, uav: usize, t: f64) -> Point3 {
        self.tracks[uav].position_at(t)
    }

    /// Writes `slot,uav,x,y,z` rows.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["slot", "uav", "x", "y", "z"])?;
        for n in 0..self.num_slots() {
            for (a, p) in self.positions.iter().enumerate() {
                let p = p[n];
                w.write_record([n.to_string(), a.to_string(), p.x.to_string(), p.y.to_string(), p.z.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Slot-boundary positions of every UAV flying its route at constant speed.
pub fn positions_over_slots(traj: &TrajectorySet, scenario: &Scenario) -> Result<PositionSeries> {
    traj.check_shape(scenario)?;
    let series = series_unchecked(traj, scenario);
    for (a, track) in series.tracks.iter().enumerate() {
        let limit = scenario.uavs[a].t_max_s;
        if track.duration() > limit {
            return Err(Error::TimeBudgetExceeded { uav: a, duration_s: track.duration(), limit_s: limit });
        }
    }
    Ok(series)
}

fn series_unchecked(traj: &TrajectorySet, scenario: &Scenario) -> PositionSeries {
    let dt = scenario.slot_duration();
    let tracks: Vec<Track> = traj
        .routes
        .iter()
        .enumerate()
        .map(|(a, route)| Track::new(route.iter().map(|&id| scenario.node(id)).collect(), scenario.uavs[a].speed_mps))
        .collect();
    let positions = tracks
        .iter()
        .map(|tr| (0..=scenario.n_slots).map(|n| tr.position_at(n as f64 * dt)).collect())
        .collect();
    PositionSeries { positions, slot_duration: dt, tracks }
}

/// A constraint violated by a plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// Waypoint entered `count` times instead of once.
    VisitCount { node: usize, count: usize },
    /// Route revisits a start point after leaving it.
    StartRevisited { uav: usize, node: usize },
    Collision { slot: usize, sub: usize, a: usize, b: usize, distance_m: f64 },
    TotalLength { length_m: f64, limit_m: f64 },
    TimeBudget { uav: usize, duration_s: f64, limit_s: f64 },
    /// Fewer than `K_min` UAVs within max-power range.
    MaxPowerDegree { slot: usize, sub: usize, uav: usize, neighbors: usize },
    /// A node keeps more than `K_min + delta` neighbours after pruning.
    ExtraNeighbors { slot: usize, uav: usize, degree: usize, limit: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::VisitCount { node, count } => write!(f, "waypoint {node} visited {count} times"),
            Violation::StartRevisited { uav, node } => write!(f, "UAV {uav} revisits start point {node}"),
            Violation::Collision { slot, sub, a, b, distance_m } => {
                write!(f, "UAVs {a} and {b} are {distance_m:.3} m apart at slot {slot}.{sub}")
            }
            Violation::TotalLength { length_m, limit_m } => write!(f, "total length {length_m:.1} m exceeds {limit_m:.1} m"),
            Violation::TimeBudget { uav, duration_s, limit_s } => {
                write!(f, "UAV {uav} flies {duration_s:.1} s, budget {limit_s:.1} s")
            }
            Violation::MaxPowerDegree { slot, sub, uav, neighbors } => {
                write!(f, "UAV {uav} has {neighbors} max-power neighbours at slot {slot}.{sub}")
            }
            Violation::ExtraNeighbors { slot, uav, degree, limit } => {
                write!(f, "UAV {uav} keeps {degree} neighbours (limit {limit}) in slot {slot}")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks visit-once, anti-collision, total length and flight-time budgets.
///
/// Collisions are checked at every slot boundary and at the scenario's
/// interior sub-samples. Violations are reported, never raised.
pub fn validate_plan(traj: &TrajectorySet, pos: &PositionSeries, scenario: &Scenario) -> ValidationReport {
    let mut violations = Vec::new();
    let s = scenario.start_points.len();
    let n_nodes = scenario.num_nodes();

    let mut visits = vec![0usize; n_nodes];
    for (a, route) in traj.routes.iter().enumerate() {
        for &id in route.iter().skip(1) {
            if id < s {
                violations.push(Violation::StartRevisited { uav: a, node: id });
            } else if id < n_nodes {
                visits[id] += 1;
            }
        }
    }
    for (id, &count) in visits.iter().enumerate().skip(s) {
        if count != 1 {
            violations.push(Violation::VisitCount { node: id, count });
        }
    }

    let times = sample_times(scenario.n_slots, pos.slot_duration, scenario.subsamples_per_slot);
    let a_count = pos.num_uavs();
    for st in &times {
        let here: Vec<Point3> = (0..a_count).map(|a| pos.position_at(a, st.t)).collect();
        for a in 0..a_count {
            for b in (a + 1)..a_count {
                let d = here[a].dist(&here[b]);
                if d < scenario.d_min_m {
                    violations.push(Violation::Collision { slot: st.slot, sub: st.sub, a, b, distance_m: d });
                }
            }
        }
    }

    let dist = build_distance_matrix(&scenario.nodes());
    let length = traj.total_length(&dist);
    if length > scenario.l_max_m {
        violations.push(Violation::TotalLength { length_m: length, limit_m: scenario.l_max_m });
    }

    for (a, tr) in pos.tracks.iter().enumerate() {
        let limit = scenario.uavs[a].t_max_s;
        if tr.duration() > limit {
            violations.push(Violation::TimeBudget { uav: a, duration_s: tr.duration(), limit_s: limit });
        }
    }
    ValidationReport { violations }
}

/// Checks that every UAV has at least `K_min` others within its max-power
/// range at every instant of the check grid.
pub fn validate_max_power_degree(pos: &PositionSeries, scenario: &Scenario) -> Vec<Violation> {
    let mut violations = Vec::new();
    let gamma = scenario.radio.sensitivity_w;
    let mu = scenario.radio.mu_f;
    let a_count = pos.num_uavs();
    for st in sample_times(scenario.n_slots, pos.slot_duration, scenario.subsamples_per_slot) {
        let here: Vec<Point3> = (0..a_count).map(|a| pos.position_at(a, st.t)).collect();
        for a in 0..a_count {
            let p = scenario.uavs[a].p_max_w;
            let neighbors = (0..a_count)
                .filter(|&b| b != a)
                .filter(|&b| in_max_power_range(p, here[a].dist_sq(&here[b]), mu, gamma))
                .count();
            if neighbors < scenario.k_min {
                violations.push(Violation::MaxPowerDegree { slot: st.slot, sub: st.sub, uav: a, neighbors });
            }
        }
    }
    violations
}

/// `b` is within `a`'s range when `a` transmits at `p_w`; `d2` is the squared
/// distance. Co-located UAVs count as in range.
#[inline]
pub fn in_max_power_range(p_w: f64, d2: f64, mu_f: f64, gamma: f64) -> bool {
    d2 == 0.0 || p_w * (mu_f / d2) >= gamma
}

/// [`validate_plan`] plus the max-power neighbour condition. Time-budget
/// overruns are reported as violations rather than errors.
pub fn validate_all(traj: &TrajectorySet, scenario: &Scenario) -> Result<ValidationReport> {
    traj.check_shape(scenario)?;
    let pos = series_unchecked(traj, scenario);
    let mut report = validate_plan(traj, &pos, scenario);
    report.violations.extend(validate_max_power_degree(&pos, scenario));
    Ok(report)
}
