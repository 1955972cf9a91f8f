//! Comparison topologies: maximum transmit power (MTP) and a local
//! minimum-spanning-tree (LMST) stand-in.
//!
//! Both run under an energy ledger: a UAV that cannot pay for the next slot
//! at its chosen power falls silent for the rest of the mission, and its
//! links go with it.

use crate::geometry::Point3;
use crate::kinematics::{in_max_power_range, PositionSeries};
use crate::power::PowerSchedule;
use crate::radio;
use crate::scenario::{RadioParams, Scenario};
use crate::topology::ReachabilityMatrix;

/// A baseline's per-slot links and powers.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineSeries {
    pub matrices: Vec<ReachabilityMatrix>,
    pub powers: PowerSchedule,
    /// First slot each UAV could no longer pay for.
    pub depleted_at: Vec<Option<usize>>,
    /// `alive[n][a]` after the ledger.
    pub alive: Vec<Vec<bool>>,
}

/// Links and powers for one slot given which UAVs still transmit.
pub trait SlotRule: Sync {
    fn slot(&self, positions: &[Point3], alive: &[bool]) -> (ReachabilityMatrix, Vec<f64>);
}

fn mutual_range(positions: &[Point3], caps: &[f64], radio: &RadioParams, a: usize, b: usize) -> bool {
    let d2 = positions[a].dist_sq(&positions[b]);
    in_max_power_range(caps[a], d2, radio.mu_f, radio.sensitivity_w) && in_max_power_range(caps[b], d2, radio.mu_f, radio.sensitivity_w)
}

/// Every live UAV transmits at `P_max`; links are the mutual max-power pairs.
#[derive(Clone, Debug)]
pub struct Mtp {
    pub caps: Vec<f64>,
    pub radio: RadioParams,
}

impl SlotRule for Mtp {
    fn slot(&self, positions: &[Point3], alive: &[bool]) -> (ReachabilityMatrix, Vec<f64>) {
        let n = positions.len();
        let mut m = ReachabilityMatrix::identity(n);
        for a in 0..n {
            for b in a + 1..n {
                if alive[a] && alive[b] && mutual_range(positions, &self.caps, &self.radio, a, b) {
                    m.link(a, b, true);
                }
            }
        }
        let p = (0..n).map(|a| if alive[a] { self.caps[a] } else { 0.0 }).collect();
        (m, p)
    }
}

/// Each UAV builds the minimum spanning tree of the UAVs it sees at max
/// power (itself included) and keeps its tree neighbours. A link survives
/// when both ends keep it; each UAV then uses the least power reaching its
/// farthest surviving link.
#[derive(Clone, Debug)]
pub struct Lmst {
    pub caps: Vec<f64>,
    pub radio: RadioParams,
}

impl Lmst {
    /// Tree neighbours of `u` in its local MST.
    fn local_tree(&self, positions: &[Point3], alive: &[bool], u: usize) -> Vec<usize> {
        let n = positions.len();
        let visible = |a: usize, b: usize| alive[a] && alive[b] && mutual_range(positions, &self.caps, &self.radio, a, b);
        let local: Vec<usize> = (0..n).filter(|&v| v == u || visible(u, v)).collect();
        let mut edges: Vec<(f64, usize, usize)> = Vec::new();
        for (i, &x) in local.iter().enumerate() {
            for &y in &local[i + 1..] {
                if visible(x, y) {
                    edges.push((positions[x].dist(&positions[y]), x, y));
                }
            }
        }
        edges.sort_by(|p, q| p.0.total_cmp(&q.0).then((p.1, p.2).cmp(&(q.1, q.2))));
        // Kruskal over node ids
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let mut out = Vec::new();
        for (_, x, y) in edges {
            let (rx, ry) = (find(&mut parent, x), find(&mut parent, y));
            if rx != ry {
                parent[rx] = ry;
                if x == u {
                    out.push(y);
                } else if y == u {
                    out.push(x);
                }
            }
        }
        out
    }
}

impl SlotRule for Lmst {
    fn slot(&self, positions: &[Point3], alive: &[bool]) -> (ReachabilityMatrix, Vec<f64>) {
        let n = positions.len();
        let trees: Vec<Vec<usize>> = (0..n).map(|u| if alive[u] { self.local_tree(positions, alive, u) } else { Vec::new() }).collect();
        let mut m = ReachabilityMatrix::identity(n);
        let mut p = vec![0.0; n];
        for a in 0..n {
            for &b in &trees[a] {
                if a < b && trees[b].contains(&a) {
                    m.link(a, b, true);
                    let need = radio::reach_power(positions[a].dist(&positions[b]), &self.radio);
                    p[a] = f64::max(p[a], need);
                    p[b] = f64::max(p[b], need);
                }
            }
        }
        (m, p)
    }
}

/// Runs `rule` slot by slot, retiring UAVs whose energy runs out.
///
/// A UAV pays `slot_duration * p` for every slot it transmits in. When a
/// payment would exceed its budget it is retired from that slot on and the
/// slot is re-evaluated without it.
pub fn run_with_ledger(rule: &dyn SlotRule, pos: &PositionSeries, scenario: &Scenario) -> BaselineSeries {
    let a_count = pos.num_uavs();
    let dt = pos.slot_duration;
    let mut spent = vec![0.0; a_count];
    let mut live = vec![true; a_count];
    let mut depleted_at = vec![None; a_count];
    let mut matrices = Vec::with_capacity(pos.num_slots());
    let mut powers = vec![Vec::with_capacity(pos.num_slots()); a_count];
    let mut alive = Vec::with_capacity(pos.num_slots());
    for n in 0..pos.num_slots() {
        let here = pos.slot(n);
        let (m, p) = loop {
            let (m, p) = rule.slot(&here, &live);
            let broke: Vec<usize> = (0..a_count).filter(|&a| live[a] && spent[a] + dt * p[a] > scenario.uavs[a].e_max_j).collect();
            if broke.is_empty() {
                break (m, p);
            }
            for a in broke {
                live[a] = false;
                depleted_at[a] = Some(n);
            }
        };
        for a in 0..a_count {
            spent[a] += dt * p[a];
            powers[a].push(p[a]);
        }
        matrices.push(m);
        alive.push(live.clone());
    }
    BaselineSeries { matrices, powers: PowerSchedule { p: powers }, depleted_at, alive }
}

pub fn mtp_rule(scenario: &Scenario) -> Mtp {
    Mtp { caps: scenario.uavs.iter().map(|u| u.p_max_w).collect(), radio: scenario.radio.clone() }
}

pub fn lmst_rule(scenario: &Scenario) -> Lmst {
    Lmst { caps: scenario.uavs.iter().map(|u| u.p_max_w).collect(), radio: scenario.radio.clone() }
}

pub fn mtp_series(pos: &PositionSeries, scenario: &Scenario) -> BaselineSeries {
    run_with_ledger(&mtp_rule(scenario), pos, scenario)
}

pub fn lmst_series(pos: &PositionSeries, scenario: &Scenario) -> BaselineSeries {
    run_with_ledger(&lmst_rule(scenario), pos, scenario)
}
