//! C-TOP: per-slot transmit-power intervals and the topology they induce.
//!
//! Each UAV ranks the others by distance (ties broken by lower id). Its
//! state is a prefix length `k`: it reaches exactly the first `k` UAVs of
//! its ranking. The admissible power interval is then
//! `[reach(k-th), min(reach((k+1)-th), P_max))`: any power inside reaches
//! the same `k` UAVs, so the topology does not depend on where in the
//! interval the power allocator ends up.
//!
//! A slot is built in five steps:
//!
//! 1. every UAV reaches its `K_min` nearest ([`SlotTopology::new`]);
//! 2. one-way links are repaired by raising the deaf side
//!    ([`SlotTopology::symmetrize`]);
//! 3. components are bridged through the globally shortest cross pair
//!    ([`SlotTopology::connect_global`]);
//! 4. surplus neighbours beyond `K_min + delta` are pruned, farthest first,
//!    when that keeps degrees and connectivity ([`SlotTopology::prune`]).

use std::collections::VecDeque;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::kinematics::{PositionSeries, Violation};
use crate::radio;
use crate::scenario::{RadioParams, Scenario};

/// Per-slot 0/1 reachability matrix with unit diagonal.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ReachabilityMatrix {
    n: usize,
    c: Vec<bool>,
}

impl ReachabilityMatrix {
    /// No links, diagonal set.
    pub fn identity(n: usize) -> Self {
        let mut c = vec![false; n * n];
        for a in 0..n {
            c[a * n + a] = true;
        }
        Self { n, c }
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut m = Self::identity(n);
        for &(a, b) in edges {
            m.link(a, b, true);
        }
        m
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> bool {
        self.c[a * self.n + b]
    }

    /// Sets the directed entry `a -> b`.
    pub fn set(&mut self, a: usize, b: usize, v: bool) {
        self.c[a * self.n + b] = v;
    }

    /// Sets both `a -> b` and `b -> a`.
    pub fn link(&mut self, a: usize, b: usize, v: bool) {
        self.set(a, b, v);
        self.set(b, a, v);
    }

    /// Number of neighbours, diagonal excluded.
    pub fn degree(&self, a: usize) -> usize {
        (0..self.n).filter(|&b| b != a && self.get(a, b)).count()
    }

    pub fn min_degree(&self) -> usize {
        (0..self.n).map(|a| self.degree(a)).min().unwrap_or(0)
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|a| (a + 1..self.n).all(|b| self.get(a, b) == self.get(b, a)))
    }

    pub fn has_unit_diagonal(&self) -> bool {
        (0..self.n).all(|a| self.get(a, a))
    }

    /// Undirected edges `(a, b)` with `a < b` and both directions set.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for a in 0..self.n {
            for b in (a + 1)..self.n {
                if self.get(a, b) && self.get(b, a) {
                    out.push((a, b));
                }
            }
        }
        out
    }

    /// Component label per node, labels numbered in order of first node.
    pub fn components(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.n];
        let mut next = 0;
        let mut queue = VecDeque::new();
        for root in 0..self.n {
            if label[root] != usize::MAX {
                continue;
            }
            label[root] = next;
            queue.push_back(root);
            while let Some(u) = queue.pop_front() {
                for v in 0..self.n {
                    if label[v] == usize::MAX && self.get(u, v) && self.get(v, u) {
                        label[v] = next;
                        queue.push_back(v);
                    }
                }
            }
            next += 1;
        }
        label
    }

    pub fn component_count(&self) -> usize {
        self.components().into_iter().max().map_or(0, |m| m + 1)
    }

    pub fn largest_component(&self) -> usize {
        let labels = self.components();
        let mut sizes = vec![0usize; self.n];
        for l in labels {
            sizes[l] += 1;
        }
        sizes.into_iter().max().unwrap_or(0)
    }

    /// BFS hop counts from `src`; `None` for unreachable nodes.
    pub fn hops_from(&self, src: usize) -> Vec<Option<usize>> {
        let mut hops = vec![None; self.n];
        hops[src] = Some(0);
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            let h = hops[u].unwrap();
            for v in 0..self.n {
                if hops[v].is_none() && self.get(u, v) && self.get(v, u) {
                    hops[v] = Some(h + 1);
                    queue.push_back(v);
                }
            }
        }
        hops
    }

    /// Matrix with node `a` removed; remaining nodes keep their relative order.
    pub fn without(&self, a: usize) -> Self {
        let keep: Vec<usize> = (0..self.n).filter(|&i| i != a).collect();
        let n = keep.len();
        let mut c = vec![false; n * n];
        for (i, &u) in keep.iter().enumerate() {
            for (j, &v) in keep.iter().enumerate() {
                c[i * n + j] = self.get(u, v);
            }
        }
        Self { n, c }
    }
}

/// Breadth-first connectivity; the authoritative test.
pub fn is_globally_connected(c: &ReachabilityMatrix) -> bool {
    c.n <= 1 || c.hops_from(0).iter().all(Option::is_some)
}

/// The matrix-power test: every entry of `C^h` (boolean semiring) is non-zero.
pub fn power_test(c: &ReachabilityMatrix, h: usize) -> bool {
    let n = c.n;
    let mut acc = ReachabilityMatrix::identity(n);
    for _ in 0..h {
        let mut next = vec![false; n * n];
        for i in 0..n {
            for k in 0..n {
                if acc.get(i, k) {
                    for j in 0..n {
                        if c.get(k, j) {
                            next[i * n + j] = true;
                        }
                    }
                }
            }
        }
        acc.c = next;
    }
    acc.c.iter().all(|&v| v)
}

/// Exponent used by the matrix-power connectivity test, `A - K_min`.
pub fn connectivity_exponent(num_uavs: usize, k_min: usize) -> usize {
    num_uavs.saturating_sub(k_min)
}

/// Admissible transmit powers `[p_min, p_max)` for one UAV in one slot,
/// together with the number of nearest UAVs they reach.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerInterval {
    pub p_min: f64,
    pub p_max: f64,
    pub neighbors: usize,
}

/// `p_min[a][n]`, `p_max[a][n]` for every UAV and slot.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PowerIntervalGrid {
    pub p_min: Vec<Vec<f64>>,
    pub p_max: Vec<Vec<f64>>,
}

/// What to do when a required power raise exceeds `P_max`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RaisePolicy {
    /// Fail with [`Error::InfeasibleTopology`].
    Strict,
    /// Skip the raise and keep going; used to re-form a network after a
    /// failure, where a best-effort topology is what gets measured.
    Capped,
}

/// C-TOP state for one slot.
#[derive(Clone, Debug)]
pub struct SlotTopology {
    slot: usize,
    positions: Vec<Point3>,
    caps: Vec<f64>,
    /// `order[a]`: other UAVs by increasing distance, ties by id.
    order: Vec<Vec<usize>>,
    /// `rank[a][b]`: position of `b` in `order[a]`.
    rank: Vec<Vec<usize>>,
    /// `reach[a][r]`: power for `a` to reach `order[a][r]`.
    reach: Vec<Vec<f64>>,
    k: Vec<usize>,
    policy: RaisePolicy,
    residual: Vec<Violation>,
}

impl SlotTopology {
    /// Step 1: each UAV reaches its `k_min` nearest neighbours, plus any
    /// tied in distance with the last of them.
    ///
    /// Fails with [`Error::InfeasibleTopology`] when the `k_min`-th nearest
    /// neighbour is beyond max-power range (strict policy).
    pub fn new(
        positions: &[Point3],
        caps: &[f64],
        radio: &RadioParams,
        k_min: usize,
        slot: usize,
        policy: RaisePolicy,
    ) -> Result<Self> {
        let mut state = Self::unconnected(positions, caps, radio, slot, policy)?;
        let k_min = k_min.min(positions.len().saturating_sub(1));
        for a in 0..positions.len() {
            if !state.raise(a, k_min, "K_min-th nearest neighbour is beyond max-power range")? {
                // Capped: reach as many as the cap allows.
                let affordable = state.reach[a].iter().take_while(|&&p| p <= state.caps[a]).count();
                state.k[a] = state.k[a].max(state.group_end(a, affordable.min(k_min)));
            }
        }
        Ok(state)
    }

    /// State with explicit neighbour counts, for inspection and tests.
    pub fn with_neighbor_counts(positions: &[Point3], caps: &[f64], radio: &RadioParams, counts: &[usize]) -> Result<Self> {
        let mut state = Self::unconnected(positions, caps, radio, 0, RaisePolicy::Strict)?;
        state.k = counts.to_vec();
        Ok(state)
    }

    fn unconnected(positions: &[Point3], caps: &[f64], radio: &RadioParams, slot: usize, policy: RaisePolicy) -> Result<Self> {
        let n = positions.len();
        if caps.len() != n {
            return Err(Error::ShapeMismatch(format!("{} power caps for {n} UAVs", caps.len())));
        }
        let mut order = Vec::with_capacity(n);
        let mut rank = vec![vec![usize::MAX; n]; n];
        let mut reach = Vec::with_capacity(n);
        for a in 0..n {
            let mut others: Vec<(f64, usize)> = (0..n).filter(|&b| b != a).map(|b| (positions[a].dist(&positions[b]), b)).collect();
            if let Some(&(d, _)) = others.iter().find(|(d, _)| !(*d > 0.0)) {
                return Err(Error::ZeroDistance(d));
            }
            others.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            for (r, &(_, b)) in others.iter().enumerate() {
                rank[a][b] = r;
            }
            reach.push(others.iter().map(|&(d, _)| radio::reach_power(d, radio)).collect());
            order.push(others.into_iter().map(|(_, b)| b).collect());
        }
        Ok(Self {
            slot,
            positions: positions.to_vec(),
            caps: caps.to_vec(),
            order,
            rank,
            reach,
            k: vec![0; n],
            policy,
            residual: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn neighbor_count(&self, a: usize) -> usize {
        self.k[a]
    }

    /// Grows `a`'s prefix to at least `count`. Returns `Ok(false)` when the
    /// cap forbids it under [`RaisePolicy::Capped`].
    fn raise(&mut self, a: usize, count: usize, why: &str) -> Result<bool> {
        if count <= self.k[a] {
            return Ok(true);
        }
        let count = self.group_end(a, count);
        let needed = self.reach[a][count - 1];
        if needed > self.caps[a] {
            return match self.policy {
                RaisePolicy::Strict => Err(Error::InfeasibleTopology {
                    uav: a,
                    slot: self.slot,
                    reason: format!("{why}: needs {needed:.6} W, max {:.6} W", self.caps[a]),
                }),
                RaisePolicy::Capped => Ok(false),
            };
        }
        self.k[a] = count;
        Ok(true)
    }

    /// Smallest prefix length `>= count` that does not split neighbours `a`
    /// needs the same power for. No power reaches one of them but not the
    /// other, so prefixes always take equidistant neighbours together.
    fn group_end(&self, a: usize, count: usize) -> usize {
        let reach = &self.reach[a];
        let mut c = count;
        while c > 0 && c < reach.len() && reach[c] == reach[c - 1] {
            c += 1;
        }
        c
    }

    /// Whether the farthest neighbour in `a`'s prefix is the only one at
    /// that power, so the prefix can shrink by one.
    fn last_is_alone(&self, a: usize) -> bool {
        let k = self.k[a];
        k == 1 || (k > 1 && self.reach[a][k - 1] != self.reach[a][k - 2])
    }

    /// Directed predicate: `a` reaches `b` at any power in its interval.
    #[inline]
    pub fn reaches(&self, a: usize, b: usize) -> bool {
        a != b && self.rank[a][b] < self.k[a]
    }

    pub fn interval(&self, a: usize) -> PowerInterval {
        let k = self.k[a];
        let p_min = if k == 0 { 0.0 } else { self.reach[a][k - 1] };
        let next = self.reach[a].get(k).copied().unwrap_or(f64::INFINITY);
        PowerInterval { p_min, p_max: next.min(self.caps[a]), neighbors: k }
    }

    pub fn intervals(&self) -> Vec<PowerInterval> {
        (0..self.len()).map(|a| self.interval(a)).collect()
    }

    /// Directed reach matrix (the draft before repairs).
    pub fn draft(&self) -> ReachabilityMatrix {
        let n = self.len();
        let mut m = ReachabilityMatrix::identity(n);
        for a in 0..n {
            for b in 0..n {
                if self.reaches(a, b) {
                    m.set(a, b, true);
                }
            }
        }
        m
    }

    /// Links present in both directions.
    pub fn matrix(&self) -> ReachabilityMatrix {
        let n = self.len();
        let mut m = ReachabilityMatrix::identity(n);
        for a in 0..n {
            for b in (a + 1)..n {
                if self.reaches(a, b) && self.reaches(b, a) {
                    m.link(a, b, true);
                }
            }
        }
        m
    }

    /// Step 2: for every one-way link `b -> a`, raise `a` until it reaches
    /// `b` (which also extends `a`'s upper bound to its next neighbour).
    /// Iterates to a fixed point; never removes a link.
    pub fn symmetrize(&mut self) -> Result<()> {
        let n = self.len();
        loop {
            let mut changed = false;
            for a in 0..n {
                for b in 0..n {
                    if self.reaches(b, a) && !self.reaches(a, b) && self.raise(a, self.rank[a][b] + 1, "cannot answer a one-way link")? {
                        changed = true;
                    }
                }
            }
            if !changed {
                return Ok(());
            }
        }
    }

    /// Step 3: while the graph is disconnected, link the globally shortest
    /// pair of UAVs in different components and repair one-way links.
    pub fn connect_global(&mut self) -> Result<()> {
        loop {
            let labels = self.matrix().components();
            if labels.iter().all(|&l| l == 0) {
                return Ok(());
            }
            let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
            for a in 0..self.len() {
                for b in (a + 1)..self.len() {
                    if labels[a] != labels[b] {
                        pairs.push((self.positions[a].dist(&self.positions[b]), a, b));
                    }
                }
            }
            pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2).cmp(&(y.1, y.2))));
            let bridge = match self.policy {
                RaisePolicy::Strict => pairs.first().copied(),
                RaisePolicy::Capped => pairs.iter().copied().find(|&(_, a, b)| {
                    self.reach[a][self.rank[a][b]] <= self.caps[a] && self.reach[b][self.rank[b][a]] <= self.caps[b]
                }),
            };
            let Some((_, a, b)) = bridge else {
                return Ok(());
            };
            self.raise(a, self.rank[a][b] + 1, "cannot bridge components")?;
            self.raise(b, self.rank[b][a] + 1, "cannot bridge components")?;
            self.symmetrize()?;
        }
    }

    /// Step 4: trims UAVs with more than `k_min + delta` neighbours by
    /// dropping their farthest link. A link `(a, f)` is dropped only when it
    /// is the farthest link of both ends, with no other neighbour at the
    /// same distance from either (so both keep a nearest-first
    /// neighbour set and power intervals stay consistent), both ends keep at
    /// least `k_min` neighbours and the graph stays connected. A UAV whose
    /// farthest link cannot go keeps its surplus; that is recorded as a
    /// residual violation.
    pub fn prune(&mut self, k_min: usize, delta: usize) {
        let limit = k_min + delta;
        for a in 0..self.len() {
            while self.k[a] > limit {
                let f = self.order[a][self.k[a] - 1];
                let mutual = self.k[f] > 0 && self.order[f][self.k[f] - 1] == a;
                if !mutual || !self.last_is_alone(a) || !self.last_is_alone(f) || self.k[a] - 1 < k_min || self.k[f] - 1 < k_min {
                    break;
                }
                let mut trial = self.matrix();
                trial.link(a, f, false);
                if !is_globally_connected(&trial) {
                    break;
                }
                self.k[a] -= 1;
                self.k[f] -= 1;
            }
            if self.k[a] > limit {
                self.residual.push(Violation::ExtraNeighbors { slot: self.slot, uav: a, degree: self.k[a], limit });
            }
        }
    }

    pub fn residual_violations(&self) -> &[Violation] {
        &self.residual
    }

    /// Runs steps 1-4 for one slot.
    pub fn optimize(
        positions: &[Point3],
        caps: &[f64],
        radio: &RadioParams,
        k_min: usize,
        delta: usize,
        slot: usize,
        policy: RaisePolicy,
    ) -> Result<Self> {
        let mut state = Self::new(positions, caps, radio, k_min, slot, policy)?;
        state.symmetrize()?;
        state.connect_global()?;
        state.prune(k_min, delta);
        Ok(state)
    }
}

/// Step 1 as a standalone operation: the initial interval of every UAV.
pub fn power_intervals_slot(positions: &[Point3], scenario: &Scenario, slot: usize) -> Result<Vec<PowerInterval>> {
    let caps: Vec<f64> = scenario.uavs.iter().map(|u| u.p_max_w).collect();
    Ok(SlotTopology::new(positions, &caps, &scenario.radio, scenario.k_min, slot, RaisePolicy::Strict)?.intervals())
}

/// Directed draft induced by a set of intervals: `a -> b` iff `b` is among
/// the `neighbors` nearest UAVs of `a` (distance, then id). Without
/// distance ties this is exactly `p_min[a] * h[a][b] >= gamma`.
pub fn adjacency_from_intervals(positions: &[Point3], intervals: &[PowerInterval], radio: &RadioParams) -> Result<ReachabilityMatrix> {
    let caps: Vec<f64> = intervals.iter().map(|iv| iv.p_max.max(iv.p_min)).collect();
    let counts: Vec<usize> = intervals.iter().map(|iv| iv.neighbors).collect();
    Ok(SlotTopology::with_neighbor_counts(positions, &caps, radio, &counts)?.draft())
}

/// Optimized topology for every slot of a mission.
#[derive(Clone, Debug, PartialEq)]
pub struct TopologySeries {
    pub matrices: Vec<ReachabilityMatrix>,
    pub intervals: PowerIntervalGrid,
    /// Surplus neighbours that pruning could not remove safely.
    pub residual: Vec<Violation>,
}

impl TopologySeries {
    pub fn num_slots(&self) -> usize {
        self.matrices.len()
    }

    /// Writes `slot,a,b` rows, one per undirected link.
    pub fn write_edges_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        write_edges_csv(&self.matrices, out)
    }

    /// Writes `slot,uav,p_min_w,p_max_w` rows.
    pub fn write_intervals_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["slot", "uav", "p_min_w", "p_max_w"])?;
        for n in 0..self.num_slots() {
            for a in 0..self.intervals.p_min.len() {
                w.write_record([n.to_string(), a.to_string(), self.intervals.p_min[a][n].to_string(), self.intervals.p_max[a][n].to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn write_edges_csv<W: std::io::Write>(matrices: &[ReachabilityMatrix], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["slot", "a", "b"])?;
    for (n, m) in matrices.iter().enumerate() {
        for (a, b) in m.edges() {
            w.write_record([n.to_string(), a.to_string(), b.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// C-TOP over every slot boundary of a mission.
pub fn optimize_series(pos: &PositionSeries, scenario: &Scenario) -> Result<TopologySeries> {
    let caps: Vec<f64> = scenario.uavs.iter().map(|u| u.p_max_w).collect();
    let slots: Vec<SlotTopology> = (0..pos.num_slots())
        .into_par_iter()
        .map(|n| SlotTopology::optimize(&pos.slot(n), &caps, &scenario.radio, scenario.k_min, scenario.delta, n, RaisePolicy::Strict))
        .collect::<Result<_>>()?;
    let a_count = pos.num_uavs();
    let mut intervals = PowerIntervalGrid { p_min: vec![Vec::with_capacity(slots.len()); a_count], p_max: vec![Vec::with_capacity(slots.len()); a_count] };
    let mut residual = Vec::new();
    let mut matrices = Vec::with_capacity(slots.len());
    for s in &slots {
        for (a, iv) in s.intervals().into_iter().enumerate() {
            intervals.p_min[a].push(iv.p_min);
            intervals.p_max[a].push(iv.p_max);
        }
        residual.extend_from_slice(s.residual_violations());
        matrices.push(s.matrix());
    }
    Ok(TopologySeries { matrices, intervals, residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn radio() -> RadioParams {
        RadioParams { carrier_frequency_hz: 5.8e9, bandwidth_hz: 83.5e6, noise_power_w: 1e-14, sensitivity_w: 1e-10, mu_f: 1.693e-5 }
    }

    fn line(xs: &[f64]) -> Vec<Point3> {
        xs.iter().map(|&x| Point3::new(x, 0.0, 100.0)).collect()
    }

    #[test]
    fn equidistant_neighbours_join_together() {
        // each corner of a square has two neighbours at 100 m
        let pos = vec![Point3::new(0.0, 0.0, 100.0), Point3::new(100.0, 0.0, 100.0), Point3::new(0.0, 100.0, 100.0), Point3::new(100.0, 100.0, 100.0)];
        let st = SlotTopology::optimize(&pos, &[1.0; 4], &radio(), 1, 0, 0, RaisePolicy::Strict).unwrap();
        for a in 0..4 {
            let iv = st.interval(a);
            assert_eq!(iv.neighbors, 2);
            assert!(iv.p_min < iv.p_max);
        }
        assert_eq!(st.matrix().edges(), vec![(0, 1), (0, 2), (1, 3), (2, 3)]);
    }

    #[test]
    fn minimum_power_from_kth_neighbour() {
        // 2nd nearest at 300 m
        let pos = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(100.0, 0.0, 0.0), Point3::new(0.0, 300.0, 0.0), Point3::new(0.0, -350.0, 0.0)];
        let st = SlotTopology::new(&pos, &[1.0; 4], &radio(), 2, 0, RaisePolicy::Strict).unwrap();
        let iv = st.interval(0);
        assert!((iv.p_min - 0.5316).abs() < 1e-4, "{}", iv.p_min);
        assert!((iv.p_max - 1e-10 * 350.0f64.powi(2) / 1.693e-5).abs() < 1e-9);
        assert_eq!(iv.neighbors, 2);
    }

    #[test]
    fn upper_bound_clamped_to_max_power() {
        let pos = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(100.0, 0.0, 0.0), Point3::new(0.0, 120.0, 0.0), Point3::new(0.0, -2000.0, 0.0)];
        let st = SlotTopology::new(&pos, &[1.0, 1.0, 1.0, 100.0], &radio(), 2, 0, RaisePolicy::Strict).unwrap();
        assert_eq!(st.interval(0).p_max, 1.0);
        // A = K_min + 1: no (K_min+1)-th neighbour at all
        let st = SlotTopology::new(&pos[..3], &[1.0; 3], &radio(), 2, 0, RaisePolicy::Strict).unwrap();
        assert_eq!(st.interval(0).p_max, 1.0);
    }

    #[test]
    fn out_of_range_neighbour_is_infeasible() {
        let pos = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(100.0, 0.0, 0.0), Point3::new(5000.0, 0.0, 0.0)];
        let err = SlotTopology::new(&pos, &[1.0; 3], &radio(), 1, 7, RaisePolicy::Strict).unwrap_err();
        assert!(matches!(err, Error::InfeasibleTopology { uav: 2, slot: 7, .. }), "{err:?}");
    }

    #[test]
    fn draft_out_degree_is_k_min() {
        let pos: Vec<Point3> = (0..7).map(|i| Point3::new((i * 37 % 11) as f64 * 20.0 + i as f64 * 0.37, (i * 53 % 7) as f64 * 25.0 + (i * i) as f64 * 0.11, 0.0)).collect();
        let st = SlotTopology::new(&pos, &[5.0; 7], &radio(), 2, 0, RaisePolicy::Strict).unwrap();
        let draft = st.draft();
        for a in 0..7 {
            assert_eq!(draft.degree(a), 2);
        }
    }

    #[test]
    fn collinear_draft_is_asymmetric() {
        let pos = line(&[0.0, 10.0, 25.0, 45.0]);
        let st = SlotTopology::new(&pos, &[1.0; 4], &radio(), 1, 0, RaisePolicy::Strict).unwrap();
        let draft = st.draft();
        assert!(draft.get(0, 1));
        assert!(draft.get(3, 2));
        assert!(!draft.get(2, 3));
        assert!(!draft.is_symmetric());
    }

    #[test]
    fn square_draft_is_symmetric() {
        let pos = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(100.0, 0.0, 0.0), Point3::new(100.0, 100.0, 0.0), Point3::new(0.0, 100.0, 0.0)];
        let st = SlotTopology::new(&pos, &[1.0; 4], &radio(), 2, 0, RaisePolicy::Strict).unwrap();
        let draft = st.draft();
        assert!(draft.is_symmetric());
        assert_eq!(draft.edges(), vec![(0, 1), (0, 3), (1, 2), (2, 3)]);
    }

    #[test]
    fn one_way_link_repaired() {
        // a=0 with close neighbour 1; f=2 hears 0 as its nearest but 0 does not reach 2.
        let pos = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(30.0, 0.0, 0.0), Point3::new(-50.0, 0.0, 0.0), Point3::new(-200.0, 0.0, 0.0)];
        let mut st = SlotTopology::new(&pos, &[1.0; 4], &radio(), 1, 0, RaisePolicy::Strict).unwrap();
        assert!(st.reaches(2, 0) && !st.reaches(0, 2));
        let before = st.draft();
        st.symmetrize().unwrap();
        let after = st.matrix();
        assert!(after.get(0, 2) && after.get(2, 0));
        assert!(after.is_symmetric());
        for a in 0..4 {
            for b in 0..4 {
                if before.get(a, b) {
                    assert!(st.reaches(a, b) || a == b);
                }
            }
        }
        // p_max of 0 now extends to its next neighbour beyond 2 (node 3 at 200 m)
        assert!((st.interval(0).p_max - radio::reach_power(200.0, &radio())).abs() < 1e-12);
    }

    #[test]
    fn symmetric_fixed_point_unchanged() {
        let pos = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(100.0, 0.0, 0.0), Point3::new(100.0, 100.0, 0.0), Point3::new(0.0, 100.0, 0.0)];
        let mut st = SlotTopology::new(&pos, &[1.0; 4], &radio(), 2, 0, RaisePolicy::Strict).unwrap();
        let before = (st.draft(), st.intervals());
        st.symmetrize().unwrap();
        assert_eq!(before, (st.draft(), st.intervals()));
    }

    #[test]
    fn matrix_power_examples() {
        let path = ReachabilityMatrix::from_edges(3, &[(0, 1), (1, 2)]);
        assert!(power_test(&path, 2));
        assert!(!power_test(&path, 1));
        assert!(is_globally_connected(&path));
        let pair = ReachabilityMatrix::identity(2);
        assert!(!power_test(&pair, 1));
        assert!(!is_globally_connected(&pair));
        for n in 2..7 {
            let edges: Vec<_> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
            let k = ReachabilityMatrix::from_edges(n, &edges);
            assert!(is_globally_connected(&k));
            assert!(power_test(&k, 1));
        }
    }

    fn clusters(centers: &[(f64, f64)]) -> Vec<Point3> {
        let offsets = [(0.0, 0.0), (40.0, 10.0), (15.0, 45.0)];
        centers.iter().flat_map(|&(cx, cy)| offsets.iter().map(move |&(dx, dy)| Point3::new(cx + dx, cy + dy, 0.0))).collect()
    }

    #[test]
    fn two_clusters_one_bridge() {
        let pos = clusters(&[(0.0, 0.0), (440.0, 0.0)]);
        let mut st = SlotTopology::new(&pos, &[1.0; 6], &radio(), 2, 0, RaisePolicy::Strict).unwrap();
        st.symmetrize().unwrap();
        let before = st.matrix();
        assert_eq!(before.component_count(), 2);
        st.connect_global().unwrap();
        let after = st.matrix();
        assert!(is_globally_connected(&after));
        // brute force: closest cross pair
        let mut best = (f64::INFINITY, 0, 0);
        for a in 0..3 {
            for b in 3..6 {
                let d = pos[a].dist(&pos[b]);
                if d < best.0 {
                    best = (d, a, b);
                }
            }
        }
        let added: Vec<_> = after.edges().into_iter().filter(|&(a, b)| !before.get(a, b)).collect();
        assert_eq!(added, vec![(best.1, best.2)]);
    }

    #[test]
    fn three_clusters_two_bridges() {
        let pos = clusters(&[(0.0, 0.0), (420.0, 0.0), (0.0, 430.0)]);
        let mut st = SlotTopology::new(&pos, &[2.0; 9], &radio(), 2, 0, RaisePolicy::Strict).unwrap();
        st.symmetrize().unwrap();
        let before = st.matrix();
        assert_eq!(before.component_count(), 3);
        st.connect_global().unwrap();
        let after = st.matrix();
        assert!(is_globally_connected(&after));
        let added = after.edges().len() - before.edges().len();
        assert_eq!(added, 2);
    }

    #[test]
    fn bridge_beyond_range_is_infeasible() {
        let pos = clusters(&[(0.0, 0.0), (2000.0, 0.0)]);
        let mut st = SlotTopology::new(&pos, &[1.0; 6], &radio(), 2, 3, RaisePolicy::Strict).unwrap();
        st.symmetrize().unwrap();
        assert!(matches!(st.connect_global(), Err(Error::InfeasibleTopology { slot: 3, .. })));
        let mut capped = SlotTopology::new(&pos, &[1.0; 6], &radio(), 2, 3, RaisePolicy::Capped).unwrap();
        capped.symmetrize().unwrap();
        capped.connect_global().unwrap();
        assert_eq!(capped.matrix().component_count(), 2);
    }

    /// Center 0 with two close pairs on either side and one near node.
    fn star_layout() -> (Vec<Point3>, Vec<usize>) {
        let pos = vec![
            Point3::new(0.0, 0.0, 0.0),  // 0 center
            Point3::new(0.0, 1.0, 0.0),  // 1 near node
            Point3::new(5.0, 0.0, 0.0),  // 2 p1
            Point3::new(6.0, 0.0, 0.0),  // 3 p2
            Point3::new(-5.5, 0.0, 0.0), // 4 q1
            Point3::new(-6.5, 0.0, 0.0), // 5 q2
        ];
        // center reaches everybody, pairs reach partner and center, 1 reaches center
        (pos, vec![5, 1, 2, 2, 2, 2])
    }

    fn exhaustive_min_removals(m: &ReachabilityMatrix, node: usize, k_min: usize, limit: usize) -> usize {
        let incident: Vec<(usize, usize)> = m.edges().into_iter().filter(|&(a, b)| a == node || b == node).collect();
        let mut best = usize::MAX;
        for mask in 0u32..(1 << incident.len()) {
            let mut t = m.clone();
            for (i, &(a, b)) in incident.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    t.link(a, b, false);
                }
            }
            let ok = t.degree(node) <= limit && (0..t.len()).all(|a| t.degree(a) >= k_min) && is_globally_connected(&t);
            if ok {
                best = best.min(mask.count_ones() as usize);
            }
        }
        best
    }

    #[test]
    fn prune_removes_two_redundant_links() {
        let (pos, counts) = star_layout();
        let r = RadioParams { mu_f: 1.0, sensitivity_w: 1.0, ..radio() };
        let mut st = SlotTopology::with_neighbor_counts(&pos, &[1e6; 6], &r, &counts).unwrap();
        let m = st.matrix();
        assert_eq!(m, st.draft(), "layout must be mutually consistent");
        assert_eq!(m.degree(0), 5);
        let (k_min, delta) = (1, 2);
        let expected = exhaustive_min_removals(&m, 0, k_min, k_min + delta);
        st.prune(k_min, delta);
        let pruned = st.matrix();
        assert_eq!(m.edges().len() - pruned.edges().len(), expected);
        assert_eq!(expected, 2);
        assert!(!pruned.get(0, 3) && !pruned.get(0, 5));
        assert!(st.residual_violations().is_empty());
    }

    #[test]
    fn prune_keeps_bridge_and_records_violation() {
        // center whose far links are bridges to leaves
        let pos = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 2.0, 0.0), Point3::new(-3.0, 0.0, 0.0)];
        let r = RadioParams { mu_f: 1.0, sensitivity_w: 1.0, ..radio() };
        let mut st = SlotTopology::with_neighbor_counts(&pos, &[1e6; 4], &r, &[3, 1, 1, 1]).unwrap();
        let before = st.matrix();
        st.prune(1, 1);
        assert_eq!(st.matrix(), before);
        assert_eq!(st.residual_violations().len(), 1);
    }

    #[test]
    fn nothing_to_prune() {
        let pos = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(100.0, 0.0, 0.0), Point3::new(100.0, 100.0, 0.0), Point3::new(0.0, 100.0, 0.0)];
        let mut st = SlotTopology::optimize(&pos, &[1.0; 4], &radio(), 2, 0, 0, RaisePolicy::Strict).unwrap();
        let m = st.matrix();
        st.prune(2, 0);
        assert_eq!(m, st.matrix());
    }
}
