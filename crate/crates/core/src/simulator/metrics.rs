//! Network metrics: throughput series, connectivity rate and average hops.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::PositionSeries;
use crate::power::PowerSchedule;
use crate::radio;
use crate::scenario::RadioParams;
use crate::topology::ReachabilityMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThroughputSeries {
    /// bit/s summed over the links of each slot.
    pub per_slot: Vec<f64>,
    pub total: f64,
}

/// Sum over links `(a, b)`, `a < b`, of the rate `a` achieves at its
/// scheduled power.
pub fn throughput_series(
    matrices: &[ReachabilityMatrix],
    powers: &PowerSchedule,
    pos: &PositionSeries,
    radio: &RadioParams,
) -> Result<ThroughputSeries> {
    if matrices.len() != pos.num_slots() || powers.p.len() != pos.num_uavs() {
        return Err(Error::ShapeMismatch("topology, powers and positions disagree".into()));
    }
    let mut per_slot = Vec::with_capacity(matrices.len());
    for (n, m) in matrices.iter().enumerate() {
        let here = pos.slot(n);
        let mut sum = 0.0;
        for (a, b) in m.edges() {
            let h = radio::path_loss(here[a].dist(&here[b]), radio)?.h;
            sum += radio::link_throughput(powers.p[a][n], h, radio);
        }
        per_slot.push(sum);
    }
    let total = per_slot.iter().sum();
    Ok(ThroughputSeries { per_slot, total })
}

/// Mean BFS hop count over all unordered pairs; `None` when some pair is
/// unreachable.
pub fn slot_hops(m: &ReachabilityMatrix) -> Option<f64> {
    let n = m.len();
    if n < 2 {
        return Some(0.0);
    }
    let mut sum = 0usize;
    for a in 0..n {
        let hops = m.hops_from(a);
        for h in &hops[a + 1..] {
            sum += (*h)?;
        }
    }
    Some(sum as f64 / (n * (n - 1) / 2) as f64)
}

/// Per-slot hops and their mean; the mean is `None` ("inf") as soon as one
/// slot is disconnected.
pub fn average_hops(matrices: &[ReachabilityMatrix]) -> (Vec<Option<f64>>, Option<f64>) {
    let per_slot: Vec<Option<f64>> = matrices.iter().map(slot_hops).collect();
    let mean = per_slot.iter().try_fold(0.0, |acc, h| h.map(|h| acc + h)).map(|s| s / per_slot.len().max(1) as f64);
    (per_slot, mean)
}

/// How the network reacts when a UAV drops out.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureModel {
    /// Survivors keep their links; the failed node's links vanish.
    #[default]
    Frozen,
    /// The topology algorithm re-runs over the survivors.
    Recompute,
}

/// Connectivity rate after removing each UAV in turn from slot `n_dc` on.
///
/// `survivors(a, n)` returns the slot-`n` topology over the `A - 1` UAVs left
/// once `a` is gone. Each term is the largest component over `A - 1`.
pub fn connectivity_rate<F>(num_uavs: usize, n_slots: usize, n_dc: usize, survivors: F) -> Result<f64>
where
    F: Fn(usize, usize) -> Result<ReachabilityMatrix> + Sync,
{
    if n_dc < 1 || n_dc > n_slots {
        return Err(Error::validation("n_dc", format!("must lie in 1..={n_slots}, got {n_dc}")));
    }
    if num_uavs < 2 {
        return Err(Error::validation("uavs", "connectivity rate needs at least 2 UAVs"));
    }
    let pairs: Vec<(usize, usize)> = (0..num_uavs).flat_map(|a| (n_dc..=n_slots).map(move |n| (a, n))).collect();
    let fractions: Vec<f64> = pairs
        .par_iter()
        .map(|&(a, n)| {
            let m = survivors(a, n)?;
            if m.len() != num_uavs - 1 {
                return Err(Error::ShapeMismatch(format!("survivor topology has {} nodes, expected {}", m.len(), num_uavs - 1)));
            }
            Ok(m.largest_component() as f64 / (num_uavs - 1) as f64)
        })
        .collect::<Result<_>>()?;
    Ok(fractions.iter().sum::<f64>() / pairs.len() as f64)
}

/// Connectivity rate when survivors keep their links.
pub fn connectivity_rate_frozen(matrices: &[ReachabilityMatrix], n_dc: usize) -> Result<f64> {
    let a = matrices.first().map_or(0, ReachabilityMatrix::len);
    let last = matrices.len().saturating_sub(1);
    connectivity_rate(a, last, n_dc, |u, n| Ok(matrices[n].without(u)))
}
