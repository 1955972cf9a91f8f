//! Exact minimum-length plan by branch and bound over decoder moves.

use crate::error::{Error, Result};
use crate::kinematics::TrajectorySet;
use crate::planner::instance::Instance;
use crate::planner::state::{feasibility_mask, DecoderState};

pub const MAX_WAYPOINTS: usize = 9;
pub const MAX_UAVS: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct OraclePlan {
    pub plan: TrajectorySet,
    pub sequence: Vec<usize>,
    pub length: f64,
}

/// Shortest plan among all the decoder can produce under the feasibility
/// mask. Limited to [`MAX_WAYPOINTS`] waypoints and [`MAX_UAVS`] UAVs.
pub fn exhaustive_oracle(instance: &Instance) -> Result<OraclePlan> {
    if instance.num_waypoints() > MAX_WAYPOINTS || instance.num_uavs() > MAX_UAVS {
        return Err(Error::InstanceTooLarge(format!(
            "{} waypoints and {} UAVs (limits {MAX_WAYPOINTS} and {MAX_UAVS})",
            instance.num_waypoints(),
            instance.num_uavs()
        )));
    }
    let n = instance.num_tokens();
    let dist: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| instance.token_point(i).dist(&instance.token_point(j))).collect()).collect();
    let mut search = Search { instance, dist, best: None };
    search.dfs(DecoderState::new(instance));
    let (length, sequence) = search.best.ok_or_else(|| Error::NoFeasiblePlan("every completion violates the mask".into()))?;
    let mut full = sequence.clone();
    // trailing start tokens of UAVs that never fly
    for a in 0..instance.num_uavs() {
        if !full.contains(&a) {
            full.push(a);
        }
    }
    Ok(OraclePlan { plan: instance.routes_from_sequence(&full), sequence: full, length })
}

struct Search<'a> {
    instance: &'a Instance,
    dist: Vec<Vec<f64>>,
    best: Option<(f64, Vec<usize>)>,
}

impl Search<'_> {
    /// Each remaining waypoint is entered once, by an edge at least as long
    /// as its nearest possible predecessor.
    fn lower_bound(&self, st: &DecoderState) -> f64 {
        let inst = self.instance;
        let a = inst.num_uavs();
        let last = st.last_token();
        let mut lb = st.plan.length();
        for w in a..inst.num_tokens() {
            if st.allocated[w] {
                continue;
            }
            let mut m = self.dist[last][w];
            for p in 0..inst.num_tokens() {
                if p != w && !st.allocated[p] {
                    m = m.min(self.dist[p][w]);
                }
            }
            lb += m;
        }
        lb
    }

    fn dfs(&mut self, st: DecoderState) {
        if st.remaining == 0 {
            let len = st.plan.length();
            if self.best.as_ref().is_none_or(|(b, _)| len < *b) {
                self.best = Some((len, st.sequence.clone()));
            }
            return;
        }
        if let Some((b, _)) = &self.best {
            if self.lower_bound(&st) >= *b {
                return;
            }
        }
        let mask = feasibility_mask(&st);
        let last = st.last_token();
        let mut moves: Vec<usize> = (0..mask.len()).filter(|&t| mask[t]).collect();
        // waypoints nearest first, closing the route last
        moves.sort_by(|&x, &y| {
            let kx = (self.instance.is_start_token(x), self.dist[last][x]);
            let ky = (self.instance.is_start_token(y), self.dist[last][y]);
            kx.0.cmp(&ky.0).then(kx.1.total_cmp(&ky.1)).then(x.cmp(&y))
        });
        for tok in moves {
            let mut next = st.clone();
            next.apply(tok);
            self.dfs(next);
        }
    }
}
