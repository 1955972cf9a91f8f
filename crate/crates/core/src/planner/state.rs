//! Sequential decoding state and the feasibility mask.

use crate::error::{Error, Result};
use crate::planner::feasibility::PlanState;
use crate::planner::instance::Instance;

/// Where a rollout stands: the token sequence so far, which tokens are used
/// and the plan they induce. UAVs are opened in order; UAV 0 is open from
/// the start and choosing UAV `a + 1`'s start token closes UAV `a`'s route.
#[derive(Clone, Debug)]
pub struct DecoderState<'a> {
    pub instance: &'a Instance,
    pub sequence: Vec<usize>,
    pub allocated: Vec<bool>,
    pub current: usize,
    pub remaining: usize,
    pub plan: PlanState<'a>,
}

impl<'a> DecoderState<'a> {
    pub fn new(instance: &'a Instance) -> Self {
        let mut allocated = vec![false; instance.num_tokens()];
        allocated[0] = true;
        Self {
            instance,
            sequence: vec![0],
            allocated,
            current: 0,
            remaining: instance.num_waypoints(),
            plan: PlanState::new(&instance.scenario),
        }
    }

    pub fn is_done(&self) -> bool {
        self.sequence.len() == self.instance.num_tokens()
    }

    pub fn step(&self) -> usize {
        self.sequence.len()
    }

    pub fn last_token(&self) -> usize {
        *self.sequence.last().unwrap()
    }

    /// Applies a token allowed by [`feasibility_mask`].
    pub fn apply(&mut self, tok: usize) {
        debug_assert!(!self.allocated[tok]);
        self.allocated[tok] = true;
        self.sequence.push(tok);
        if self.instance.is_start_token(tok) {
            self.current = tok;
        } else {
            self.plan.append(self.current, self.instance.token_node(tok));
            self.remaining -= 1;
        }
    }

    /// Remaining flight-time fraction of the open UAV.
    pub fn remaining_time_fraction(&self) -> f64 {
        let t_max = self.instance.scenario.uavs[self.current].t_max_s;
        ((t_max - self.plan.elapsed(self.current)) / t_max).clamp(0.0, 1.0)
    }

    /// Smallest max-power degree ahead, as a fraction of `A - 1`.
    pub fn min_degree_fraction(&self) -> f64 {
        let others = self.instance.num_uavs().saturating_sub(1);
        if others == 0 {
            return 1.0;
        }
        self.plan.min_degree_ahead(self.current) as f64 / others as f64
    }

    /// The dead-end error for the current state.
    pub fn dead_end(&self) -> Error {
        Error::DeadEnd { step: self.step(), remaining: self.remaining, partial: self.instance.routes_from_sequence(&self.sequence).routes }
    }
}

/// Selectable tokens: unvisited waypoints the open UAV can fly to next and,
/// while UAVs remain unopened, the next UAV's start token. Once every
/// waypoint is placed, only the remaining start tokens are left, in order.
pub fn feasibility_mask(state: &DecoderState) -> Vec<bool> {
    let inst = state.instance;
    let a_count = inst.num_uavs();
    let mut mask = vec![false; inst.num_tokens()];
    if state.is_done() {
        return mask;
    }
    let next = state.current + 1;
    if next < a_count {
        mask[next] = true;
    }
    if state.remaining > 0 {
        for (tok, m) in mask.iter_mut().enumerate().skip(a_count) {
            *m = !state.allocated[tok] && state.plan.can_append(state.current, inst.token_node(tok));
        }
    }
    mask
}

/// [`feasibility_mask`] that reports a dead end when nothing is selectable.
pub fn checked_mask(state: &DecoderState) -> Result<Vec<bool>> {
    let mask = feasibility_mask(state);
    if !state.is_done() && !mask.iter().any(|&m| m) {
        return Err(state.dead_end());
    }
    Ok(mask)
}
