//! Throughput-maximizing transmit powers over fixed C-TOP topologies.
//!
//! With the topology fixed, UAV `a`'s power only enters the rate of the
//! links it transmits on, so the problem splits per UAV:
//!
//! ```text
//! max  sum_n sum_b B log2(1 + p_n h_{b,n} / N0)
//! s.t. lo_n <= p_n <= hi_n,   sum_n dt p_n <= E
//! ```
//!
//! Each link `a < b` is credited to its lower-index end. The per-slot
//! objective is strictly concave, so the dual is one-dimensional: for an
//! energy price `lambda` each slot solves `marginal_n(p) = lambda dt` on
//! its box, and `lambda` is found by bisection.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kinematics::PositionSeries;
use crate::radio;
use crate::scenario::{RadioParams, Scenario};
use crate::topology::TopologySeries;

const DUAL_ITERATIONS: usize = 200;
const PRIMAL_ITERATIONS: usize = 200;

/// `p[a][n]` in W for every UAV and slot boundary.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PowerSchedule {
    pub p: Vec<Vec<f64>>,
}

impl PowerSchedule {
    /// Energy spent by each UAV, `sum_n dt p[a][n]`.
    pub fn energy(&self, slot_duration: f64) -> Vec<f64> {
        self.p.iter().map(|row| row.iter().map(|&p| slot_duration * p).sum()).collect()
    }

    /// Writes `slot,uav,p_w` rows.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["slot", "uav", "p_w"])?;
        let slots = self.p.first().map_or(0, Vec::len);
        for n in 0..slots {
            for (a, row) in self.p.iter().enumerate() {
                w.write_record([n.to_string(), a.to_string(), row[n].to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyBudget {
    pub e_max_j: f64,
    pub slot_duration_s: f64,
}

/// One UAV's power problem: per-slot boxes and the gains of the links it
/// is credited with.
#[derive(Clone, Debug, PartialEq)]
pub struct UavPowerProblem {
    pub uav: usize,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// `gains[n]`: channel gains of the credited links in slot `n`.
    pub gains: Vec<Vec<f64>>,
    pub budget: EnergyBudget,
    pub bandwidth_hz: f64,
    pub noise_power_w: f64,
}

impl UavPowerProblem {
    pub fn num_slots(&self) -> usize {
        self.lo.len()
    }

    /// Throughput of slot `n` at power `p`, bit/s.
    pub fn slot_rate(&self, n: usize, p: f64) -> f64 {
        let scale = self.bandwidth_hz / std::f64::consts::LN_2;
        self.gains[n].iter().map(|&h| scale * (p * h / self.noise_power_w).ln_1p()).sum()
    }

    /// `d rate / d p` for slot `n`: `(B / ln 2) sum_b h_b / (N0 + p h_b)`.
    pub fn marginal(&self, n: usize, p: f64) -> f64 {
        let scale = self.bandwidth_hz / std::f64::consts::LN_2;
        scale * self.gains[n].iter().map(|&h| h / (self.noise_power_w + p * h)).sum::<f64>()
    }

    pub fn objective(&self, p: &[f64]) -> f64 {
        p.iter().enumerate().map(|(n, &pn)| self.slot_rate(n, pn)).sum()
    }

    pub fn energy(&self, p: &[f64]) -> f64 {
        p.iter().map(|&pn| self.budget.slot_duration_s * pn).sum()
    }

    /// Slot power minimizing `rate - lambda dt p` on the box.
    fn best_response(&self, n: usize, lambda: f64) -> f64 {
        let (lo, hi) = (self.lo[n], self.hi[n]);
        if self.gains[n].is_empty() || hi <= lo {
            // flat objective: extra power buys nothing
            return lo;
        }
        let target = lambda * self.budget.slot_duration_s;
        if self.marginal(n, hi) >= target {
            return hi;
        }
        if self.marginal(n, lo) <= target {
            return lo;
        }
        let (mut a, mut b) = (lo, hi);
        for _ in 0..PRIMAL_ITERATIONS {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if self.marginal(n, mid) > target {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    }

    fn powers_at(&self, lambda: f64) -> Vec<f64> {
        (0..self.num_slots()).map(|n| self.best_response(n, lambda)).collect()
    }

    /// Relative KKT stationarity residual of `p` with energy price `lambda`.
    ///
    /// Interior slots contribute `|marginal - lambda dt| / max(marginal,
    /// lambda dt)`; slots at a bound contribute only a sign violation of
    /// the bound multiplier. Complementary slackness on the energy
    /// constraint contributes `lambda * slack / (marginal scale)`.
    pub fn kkt_residual(&self, p: &[f64], lambda: f64) -> f64 {
        let dt = self.budget.slot_duration_s;
        let target = lambda * dt;
        let mut worst: f64 = 0.0;
        let mut scale: f64 = target;
        for (n, &pn) in p.iter().enumerate() {
            if self.gains[n].is_empty() {
                continue;
            }
            let g = self.marginal(n, pn);
            scale = scale.max(g);
            let denom = g.max(target).max(f64::MIN_POSITIVE);
            let at_lo = pn <= self.lo[n];
            let at_hi = pn >= self.hi[n];
            let r = if at_lo && at_hi {
                0.0
            } else if at_lo {
                // multiplier of the lower bound is target - g >= 0
                (g - target).max(0.0) / denom
            } else if at_hi {
                (target - g).max(0.0) / denom
            } else {
                (g - target).abs() / denom
            };
            worst = worst.max(r);
        }
        if lambda > 0.0 && scale > 0.0 {
            let slack = (self.budget.e_max_j - self.energy(p)).max(0.0);
            worst = worst.max(lambda * slack / (scale * self.budget.e_max_j.max(1.0)));
        }
        worst
    }
}

/// Result of [`solve_uav`].
#[derive(Clone, Debug, PartialEq)]
pub struct UavPowerSolution {
    /// Optimizer output on the closed boxes.
    pub p: Vec<f64>,
    pub lambda: f64,
    pub objective: f64,
    pub kkt_residual: f64,
}

/// Dual bisection for one UAV.
pub fn solve_uav(problem: &UavPowerProblem) -> Result<UavPowerSolution> {
    let n_slots = problem.num_slots();
    if problem.hi.len() != n_slots || problem.gains.len() != n_slots {
        return Err(Error::ShapeMismatch(format!("UAV {}: boxes and gains disagree on slot count", problem.uav)));
    }
    let budget = problem.budget.e_max_j;
    let floor = problem.energy(&problem.lo);
    if floor > budget {
        return Err(Error::InfeasibleBudget { uav: problem.uav, required_j: floor, budget_j: budget });
    }

    let finish = |p: Vec<f64>, lambda: f64| {
        let objective = problem.objective(&p);
        let kkt_residual = problem.kkt_residual(&p, lambda);
        UavPowerSolution { p, lambda, objective, kkt_residual }
    };

    let top = problem.powers_at(0.0);
    if problem.energy(&top) <= budget {
        return Ok(finish(top, 0.0));
    }

    let dt = problem.budget.slot_duration_s;
    let lambda_hi = (0..n_slots).map(|n| problem.marginal(n, problem.lo[n]) / dt).fold(0.0, f64::max) * (1.0 + 1e-12);
    let (mut l_lo, mut l_hi) = (0.0, lambda_hi);
    for _ in 0..DUAL_ITERATIONS {
        let mid = 0.5 * (l_lo + l_hi);
        if mid <= l_lo || mid >= l_hi {
            break;
        }
        if problem.energy(&problem.powers_at(mid)) > budget {
            l_lo = mid;
        } else {
            l_hi = mid;
        }
        if (l_hi - l_lo) <= 1e-12 * l_hi {
            break;
        }
    }
    // l_hi is always energy-feasible. Spend what is left of the budget on
    // the interior slots so the energy constraint is tight.
    let mut p = problem.powers_at(l_hi);
    spend_slack(problem, &mut p, l_hi);
    Ok(finish(p, l_hi))
}

/// Distributes leftover energy over interior slots in proportion to their
/// headroom; the bisection leaves a gap of order `1e-12` relative.
fn spend_slack(problem: &UavPowerProblem, p: &mut [f64], lambda: f64) {
    let dt = problem.budget.slot_duration_s;
    let slack = problem.budget.e_max_j - problem.energy(p);
    if slack <= 0.0 {
        return;
    }
    let target = lambda * dt;
    let room: Vec<f64> = (0..p.len())
        .map(|n| {
            let interior = !problem.gains[n].is_empty() && p[n] < problem.hi[n] && problem.marginal(n, p[n]) >= target * (1.0 - 1e-9);
            if interior { problem.hi[n] - p[n] } else { 0.0 }
        })
        .collect();
    let total: f64 = room.iter().sum();
    if total <= 0.0 {
        return;
    }
    let share = (slack / dt / total).min(1.0);
    for (pn, r) in p.iter_mut().zip(&room) {
        *pn = (*pn + share * r).min(*pn + r);
    }
    // Rounding can push energy a hair over; undo on the largest slot.
    let over = problem.energy(p) - problem.budget.e_max_j;
    if over > 0.0 {
        if let Some((n, _)) = room.iter().enumerate().filter(|(_, &r)| r > 0.0).max_by(|x, y| x.1.total_cmp(y.1)) {
            p[n] = (p[n] - over / dt).max(problem.lo[n]);
        }
    }
}

/// Builds the per-UAV problems for a mission.
pub fn build_problems(topo: &TopologySeries, pos: &PositionSeries, scenario: &Scenario) -> Result<Vec<UavPowerProblem>> {
    let a_count = scenario.num_uavs();
    let n_slots = topo.num_slots();
    if pos.num_slots() != n_slots || pos.num_uavs() != a_count || topo.intervals.p_min.len() != a_count {
        return Err(Error::ShapeMismatch("topology, positions and scenario disagree".into()));
    }
    let gains = credited_gains(topo, pos, &scenario.radio)?;
    let dt = scenario.slot_duration();
    Ok(gains
        .into_iter()
        .enumerate()
        .map(|(a, g)| UavPowerProblem {
            uav: a,
            lo: topo.intervals.p_min[a].clone(),
            hi: topo.intervals.p_max[a].iter().zip(&topo.intervals.p_min[a]).map(|(&h, &l)| h.max(l)).collect(),
            gains: g,
            budget: EnergyBudget { e_max_j: scenario.uavs[a].e_max_j, slot_duration_s: dt },
            bandwidth_hz: scenario.radio.bandwidth_hz,
            noise_power_w: scenario.radio.noise_power_w,
        })
        .collect())
}

/// `gains[a][n]`: gains of links `(a, b)` with `b > a` present in slot `n`.
pub fn credited_gains(topo: &TopologySeries, pos: &PositionSeries, radio: &RadioParams) -> Result<Vec<Vec<Vec<f64>>>> {
    let a_count = pos.num_uavs();
    let mut out = vec![vec![Vec::new(); topo.num_slots()]; a_count];
    for (n, m) in topo.matrices.iter().enumerate() {
        let here = pos.slot(n);
        for (a, b) in m.edges() {
            out[a][n].push(radio::path_loss(here[a].dist(&here[b]), radio)?.h);
        }
    }
    Ok(out)
}

/// Largest power strictly inside the half-open interval `[lo, hi)`.
fn emit(p: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        p.min(hi.next_down()).max(lo)
    } else {
        lo
    }
}

/// Solves every UAV and returns the emitted schedule (powers strictly below
/// each interval's upper end so the topology is preserved).
pub fn solve_all(topo: &TopologySeries, pos: &PositionSeries, scenario: &Scenario) -> Result<PowerSchedule> {
    let problems = build_problems(topo, pos, scenario)?;
    let solutions: Vec<UavPowerSolution> = problems.par_iter().map(solve_uav).collect::<Result<_>>()?;
    Ok(PowerSchedule {
        p: solutions
            .iter()
            .zip(&problems)
            .map(|(s, pr)| s.p.iter().enumerate().map(|(n, &p)| emit(p, pr.lo[n], pr.hi[n])).collect())
            .collect(),
    })
}

/// Grid search over the feasible boxes; an independent oracle for tests.
///
/// Every slot but the last takes values on a grid of step `resolution`;
/// the last slot gets the largest power the remaining energy allows.
/// Limited to three UAVs and five slot boundaries.
pub fn oracle_grid(problems: &[UavPowerProblem], resolution: f64) -> Result<Vec<Vec<f64>>> {
    if problems.len() > 3 || problems.iter().any(|p| p.num_slots() > 5) {
        return Err(Error::InstanceTooLarge(format!(
            "oracle_grid handles at most 3 UAVs and N <= 4, got {} UAVs",
            problems.len()
        )));
    }
    if !(resolution > 0.0) {
        return Err(Error::validation("resolution", "must be > 0"));
    }
    problems.iter().map(|pr| oracle_uav(pr, resolution)).collect()
}

fn oracle_uav(pr: &UavPowerProblem, resolution: f64) -> Result<Vec<f64>> {
    let floor = pr.energy(&pr.lo);
    if floor > pr.budget.e_max_j {
        return Err(Error::InfeasibleBudget { uav: pr.uav, required_j: floor, budget_j: pr.budget.e_max_j });
    }
    let n = pr.num_slots();
    if n == 0 {
        return Ok(Vec::new());
    }
    let dt = pr.budget.slot_duration_s;
    let grids: Vec<Vec<f64>> = (0..n - 1)
        .map(|i| {
            let steps = ((pr.hi[i] - pr.lo[i]) / resolution).floor() as usize;
            let mut g: Vec<f64> = (0..=steps).map(|k| pr.lo[i] + k as f64 * resolution).collect();
            if *g.last().unwrap() < pr.hi[i] {
                g.push(pr.hi[i]);
            }
            g
        })
        .collect();
    let mut best = (f64::NEG_INFINITY, pr.lo.clone());
    let mut idx = vec![0usize; n - 1];
    loop {
        let mut p: Vec<f64> = idx.iter().enumerate().map(|(i, &k)| grids[i][k]).collect();
        let used = pr.energy(&p) + dt * pr.lo[n - 1];
        if used <= pr.budget.e_max_j {
            let last = (pr.lo[n - 1] + (pr.budget.e_max_j - used) / dt).min(pr.hi[n - 1]);
            p.push(last);
            let f = pr.objective(&p);
            if f > best.0 {
                best = (f, p);
            }
        }
        // odometer increment
        let mut i = 0;
        loop {
            if i == idx.len() {
                return Ok(best.1);
            }
            idx[i] += 1;
            if idx[i] < grids[i].len() {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
    }
}
