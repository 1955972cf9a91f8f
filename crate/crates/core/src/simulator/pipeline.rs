//! Plan, positions, topology, power and metrics in one run.

use log::info;
use rayon::prelude::*;

use crate::error::{Error, Result, StageExt};
use crate::kinematics::{positions_over_slots, validate_all, PositionSeries, TrajectorySet};
use crate::planner::{decode_rollout, exhaustive_oracle, heuristic_plan, DecodeMode, Instance, ModelParams};
use crate::power;
use crate::power::PowerSchedule;
use crate::scenario::Scenario;
use crate::simulator::baselines::{lmst_rule, mtp_rule, run_with_ledger, SlotRule};
use crate::simulator::metrics::{average_hops, connectivity_rate, throughput_series, FailureModel};
use crate::simulator::report::{PlanSummary, RunConfig, RunReport, SlotRecord, REPORT_SCHEMA};
use crate::topology::{optimize_series, RaisePolicy, ReachabilityMatrix, SlotTopology};

#[derive(Clone, Debug)]
pub enum PlannerChoice {
    /// Greedy decoding with a trained model.
    Trained(Box<ModelParams>),
    Heuristic,
    Oracle,
}

impl PlannerChoice {
    pub fn name(&self) -> &'static str {
        match self {
            PlannerChoice::Trained(_) => "trained",
            PlannerChoice::Heuristic => "heuristic",
            PlannerChoice::Oracle => "oracle",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopoChoice {
    Ctop,
    Mtp,
    Lmst,
}

impl TopoChoice {
    pub const ALL: [TopoChoice; 3] = [TopoChoice::Ctop, TopoChoice::Mtp, TopoChoice::Lmst];
}

/// Robustness-experiment settings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SimOptions {
    /// Failure slot; defaults to `round(0.3 N)`, at least 1.
    pub n_dc: Option<usize>,
    pub failure: FailureModel,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { n_dc: None, failure: FailureModel::Frozen }
    }
}

impl SimOptions {
    pub fn n_dc_for(&self, n_slots: usize) -> usize {
        self.n_dc.unwrap_or_else(|| ((0.3 * n_slots as f64).round() as usize).clamp(1, n_slots))
    }
}

/// Runs the selected planner.
pub fn plan(scenario: &Scenario, planner: &PlannerChoice, seed: u64) -> Result<TrajectorySet> {
    let instance = Instance::new(scenario.clone());
    match planner {
        PlannerChoice::Trained(model) => decode_rollout(&instance, model, DecodeMode::Greedy, seed).map(|r| r.plan),
        PlannerChoice::Heuristic => heuristic_plan(&instance, seed),
        PlannerChoice::Oracle => exhaustive_oracle(&instance).map(|o| o.plan),
    }
}

/// Full pipeline with one planner and one topology algorithm.
pub fn run_pipeline(scenario: &Scenario, planner: &PlannerChoice, topo: TopoChoice, seed: u64, opts: &SimOptions) -> Result<RunReport> {
    scenario.validate().stage("scenario")?;
    let traj = plan(scenario, planner, seed).stage("plan")?;
    run_with_plan(scenario, &traj, planner.name(), topo, seed, opts)
}

/// Plans once and evaluates every topology algorithm on the same routes.
pub fn compare(scenario: &Scenario, planner: &PlannerChoice, seed: u64, opts: &SimOptions) -> Result<Vec<RunReport>> {
    scenario.validate().stage("scenario")?;
    let traj = plan(scenario, planner, seed).stage("plan")?;
    TopoChoice::ALL.iter().map(|&t| run_with_plan(scenario, &traj, planner.name(), t, seed, opts)).collect()
}

/// Per-slot links and powers of one topology algorithm.
struct Network {
    matrices: Vec<ReachabilityMatrix>,
    powers: PowerSchedule,
    depleted_at: Vec<Option<usize>>,
    alive: Vec<Vec<bool>>,
    residual: Vec<crate::kinematics::Violation>,
}

fn build_network(scenario: &Scenario, pos: &PositionSeries, topo: TopoChoice) -> Result<Network> {
    let a = scenario.num_uavs();
    let everyone = vec![vec![true; a]; pos.num_slots()];
    match topo {
        TopoChoice::Ctop => {
            let series = optimize_series(pos, scenario).stage("topology")?;
            let powers = power::solve_all(&series, pos, scenario).stage("power")?;
            Ok(Network { matrices: series.matrices, powers, depleted_at: vec![None; a], alive: everyone, residual: series.residual })
        }
        TopoChoice::Mtp | TopoChoice::Lmst => {
            let rule: Box<dyn SlotRule> = if topo == TopoChoice::Mtp { Box::new(mtp_rule(scenario)) } else { Box::new(lmst_rule(scenario)) };
            let out = run_with_ledger(rule.as_ref(), pos, scenario);
            Ok(Network { matrices: out.matrices, powers: out.powers, depleted_at: out.depleted_at, alive: out.alive, residual: Vec::new() })
        }
    }
}

/// Topology over the survivors once `removed` has failed, for recompute.
fn recompute(scenario: &Scenario, pos: &PositionSeries, topo: TopoChoice, net: &Network, removed: usize, n: usize) -> ReachabilityMatrix {
    let here = pos.slot(n);
    match topo {
        TopoChoice::Ctop => {
            let keep: Vec<usize> = (0..here.len()).filter(|&i| i != removed).collect();
            let pts: Vec<_> = keep.iter().map(|&i| here[i]).collect();
            let caps: Vec<f64> = keep.iter().map(|&i| scenario.uavs[i].p_max_w).collect();
            let k_min = scenario.k_min.min(keep.len().saturating_sub(1));
            match SlotTopology::optimize(&pts, &caps, &scenario.radio, k_min, scenario.delta, n, RaisePolicy::Capped) {
                Ok(st) => st.matrix(),
                // co-located survivors: keep the frozen links
                Err(_) => net.matrices[n].without(removed),
            }
        }
        TopoChoice::Mtp | TopoChoice::Lmst => {
            let mut alive = net.alive[n].clone();
            alive[removed] = false;
            let (m, _) = if topo == TopoChoice::Mtp { mtp_rule(scenario).slot(&here, &alive) } else { lmst_rule(scenario).slot(&here, &alive) };
            m.without(removed)
        }
    }
}

/// Topology, power and metrics for a fixed plan.
pub fn run_with_plan(scenario: &Scenario, traj: &TrajectorySet, planner: &str, topo: TopoChoice, seed: u64, opts: &SimOptions) -> Result<RunReport> {
    let n_slots = scenario.n_slots;
    let n_dc = opts.n_dc_for(n_slots);
    let mut violations = validate_all(traj, scenario).stage("validate")?.violations;
    let pos = positions_over_slots(traj, scenario).stage("positions")?;
    let net = build_network(scenario, &pos, topo)?;
    violations.extend(net.residual.iter().cloned());

    let throughput = throughput_series(&net.matrices, &net.powers, &pos, &scenario.radio).stage("metrics")?;
    let (slot_hops, mean_hops) = average_hops(&net.matrices);
    let xi = match opts.failure {
        FailureModel::Frozen => connectivity_rate(scenario.num_uavs(), n_slots, n_dc, |a, n| Ok(net.matrices[n].without(a))),
        FailureModel::Recompute => connectivity_rate(scenario.num_uavs(), n_slots, n_dc, |a, n| Ok(recompute(scenario, &pos, topo, &net, a, n))),
    }
    .stage("metrics")?;

    let dt = pos.slot_duration;
    let slots: Vec<SlotRecord> = net
        .matrices
        .par_iter()
        .enumerate()
        .map(|(n, m)| SlotRecord {
            slot: n,
            time_s: n as f64 * dt,
            edges: m.edges().into_iter().map(|(a, b)| [a, b]).collect(),
            throughput_bps: throughput.per_slot[n],
            hops: slot_hops[n],
        })
        .collect();
    let report = RunReport {
        schema: REPORT_SCHEMA.to_string(),
        config: RunConfig {
            planner: planner.to_string(),
            topology: topo,
            failure: opts.failure,
            n_dc,
            seed,
            scenario_seed: scenario.seed,
            num_uavs: scenario.num_uavs(),
            num_waypoints: scenario.waypoints.len(),
            n_slots,
            k_min: scenario.k_min,
            delta: scenario.delta,
            slot_duration_s: dt,
        },
        plan: PlanSummary::new(traj, scenario),
        slots,
        powers_w: net.powers.p.clone(),
        energy_j: net.powers.energy(dt),
        depleted_at: net.depleted_at,
        throughput_total_bps: throughput.total,
        connectivity_rate: xi,
        average_hops: mean_hops,
        violations,
    };
    info!(
        "{planner}/{topo:?}: throughput {:.4e}, xi {:.4}, hops {}",
        report.throughput_total_bps,
        report.connectivity_rate,
        report.average_hops.map_or("inf".to_string(), |h| format!("{h:.3}"))
    );
    Ok(report)
}

impl std::str::FromStr for TopoChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ctop" => Ok(TopoChoice::Ctop),
            "mtp" => Ok(TopoChoice::Mtp),
            "lmst" => Ok(TopoChoice::Lmst),
            other => Err(Error::validation("algo", format!("unknown topology algorithm `{other}`"))),
        }
    }
}
