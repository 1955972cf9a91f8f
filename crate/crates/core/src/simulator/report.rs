//! Run reports and their on-disk form.
//!
//! `report.json` holds everything; the CSV files and `plan.json` are
//! renderings of it and can be regenerated with [`render_files`].

use std::fs;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::kinematics::{build_distance_matrix, TrajectorySet, Violation};
use crate::power::PowerSchedule;
use crate::scenario::Scenario;
use crate::simulator::metrics::FailureModel;
use crate::simulator::pipeline::TopoChoice;

pub const REPORT_SCHEMA: &str = "fanet-report/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub planner: String,
    pub topology: TopoChoice,
    pub failure: FailureModel,
    pub n_dc: usize,
    pub seed: u64,
    pub scenario_seed: u64,
    pub num_uavs: usize,
    pub num_waypoints: usize,
    pub n_slots: usize,
    pub k_min: usize,
    pub delta: usize,
    pub slot_duration_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub routes: Vec<Vec<usize>>,
    pub route_lengths_m: Vec<f64>,
    pub total_length_m: f64,
}

impl PlanSummary {
    pub fn new(traj: &TrajectorySet, scenario: &Scenario) -> Self {
        let dist = build_distance_matrix(&scenario.nodes());
        Self {
            routes: traj.routes.clone(),
            route_lengths_m: (0..traj.routes.len()).map(|a| traj.route_length(a, &dist)).collect(),
            total_length_m: traj.total_length(&dist),
        }
    }

    pub fn trajectories(&self) -> TrajectorySet {
        TrajectorySet::new(self.routes.clone())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("plan serializes");
        s.push('\n');
        s
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: usize,
    pub time_s: f64,
    pub edges: Vec<[usize; 2]>,
    pub throughput_bps: f64,
    /// Mean hop count; `"inf"` when the slot is disconnected.
    #[serde(with = "inf_marker")]
    pub hops: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub config: RunConfig,
    pub plan: PlanSummary,
    pub slots: Vec<SlotRecord>,
    /// `powers_w[a][n]`.
    pub powers_w: Vec<Vec<f64>>,
    pub energy_j: Vec<f64>,
    /// First slot each UAV ran out of energy (baselines only).
    pub depleted_at: Vec<Option<usize>>,
    pub throughput_total_bps: f64,
    pub connectivity_rate: f64,
    #[serde(with = "inf_marker")]
    pub average_hops: Option<f64>,
    pub violations: Vec<Violation>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: RunReport = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if r.schema != REPORT_SCHEMA {
            return Err(Error::validation("schema", format!("expected {REPORT_SCHEMA}, got {}", r.schema)));
        }
        Ok(r)
    }

    /// Slots where the network is disconnected.
    pub fn inf_hop_slots(&self) -> Vec<usize> {
        self.slots.iter().filter(|s| s.hops.is_none()).map(|s| s.slot).collect()
    }
}

/// `None` is written as the string `"inf"`.
mod inf_marker {
    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
        match v {
            Some(x) => s.serialize_f64(*x),
            None => s.serialize_str("inf"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<f64>, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(Some(x)),
            Repr::Text(t) if t == "inf" => Ok(None),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {t:?}"))),
        }
    }
}

fn hops_text(h: Option<f64>) -> String {
    h.map_or_else(|| "inf".to_string(), |x| x.to_string())
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> csv::Result<()>, path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| csv_err(path, e))?;
    Ok(buf)
}

/// Writes `metrics.csv`, `edges.csv`, `powers.csv` and `plan.json`.
pub fn render_files(report: &RunReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let path = dir.join("metrics.csv");
    let bytes = csv_bytes(
        |buf| {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record(["slot", "time_s", "edges", "throughput_bps", "hops"])?;
            for s in &report.slots {
                w.write_record([s.slot.to_string(), s.time_s.to_string(), s.edges.len().to_string(), s.throughput_bps.to_string(), hops_text(s.hops)])?;
            }
            w.flush()?;
            Ok(())
        },
        &path,
    )?;
    write_file(&path, &bytes)?;

    let path = dir.join("edges.csv");
    let bytes = csv_bytes(
        |buf| {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record(["slot", "a", "b"])?;
            for s in &report.slots {
                for [a, b] in &s.edges {
                    w.write_record([s.slot.to_string(), a.to_string(), b.to_string()])?;
                }
            }
            w.flush()?;
            Ok(())
        },
        &path,
    )?;
    write_file(&path, &bytes)?;

    let path = dir.join("powers.csv");
    let schedule = PowerSchedule { p: report.powers_w.clone() };
    let bytes = csv_bytes(|buf| schedule.write_csv(buf), &path)?;
    write_file(&path, &bytes)?;

    write_file(&dir.join("plan.json"), report.plan.to_json().as_bytes())
}

/// Writes `report.json` plus everything [`render_files`] produces.
pub fn emit_report(report: &RunReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(&dir.join("report.json"), report.to_json().as_bytes())?;
    render_files(report, dir)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_file(path, text.as_bytes())
}

pub fn read_report(path: &Path) -> Result<RunReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunReport::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunReport {
        RunReport {
            schema: REPORT_SCHEMA.into(),
            config: RunConfig {
                planner: "heuristic".into(),
                topology: TopoChoice::Mtp,
                failure: FailureModel::Frozen,
                n_dc: 1,
                seed: 7,
                scenario_seed: 0,
                num_uavs: 2,
                num_waypoints: 1,
                n_slots: 1,
                k_min: 1,
                delta: 0,
                slot_duration_s: 2.0,
            },
            plan: PlanSummary { routes: vec![vec![0, 2], vec![1]], route_lengths_m: vec![5.0, 0.0], total_length_m: 5.0 },
            slots: vec![
                SlotRecord { slot: 0, time_s: 0.0, edges: vec![[0, 1]], throughput_bps: 1.5e8, hops: Some(1.0) },
                SlotRecord { slot: 1, time_s: 2.0, edges: vec![], throughput_bps: 0.0, hops: None },
            ],
            powers_w: vec![vec![1.0, 0.0], vec![1.0, 0.0]],
            energy_j: vec![2.0, 2.0],
            depleted_at: vec![Some(1), Some(1)],
            throughput_total_bps: 1.5e8,
            connectivity_rate: 1.0,
            average_hops: None,
            violations: vec![],
        }
    }

    #[test]
    fn json_round_trip_with_inf() {
        let r = sample();
        let text = r.to_json();
        assert!(text.contains("\"average_hops\": \"inf\""));
        assert!(text.contains("\"violations\": []"));
        assert_eq!(RunReport::from_json(&text).unwrap(), r);
        assert_eq!(r.inf_hop_slots(), vec![1]);
    }

    #[test]
    fn rejects_other_schema() {
        let text = sample().to_json().replace(REPORT_SCHEMA, "other/9");
        assert!(RunReport::from_json(&text).is_err());
    }

    #[test]
    fn emit_twice_identical() {
        let dir = tempfile::tempdir().unwrap();
        let r = sample();
        emit_report(&r, dir.path()).unwrap();
        let first: Vec<Vec<u8>> = ["report.json", "metrics.csv", "edges.csv", "powers.csv", "plan.json"]
            .iter()
            .map(|f| fs::read(dir.path().join(f)).unwrap())
            .collect();
        emit_report(&r, dir.path()).unwrap();
        for (f, bytes) in ["report.json", "metrics.csv", "edges.csv", "powers.csv", "plan.json"].iter().zip(first) {
            assert_eq!(fs::read(dir.path().join(f)).unwrap(), bytes, "{f}");
        }
        let metrics = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert!(metrics.lines().last().unwrap().ends_with(",inf"));
    }
}
