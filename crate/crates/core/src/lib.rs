//! Coverage-route planning, topology control and transmit-power allocation
//! for multi-UAV flying ad hoc networks (FANETs).
//!
//! The pipeline has three stages that run in order:
//!
//! 1. [`planner`] assigns terrain waypoints to UAVs and orders them, keeping
//!    every UAV within max-power range of at least `K_min` others.
//! 2. [`topology`] (C-TOP) turns per-slot UAV positions into power intervals
//!    whose induced links form a symmetric, connected, degree-bounded graph.
//! 3. [`power`] picks a transmit power inside each interval that maximizes
//!    total link throughput under each UAV's communication energy budget.
//!
//! [`simulator`] wires the stages together, adds the MTP and local-MST
//! baselines and computes the comparison metrics.

pub mod error;
pub mod geometry;
pub mod kinematics;
pub mod planner;
pub mod power;
pub mod radio;
pub mod scenario;
pub mod simulator;
pub mod topology;
pub mod units;

pub use error::{Error, Result};
pub use geometry::Point3;
pub use kinematics::{PositionSeries, TrajectorySet};
pub use power::PowerSchedule;
pub use scenario::{RadioParams, Scenario, TerrainGrid, UavSpec};
pub use topology::{PowerIntervalGrid, ReachabilityMatrix, TopologySeries};
