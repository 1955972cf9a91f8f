//! End-to-end missions and the comparison experiments.
//!
//! A run plans routes, samples UAV positions at every slot boundary, builds
//! a topology with C-TOP or one of the baselines, assigns powers and then
//! measures throughput, connectivity rate and average hops. Baselines reuse
//! the C-TOP run's routes so differences come from topology and power only.

pub mod baselines;
pub mod metrics;
pub mod pipeline;
pub mod presets;
pub mod report;

pub use baselines::{lmst_series, mtp_series, BaselineSeries};
pub use metrics::{average_hops, connectivity_rate, connectivity_rate_frozen, slot_hops, throughput_series, FailureModel, ThroughputSeries};
pub use pipeline::{compare, plan, run_pipeline, run_with_plan, PlannerChoice, SimOptions, TopoChoice};
pub use presets::{square_area, SquareAreaConfig};
pub use report::{emit_report, read_report, render_files, write_text, PlanSummary, RunReport, REPORT_SCHEMA};
