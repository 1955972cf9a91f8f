//! RL-TP route planning.
//!
//! Waypoints are assigned to UAVs and ordered by an attention model that
//! decodes one token at a time: tokens are the UAVs' start points and the
//! waypoints, and picking the next UAV's start token closes the current
//! route. A feasibility mask keeps every partial plan within the flight
//! time, separation and max-power neighbour constraints.
//!
//! Besides the learned planner there is an exact branch-and-bound
//! [`oracle`] for small instances and a training-free [`heuristic`].

pub mod checkpoint;
pub mod feasibility;
pub mod heuristic;
pub mod instance;
pub mod model;
pub mod oracle;
pub mod rollout;
pub mod state;
pub mod tensor;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use heuristic::heuristic_plan;
pub use instance::{random_instance, Instance, InstanceConfig};
pub use model::{encode, BnMode, ModelConfig, ModelParams};
pub use oracle::{exhaustive_oracle, OraclePlan};
pub use rollout::{decode_rollout, DecodeMode, Rollout};
pub use state::{feasibility_mask, DecoderState};
pub use train::{train, TrainConfig, TrainLogRow, TrainOutcome};
