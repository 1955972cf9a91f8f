use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid value for `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("degenerate terrain: {0}")]
    DegenerateTerrain(String),

    #[error("UAV {uav} needs {duration_s:.3} s for its route but may fly only {limit_s:.3} s")]
    TimeBudgetExceeded { uav: usize, duration_s: f64, limit_s: f64 },

    #[error("transceivers are co-located (distance {0} m)")]
    ZeroDistance(f64),

    #[error("no admissible topology for UAV {uav} in slot {slot}: {reason}")]
    InfeasibleTopology { uav: usize, slot: usize, reason: String },

    #[error("UAV {uav} cannot meet its energy budget: needs at least {required_j:.6} J, has {budget_j:.6} J")]
    InfeasibleBudget { uav: usize, required_j: f64, budget_j: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("dead end at decoding step {step}: {remaining} waypoints left and no feasible move")]
    DeadEnd {
        step: usize,
        remaining: usize,
        /// Routes built before the dead end, as scenario node ids.
        partial: Vec<Vec<usize>>,
    },

    #[error("no feasible plan: {0}")]
    NoFeasiblePlan(String),

    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("instance too large for exhaustive search: {0}")]
    InstanceTooLarge(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation { field: field.into(), message: message.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Strips [`Error::Stage`] wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for errors that mean "no feasible solution exists" rather than
    /// "the input is malformed".
    pub fn is_infeasibility(&self) -> bool {
        matches!(
            self.root(),
            Error::TimeBudgetExceeded { .. }
                | Error::InfeasibleTopology { .. }
                | Error::InfeasibleBudget { .. }
                | Error::DeadEnd { .. }
                | Error::NoFeasiblePlan(_)
        )
    }

    pub fn is_validation(&self) -> bool {
        matches!(self.root(), Error::Validation { .. } | Error::Parse(_) | Error::DegenerateTerrain(_))
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage { stage, source: Box::new(e) })
    }
}
