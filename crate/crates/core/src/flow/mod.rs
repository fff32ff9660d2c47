//! Conditional rational-quadratic-spline coupling flow with a bidirectional
//! LSTM context encoder, trained by maximum likelihood.

mod arch;
pub mod checkpoint;
mod model;
mod nn;
pub mod spline;
pub mod train;

pub use arch::FlowArch;
pub use model::{std_normal_log_prob, FlowModel, Workspace, GRAD_CHUNK};
pub use spline::{rqs_transform, SplineParams};
pub use train::{train, EpochLog, TrainConfig, TrainLog};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("invalid parameters: {0}")]
    Param(String),
    #[error("empty context")]
    EmptyContext,
    #[error("numerical failure{}: {msg}", sample.map(|i| format!(" at sample {i}")).unwrap_or_default())]
    Numerical { sample: Option<usize>, msg: String },
    #[error("training diverged at epoch {epoch}: {msg}")]
    Diverged { epoch: usize, msg: String },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Format(String),
}

impl FlowError {
    pub(crate) fn at_sample(self, i: usize) -> Self {
        match self {
            FlowError::Numerical { sample: None, msg } => FlowError::Numerical { sample: Some(i), msg },
            e => e,
        }
    }
}
