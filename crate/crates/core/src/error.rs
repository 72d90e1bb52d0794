use thiserror::Error;

use crate::model::Violation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("negative time step: from {from} to {to}")]
    NegativeTimeStep { from: f64, to: f64 },

    #[error("negative segment length {0}")]
    NegativeDuration(f64),

    #[error("index out of bounds: {0}")]
    IndexOutOfBounds(String),

    #[error("record {index} (t={time}): event {event} is inadmissible in state {state}")]
    InadmissibleEvent {
        index: usize,
        time: f64,
        event: String,
        state: String,
    },

    #[error("observed transition {event}: {from} -> {to} has zero probability in the kernel")]
    ImpossibleTransition {
        event: String,
        from: String,
        to: String,
    },

    #[error("stream contains no events")]
    EmptyStream,

    #[error("absorbing dead state: no event is admissible in state {0}")]
    DeadState(String),

    #[error("invalid model: {}", join(.0))]
    InvalidModel(Vec<Violation>),

    #[error("invalid stream: {}", join(.0))]
    InvalidStream(Vec<Violation>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("power iteration did not converge in state {state} after {iterations} iterations (estimate {estimate})")]
    PowerIteration {
        state: usize,
        iterations: usize,
        estimate: f64,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("unsupported format version {0:?}")]
    UnsupportedVersion(String),

    #[error("{0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
