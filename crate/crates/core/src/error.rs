use thiserror::Error;

/// Errors produced by the simulation kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
    },
    #[error("invalid network: {0}")]
    InvalidNetwork(&'static str),
    #[error("network has {nodes} nodes; {operation} supports at most {limit}")]
    SizeLimit {
        operation: &'static str,
        nodes: usize,
        limit: usize,
    },
    #[error("total event rate is zero")]
    ZeroRate,
    #[error("event at time {time} precedes last observed time {last}")]
    OutOfOrder { time: f64, last: f64 },
    #[error("not enough samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("time {requested} exceeds the tabulated displacement horizon {available}")]
    BeyondHorizon { requested: f64, available: f64 },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: &'static str) -> Error {
    Error::InvalidParameter { name, reason }
}
