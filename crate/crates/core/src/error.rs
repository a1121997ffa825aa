use std::io;

use thiserror::Error;

/// Errors produced by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("class {0} has no examples")]
    EmptyClass(usize),

    #[error("point is not on the probability simplex: {0}")]
    OffSimplex(String),

    #[error("density diverges at coordinate {0} (x = 0 with alpha < 1)")]
    DensityDiverges(usize),

    #[error("cannot synthesize {0} images from an empty pool")]
    EmptyPool(usize),

    #[error("deficit {deficit} exceeds synthesis capacity {capacity}")]
    CapacityExceeded { deficit: usize, capacity: usize },

    #[error("{eligible} eligible clients, cannot select {requested}")]
    NotEnoughClients { requested: usize, eligible: usize },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("truncated payload: {0}")]
    Truncated(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
