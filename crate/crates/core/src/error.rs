use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShapeError {
    #[error("operator is {rows}x{cols}, slot {slot} has dimension {expected}")]
    LocalDim {
        slot: usize,
        rows: usize,
        cols: usize,
        expected: usize,
    },
    #[error("slot {slot} out of range for a layout with {len} subsystems")]
    Slot { slot: usize, len: usize },
    #[error("vector of length {got} does not match dimension {expected}")]
    Length { got: usize, expected: usize },
    #[error("invalid layout: {0}")]
    Layout(String),
    #[error("operator is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),
    #[error("state norm {0} is not 1")]
    NotNormalized(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter `{field}`: {reason}")]
    Param { field: &'static str, reason: String },
    #[error("invalid segment `{label}`: {reason}")]
    Segment { label: String, reason: String },
    #[error("time {t} ns outside segment of duration {duration} ns")]
    TimeOutOfRange { t: f64, duration: f64 },
    #[error("frame ledger does not match the layout")]
    LedgerMismatch,
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PropagateError {
    #[error("norm drift {drift:e} after segment `{segment}`")]
    NormDrift { segment: String, drift: f64 },
    #[error("piece of {0:e} ns is below the integrator resolution")]
    StepUnderflow(f64),
    #[error("strategy `{strategy}` cannot handle segment `{segment}`: {reason}")]
    Unsupported {
        strategy: String,
        segment: String,
        reason: String,
    },
    #[error("unknown propagator `{0}`")]
    UnknownPropagator(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("i/o: {0}")]
    Io(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("unknown protocol `{0}`")]
    Unknown(String),
    #[error("calibration failed for segment {index}: {reason}")]
    Calibration { index: usize, reason: String },
    #[error("timeline document: {0}")]
    Document(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Propagate(#[from] PropagateError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("theta grid of {0} points is below the exactness threshold of 9")]
    GridTooSmall(usize),
    #[error("empty subsystem selection")]
    EmptyKeep,
    #[error("degenerate gate extraction: leakage {0}")]
    Degenerate(f64),
    #[error("task does not match the timeline: {0}")]
    Task(String),
    #[error(transparent)]
    Propagate(#[from] PropagateError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("i/o: {0}")]
    Io(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("lattice extent must be positive")]
    EmptyExtent,
    #[error("gate must be 4x4, got {0}x{1}")]
    GateShape(usize, usize),
    #[error("state has {got} qubits, lattice has {expected} nodes")]
    Size { got: usize, expected: usize },
    #[error("{0} nodes exceeds the state-vector cap of {1}")]
    TooLarge(usize, usize),
    #[error("gate annihilates the state")]
    Annihilated,
}
