//! Library side of the `nvbus` binary: configuration, reports and commands.

pub mod commands;
pub mod config;
pub mod report;

use std::fmt;

use nvbus_core::{AnalysisError, ClusterError, ModelError, PropagateError, ProtocolError};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Assert(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Assert(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Assert(m) => write!(f, "acceptance miss: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Param { .. } | ModelError::Segment { .. } => CliError::Config(e.to_string()),
            e => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<PropagateError> for CliError {
    fn from(e: PropagateError) -> Self {
        match e {
            PropagateError::Model(m) => m.into(),
            PropagateError::UnknownPropagator(_) => CliError::Config(e.to_string()),
            e => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::Model(m) => m.into(),
            ProtocolError::Propagate(p) => p.into(),
            ProtocolError::Unknown(_) | ProtocolError::Document(_) => CliError::Config(e.to_string()),
            e => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Propagate(p) => p.into(),
            AnalysisError::GridTooSmall(_) | AnalysisError::EmptyKeep => CliError::Config(e.to_string()),
            e => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<ClusterError> for CliError {
    fn from(e: ClusterError) -> Self {
        match e {
            ClusterError::EmptyExtent => CliError::Config(e.to_string()),
            e => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(e.to_string())
    }
}
