use std::path::PathBuf;

use chemostat_core::basin::BasinError;
use chemostat_core::equilibria::EquilibriumError;
use chemostat_core::integrator::IntegrationError;
use chemostat_core::linalg::EigenError;
use chemostat_core::model::ModelError;
use chemostat_core::reduction::ReductionError;
use serde::Serialize;
use thiserror::Error;

use crate::scenario::{ScenarioError, FORMAT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorKind {
    /// Bad input: malformed scenario, violated invariant, unsupported request.
    Domain,
    /// The computation itself failed: step underflow, no convergence.
    Numerical,
}

impl ErrorKind {
    pub fn exit_code(self) -> u8 {
        match self {
            ErrorKind::Domain => 1,
            ErrorKind::Numerical => 2,
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Integration(#[from] IntegrationError),
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
    #[error(transparent)]
    Basin(#[from] BasinError),
    #[error(transparent)]
    Reduction(#[from] ReductionError),
    #[error("{0}")]
    Numerical(String),
}

fn integration_kind(e: &IntegrationError) -> ErrorKind {
    match e {
        IntegrationError::StepUnderflow { .. } | IntegrationError::StepBudget { .. } => ErrorKind::Numerical,
        _ => ErrorKind::Domain,
    }
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            CliError::Integration(e) => integration_kind(e),
            CliError::Equilibrium(EquilibriumError::Eigen(EigenError::NoConvergence(_) | EigenError::NonFinite)) => {
                ErrorKind::Numerical
            }
            CliError::Basin(BasinError::InvalidQuery(_) | BasinError::SameLabel(_)) => ErrorKind::Domain,
            CliError::Basin(_) => ErrorKind::Numerical,
            CliError::Reduction(ReductionError::Integration(e)) => integration_kind(e),
            CliError::Reduction(ReductionError::NoExtinction { .. } | ReductionError::LimitMismatch { .. }) => {
                ErrorKind::Numerical
            }
            CliError::Numerical(_) => ErrorKind::Numerical,
            _ => ErrorKind::Domain,
        }
    }

    pub fn record(&self, command: &str) -> ErrorRecord {
        ErrorRecord {
            format_version: FORMAT_VERSION,
            command: command.to_string(),
            kind: self.kind(),
            exit_code: self.kind().exit_code(),
            message: self.to_string(),
        }
    }
}

/// Machine-readable form of a failure, written to stderr and to `error.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRecord {
    pub format_version: u32,
    pub command: String,
    pub kind: ErrorKind,
    pub exit_code: u8,
    pub message: String,
}
