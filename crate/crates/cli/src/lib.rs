//! Experiment driver behind the `lastlayer` binary: data generation,
//! training, SVM targets, analysis and the end-to-end pipeline.
//!
//! Every command is deterministic given its inputs. Exit codes: 0 success,
//! 1 invalid input, 2 numerical failure, 3 thresholds unmet.

pub mod commands;
pub mod config;
pub mod pipeline;
mod plots;
pub mod report;

use std::path::Path;

pub use config::{ExperimentConfig, Format, OUT_DIR_ENV};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("data not separable: {0}")]
    Infeasible(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<CliError>,
    },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ CliError::Stage { .. } => e,
            e => CliError::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) | CliError::Io { .. } | CliError::Infeasible(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Stage { source, .. } => source.exit_code(),
        }
    }
}

pub const EXIT_THRESHOLDS_UNMET: u8 = 3;

impl From<lastlayer::data::DataError> for CliError {
    fn from(e: lastlayer::data::DataError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

impl From<lastlayer::net::NetError> for CliError {
    fn from(e: lastlayer::net::NetError) -> Self {
        use lastlayer::net::NetError;
        match e {
            NetError::NumericalOverflow(m) => CliError::Numerical(m),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<lastlayer::svm::SvmError> for CliError {
    fn from(e: lastlayer::svm::SvmError) -> Self {
        use lastlayer::svm::SvmError;
        match e {
            SvmError::InfeasibleThroughOrigin { .. } | SvmError::Infeasible { .. } => {
                CliError::Infeasible(e.to_string())
            }
            SvmError::IterationLimit { .. } => CliError::Numerical(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<lastlayer::analysis::AnalysisError> for CliError {
    fn from(e: lastlayer::analysis::AnalysisError) -> Self {
        use lastlayer::analysis::AnalysisError;
        match e {
            AnalysisError::Net(n) => n.into(),
            other => CliError::Invalid(other.to_string()),
        }
    }
}
