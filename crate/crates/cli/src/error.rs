use embias_core::{AssociationError, BtsError, SimilarityError, StoreError};
use thiserror::Error;

/// Exit 1 for bad input or output locations, exit 2 for failed computations.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Compute(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Compute(_) => 2,
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<SimilarityError> for CliError {
    fn from(e: SimilarityError) -> Self {
        CliError::Compute(e.to_string())
    }
}

impl From<AssociationError> for CliError {
    fn from(e: AssociationError) -> Self {
        CliError::Compute(e.to_string())
    }
}

impl From<BtsError> for CliError {
    fn from(e: BtsError) -> Self {
        CliError::Compute(e.to_string())
    }
}
