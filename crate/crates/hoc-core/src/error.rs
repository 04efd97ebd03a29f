//! Error taxonomy shared by the whole workspace.
//!
//! The CLI maps variants onto exit codes: configuration errors exit with 1,
//! numerical and I/O failures with 2.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid construction parameters (grid bounds, cell counts, config files).
    #[error("configuration error: {0}")]
    Config(String),

    /// A model that violates the structural hypotheses (positivity of Q,
    /// a(0) = 0, positive fitness away from the optimum).
    #[error("model error: {0}")]
    Model(String),

    /// Numerical failure at run time: bracket failures, overflow, loss of
    /// conservation beyond tolerance.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A requested operation outside the supported regime, e.g. an
    /// h-transform of a subcritical model.
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
