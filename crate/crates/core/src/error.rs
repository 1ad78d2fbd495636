use thiserror::Error;

/// Library-wide error type. Variants map onto the CLI exit codes.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent input (instance, policy, or parameters).
    #[error("input error: {0}")]
    Input(String),

    /// An enumeration or candidate count exceeded its configured cap.
    #[error("cap exceeded: {what} requires {needed}, cap is {cap}")]
    CapExceeded {
        what: &'static str,
        needed: u64,
        cap: u64,
    },

    /// A policy violates the budget or another feasibility constraint.
    #[error("infeasible: {0}")]
    Infeasible(String),
}

impl Error {
    /// Process exit code used by the CLI: 2 input, 3 cap, 4 infeasible.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Input(_) => 2,
            Error::CapExceeded { .. } => 3,
            Error::Infeasible(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
