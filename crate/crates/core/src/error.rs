use std::fmt;

/// Broad failure classes. The CLI maps `InvalidInput` and `Regime` to exit
/// status 2 and everything else to 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    /// Malformed or out-of-domain arguments.
    InvalidInput,
    /// Well-formed input outside the regime a solver can handle
    /// (multi-cut potential, degenerate target, cutoff violation, ...).
    Regime,
    /// An iteration failed to settle within its budget.
    NonConvergence,
    /// Anything that indicates a bug rather than bad input.
    Internal,
}

impl ErrorKind {
    pub fn code(self) -> &'static str {
        match self {
            ErrorKind::InvalidInput => "invalid_input",
            ErrorKind::Regime => "regime",
            ErrorKind::NonConvergence => "non_convergence",
            ErrorKind::Internal => "internal",
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
#[error("{module}: {message}")]
pub struct Error {
    pub kind: ErrorKind,
    pub module: &'static str,
    pub message: String,
}

impl Error {
    pub fn new(kind: ErrorKind, module: &'static str, message: impl fmt::Display) -> Self {
        Error { kind, module, message: message.to_string() }
    }

    pub fn invalid(module: &'static str, message: impl fmt::Display) -> Self {
        Self::new(ErrorKind::InvalidInput, module, message)
    }

    pub fn regime(module: &'static str, message: impl fmt::Display) -> Self {
        Self::new(ErrorKind::Regime, module, message)
    }

    pub fn code(&self) -> &'static str {
        self.kind.code()
    }
}

pub type Result<T> = std::result::Result<T, Error>;
