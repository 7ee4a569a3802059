//! Error type shared by every module.

use thiserror::Error;

/// Failures raised by the library.
///
/// Variants split into two families: configuration/validation problems
/// (`is_validation`) and numerical breakdowns (`is_numeric`). The CLI maps
/// them to exit codes 2 and 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-resonance violated: {condition} = {margin:e}")]
    Resonance { condition: String, margin: f64 },

    #[error("singular amplification factor in the implicit solve at discrete mode {mode}")]
    SingularStep { mode: usize },

    #[error("state blew up at step {step} (t = {time})")]
    BlowUp { step: usize, time: f64 },

    #[error("Newton iteration failed: {0}")]
    NewtonFailure(String),

    #[error("BVP solver did not converge on {nodes} nodes (residual {residual:e}, {iterations} iterations)")]
    BvpNonConvergence {
        nodes: usize,
        residual: f64,
        iterations: usize,
        /// Last Newton iterate, flattened node by node as (z, p).
        last_iterate: Vec<f64>,
    },

    #[error("mesh refinement limit reached at {nodes} nodes (last control change {change:e})")]
    RefineLimit { nodes: usize, change: f64 },

    #[error("pullback integration needs a finer step (relative change {change:e})")]
    RefineNeeded { change: f64 },

    #[error("parameterization defect undefined: high-mode energy vanishes")]
    UndefinedDefect,

    #[error("singular linear system")]
    Singular,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialize(String),
}

impl Error {
    /// True for errors caused by bad inputs or configuration.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_) | Error::Config(_) | Error::Resonance { .. }
        )
    }

    /// True for errors raised by a numerical method that failed on valid input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::SingularStep { .. }
                | Error::BlowUp { .. }
                | Error::NewtonFailure(_)
                | Error::BvpNonConvergence { .. }
                | Error::RefineLimit { .. }
                | Error::RefineNeeded { .. }
                | Error::UndefinedDefect
                | Error::Singular
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
