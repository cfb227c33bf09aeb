use thiserror::Error;

/// Errors produced by the solvers, the simulator and the config loader.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid MDP: {0}")]
    Validation(String),

    #[error("value iteration did not converge within {iterations} iterations (last span {span:e})")]
    IterationLimit { iterations: usize, span: f64 },

    #[error("lower bound undefined: channel success probability {xi} is below 1/(max_aocsi - 1/2) = {threshold}")]
    Admissibility { xi: f64, threshold: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
