use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("centers {first} and {second} are closer than the separation tolerance ({distance:e})")]
    DistinctCenters {
        first: usize,
        second: usize,
        distance: f64,
    },

    #[error(
        "target condition {target:e} is not bracketed: kappa({lo}) = {kappa_lo:e}, kappa({hi}) = {kappa_hi:e}"
    )]
    Bracket {
        lo: f64,
        hi: f64,
        kappa_lo: f64,
        kappa_hi: f64,
        target: f64,
    },

    #[error("spacing h = {h} is too large: only {placed} interior nodes fit (need {needed})")]
    InfeasibleSpacing { h: f64, placed: usize, needed: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("node set has no boundary nodes")]
    NoBoundary,

    #[error("point {index} is not within {alpha} of the {which} circle")]
    OffBoundary {
        index: usize,
        alpha: f64,
        which: &'static str,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Parse { .. } => 2,
            Error::Io(_) => 1,
            _ => 3,
        }
    }
}
