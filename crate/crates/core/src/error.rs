use std::path::PathBuf;

use thiserror::Error;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {}", join_violations(.0))]
    InvalidParams(Vec<Violation>),

    #[error("invalid solver settings: {0}")]
    InvalidSettings(String),

    #[error("optimal quote undefined: kappa + beta = 0")]
    UndefinedMaximizer,

    #[error(
        "explicit step unstable at t = {time}, q = {level}: rate * dt = {product} >= 1; refine the time grid"
    )]
    Unstable { time: f64, level: i32, product: f64 },

    #[error("grid mismatch: expected {expected} time points, got {found}")]
    GridMismatch { expected: usize, found: usize },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("config error at line {line}, key `{key}`: {message}")]
    Config {
        line: usize,
        key: String,
        message: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
