use thiserror::Error;

use crate::params::Violation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {}", join(.0))]
    InvalidParams(Vec<Violation>),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("empty velocity history")]
    EmptyHistory,
    #[error("QP infeasible: rows {rows:?} cannot hold together (worst residual {residual:e})")]
    Infeasible { rows: Vec<usize>, residual: f64 },
    #[error("too many constraint rows: {0} (at most 3 supported)")]
    TooManyRows(usize),
    #[error("underdamped return gains: c^2 - 4 k_p = {discriminant} must be > 0")]
    Underdamped { discriminant: f64 },
    #[error("capacity: {0}")]
    Capacity(String),
    #[error("decode: {0}")]
    Decode(String),
    #[error("config: {0}")]
    Config(String),
    #[error("t = {t:.2} s, robot {robot}: {source}")]
    Tick {
        t: f64,
        robot: usize,
        #[source]
        source: Box<Error>,
    },
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|v| v.detail.as_str()).collect::<Vec<_>>().join("; ")
}
