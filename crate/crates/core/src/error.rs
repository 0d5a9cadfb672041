use thiserror::Error;

/// Errors raised by model construction, simulation and fitting.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    #[error("empty sector: no {n_sites}-site basis state has charge {charge}")]
    EmptySector { n_sites: usize, charge: i64 },

    #[error("charge violation: operator couples the sector to its complement (max element {max_coupling:.3e})")]
    ChargeViolation { max_coupling: f64 },

    #[error("capacity exceeded: {requested} amplitudes requested, limit is {limit}")]
    Capacity { requested: u128, limit: usize },

    #[error("unsupported operator: {0}")]
    Unsupported(String),

    #[error("wrong charge sector for this plan: expected N={expected_sites}, Q={expected_charge}, got N={n_sites}, Q={charge}")]
    WrongSector {
        expected_sites: usize,
        expected_charge: i64,
        n_sites: usize,
        charge: i64,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("circuit needs an ancilla qubit but none is available")]
    MissingAncilla,

    #[error("propagation did not converge (residual {residual:.3e})")]
    NonConvergence { residual: f64 },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonConvergence { .. } | Error::Capacity { .. } | Error::ChargeViolation { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
