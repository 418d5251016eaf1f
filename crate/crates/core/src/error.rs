use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("config line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("CFL violation: dt = {dt:.3e} exceeds the {term} limit {limit:.3e}")]
    Cfl {
        dt: f64,
        limit: f64,
        term: &'static str,
    },

    #[error("density floor violated at t = {time:.6}: min rho = {min_rho:.3e} at node {node:?}")]
    Positivity {
        time: f64,
        min_rho: f64,
        node: (usize, usize, usize),
    },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("field format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse { .. } | Error::Domain(_) => 2,
            _ => 3,
        }
    }
}
