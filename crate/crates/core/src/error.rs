use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid polytope: {0}")]
    InvalidPolytope(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("polytope is empty")]
    EmptyPolytope,
    #[error("polytope is unbounded")]
    Unbounded,
    #[error("enumeration cap exceeded: {combinations} combinations > cap {cap}")]
    CapExceeded { combinations: u128, cap: u128 },
    #[error("degenerate least-squares state: condition number {0:.3e}")]
    Degenerate(f64),
    #[error("least-squares state not initialized")]
    Uninitialized,
    #[error("query point {point:?} lies {distance:.3e} outside the true polytope (allowed {r0})")]
    VicinityViolation {
        point: Vec<f64>,
        distance: f64,
        r0: f64,
    },
    #[error("gradient sample token {0} used more than twice")]
    StaleToken(u64),
    #[error("gradient samples come from different tokens ({0} vs {1})")]
    TokenMismatch(u64, u64),
    #[error("start point is not strictly feasible (min residual {0:.3e})")]
    InfeasibleStart(f64),
    #[error("unknown {kind} '{name}'")]
    Unknown { kind: &'static str, name: String },
    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn at(self, iteration: usize) -> Error {
        Error::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }
}
