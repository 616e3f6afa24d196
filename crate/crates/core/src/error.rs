use thiserror::Error;

/// Errors raised by the mesh, solver and analysis layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("ill-posed Neumann problem: compatibility defect {defect:.3e} exceeds tolerance {tolerance:.3e}")]
    IllPosed { defect: f64, tolerance: f64 },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("singular evaluation at the source point")]
    SingularEvaluation,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
