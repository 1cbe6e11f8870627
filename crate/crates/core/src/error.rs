use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("capacity error: {0}")]
    Capacity(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error(
        "eigenstates {n} and {m} are degenerate (gap {gap:e}) but coupled (|w| = {coupling:e}); \
         the perturbative channel is invalid here"
    )]
    Degeneracy { n: usize, m: usize, gap: f64, coupling: f64 },

    #[error("boundary density {density:e} exceeds {threshold:e}; try a grid extent of at least {suggested_extent}")]
    Grid { density: f64, threshold: f64, suggested_extent: f64 },

    #[error("time step not converged: half-step change {change:e} exceeds {tolerance:e}")]
    Step { change: f64, tolerance: f64 },

    #[error("moment undefined: branch norm {0:e} is too small")]
    UndefinedMoment(f64),
}

impl Error {
    /// Process exit code for the command-line driver.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) | Error::Usage(_) | Error::Domain(_) => 2,
            Error::Capacity(_) => 4,
            _ => 3,
        }
    }
}
