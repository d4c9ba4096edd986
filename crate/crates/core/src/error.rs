use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("unstable model: {0}")]
    Unstable(String),

    #[error("singular linear system (pivot {pivot:.3e} relative to max entry {scale:.3e})")]
    Singular { pivot: f64, scale: f64 },

    #[error("negative probability {value:.3e} at state ({i},{j})")]
    NegativeProbability { i: usize, j: usize, value: f64 },

    #[error("kernel discriminant is not positive at z={z}")]
    Discriminant { z: f64 },

    #[error("root isolation failed: {0}")]
    RootIsolation(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("truncation cap {cap} reached with boundary mass {mass:.3e}")]
    Truncation { cap: usize, mass: f64 },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),
}

impl Error {
    /// True for errors caused by the caller's input rather than by the solver.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidModel(_) | Error::Unstable(_) | Error::Unsupported(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
