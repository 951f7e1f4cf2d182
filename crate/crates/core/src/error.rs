use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("diffraction-order sum did not converge within order {max_order} (partial sum {partial:e})")]
    Convergence { max_order: usize, partial: f64 },

    #[error("drift matrix is not stable: max eigenvalue real part {max_real:e}")]
    Unstable { max_real: f64 },

    #[error("linear system is singular: {0}")]
    Singular(String),

    #[error("moment residual {residual:e} exceeds {limit:e}")]
    Residual { residual: f64, limit: f64 },

    #[error("covariance is not positive semidefinite: min eigenvalue {min_eig:e}")]
    NotPsd { min_eig: f64 },

    #[error("unphysical moments: {0}")]
    Unphysical(String),

    #[error("trajectory {traj} diverged at step {step}")]
    Diverged { traj: usize, step: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
