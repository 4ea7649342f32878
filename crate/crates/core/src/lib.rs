//! Numerical laboratory for homogenization of multiscale space-time
//! diffusions with periodic and random-phase coefficients.

// Stencils and small dense matrices read more clearly with explicit indices.
#![allow(clippy::needless_range_loop)]

pub mod cell1d;
pub mod corrector;
pub mod effective;
pub mod environment;
pub mod krylov;
pub mod linalg;
pub mod payoff;
pub mod sde;
pub mod stats;
pub mod trig;

pub use environment::{Environment, EnvironmentError, EnvironmentSpec};
pub use payoff::Payoff;
pub use sde::{Regime, ScalingExponents};

/// Any error raised by the library, with a stable machine-readable kind.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Environment(#[from] EnvironmentError),
    #[error(transparent)]
    Sde(#[from] sde::SdeError),
    #[error(transparent)]
    Cell(#[from] cell1d::CellError),
    #[error(transparent)]
    Corrector(#[from] corrector::CorrectorError),
    #[error(transparent)]
    Effective(#[from] effective::EffectiveError),
}

impl Error {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Environment(e) => e.kind(),
            Self::Sde(e) => e.kind(),
            Self::Cell(e) => e.kind(),
            Self::Corrector(e) => e.kind(),
            Self::Effective(e) => e.kind(),
        }
    }
}
