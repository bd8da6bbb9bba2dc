//! Crate-wide error type.

use crate::smallmat::Vec3;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A Coulomb-type potential was evaluated too close to its singularity.
    /// Catalog trajectories never approach the origin; hitting this usually
    /// means a misconfigured run.
    #[error("potential singular at |x| = {radius:.3e} (x = {x:?})")]
    SingularPotential { x: Vec3, radius: f64 },

    /// The magnetic field vanished where a parallel projection was requested.
    #[error("magnetic field vanishes at x = {x:?} (|B| = {norm:.3e})")]
    ZeroField { x: Vec3, norm: f64 },

    /// A relative-error denominator fell below the guard threshold.
    #[error("near-zero denominator in {what}: |{what}| = {value:.3e}")]
    DivisionGuard { what: &'static str, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Trajectory norm exceeded the blow-up guard.
    #[error("trajectory blew up at t = {t:.6e}: |x| + |v| = {norm:.3e}")]
    BlowUp { t: f64, norm: f64 },

    /// The adaptive reference solver hit its step budget.
    #[error(
        "reference solver exceeded {max_steps} steps at t = {t_reached:.6e} (target {t_end:.6e})"
    )]
    MaxStepsExceeded {
        t_reached: f64,
        t_end: f64,
        max_steps: usize,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
