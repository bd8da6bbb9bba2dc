//! Charged-particle dynamics in strong magnetic fields.
//!
//! This crate implements two explicit, symmetric, second-order splitting
//! integrators for the system
//!
//! ```text
//! x' = v,    v' = v x B(eps^q x)/eps + E(x),
//! ```
//!
//! where the magnetic field is strong (`1/eps`) and slowly varying in space
//! (`eps^q`, `q` between 1 and 2):
//!
//! * `s2new` freezes the field matrix at the initial position inside the
//!   rotation subflow and moves the spatial variation into the kick subflow.
//!   Its error stays bounded as `eps` shrinks for uniform fields and scales
//!   like `eps^(q-2) h^2` otherwise.
//! * `s2vp` is the classical drift/kick Strang splitting used as a baseline;
//!   its error grows like `1/eps`.
//!
//! On top of the integrators sit a high-accuracy adaptive reference solver,
//! energy and error diagnostics, and a sweep harness that writes CSV files
//! for convergence, eps-scaling and long-time energy studies. The `cpd`
//! binary exposes all of it on the command line.

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod fields;
pub mod harness;
pub mod integrators;
pub mod smallmat;

pub use error::{Error, Result};
pub use fields::{ElectricField, MagneticField, ProblemSpec};
pub use integrators::{Method, ParticleState, SchemeContext};
