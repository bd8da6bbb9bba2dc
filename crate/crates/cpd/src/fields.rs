//! Electromagnetic environment: scaled magnetic fields `B(eps^q x)/eps`,
//! electric fields derived from scalar potentials, and the built-in problem
//! catalog.
//!
//! Field evaluators return the *unscaled* `B(y)`; the `1/eps` factor is
//! applied inside the steppers, where the scheme formulas mix `B/eps` with
//! field differences over `eps`. Keeping `B` unscaled here avoids dividing
//! twice.

use crate::error::{Error, Result};
use crate::smallmat::Vec3;
use std::sync::Arc;

/// Radius below which Coulomb-type potentials refuse to evaluate. Catalog
/// trajectories never get near the origin, so reaching it indicates a
/// configuration bug rather than physics.
pub const COULOMB_GUARD: f64 = 1e-12;

type FieldFn = dyn Fn(Vec3) -> Vec3 + Send + Sync;
type ScalarFn = dyn Fn(Vec3) -> f64 + Send + Sync;

/// A magnetic field `y -> B(y)`. Callers supply the slow argument
/// `y = eps^q x` themselves (see [`ProblemSpec::scaled_b`]).
///
/// The analysis behind the schemes needs `|B(0)| > 0`; all catalog fields
/// satisfy it.
#[derive(Clone)]
pub struct MagneticField {
    eval: Arc<FieldFn>,
    /// True when the evaluator ignores its argument entirely.
    pub uniform: bool,
}

impl MagneticField {
    pub fn new(eval: impl Fn(Vec3) -> Vec3 + Send + Sync + 'static) -> Self {
        Self {
            eval: Arc::new(eval),
            uniform: false,
        }
    }

    pub fn uniform(b: Vec3) -> Self {
        Self {
            eval: Arc::new(move |_| b),
            uniform: true,
        }
    }

    #[inline]
    pub fn eval(&self, y: Vec3) -> Vec3 {
        (self.eval)(y)
    }
}

/// An electric field `E(x) = -grad U(x)` given by a scalar potential and its
/// analytic gradient.
#[derive(Clone)]
pub struct ElectricField {
    potential: Arc<ScalarFn>,
    grad_potential: Arc<FieldFn>,
    /// Coulomb-type potentials are singular at the origin and guarded there.
    pub singular_at_origin: bool,
}

impl ElectricField {
    pub fn new(
        potential: impl Fn(Vec3) -> f64 + Send + Sync + 'static,
        grad_potential: impl Fn(Vec3) -> Vec3 + Send + Sync + 'static,
    ) -> Self {
        Self {
            potential: Arc::new(potential),
            grad_potential: Arc::new(grad_potential),
            singular_at_origin: false,
        }
    }

    pub fn coulomb() -> Self {
        let mut f = Self::new(
            |x: Vec3| 1.0 / x.norm(),
            // grad(1/r) = -x / r^3
            |x: Vec3| {
                let r2 = x.norm_sq();
                x * (-1.0 / (r2 * r2.sqrt()))
            },
        );
        f.singular_at_origin = true;
        f
    }

    fn guard(&self, x: Vec3) -> Result<()> {
        if self.singular_at_origin {
            let radius = x.norm();
            if radius < COULOMB_GUARD {
                return Err(Error::SingularPotential { x, radius });
            }
        }
        Ok(())
    }

    /// `U(x)`, with the singularity guard.
    pub fn potential(&self, x: Vec3) -> Result<f64> {
        self.guard(x)?;
        Ok((self.potential)(x))
    }

    /// `E(x) = -grad U(x)`, with the singularity guard.
    pub fn field(&self, x: Vec3) -> Result<Vec3> {
        self.guard(x)?;
        Ok(-(self.grad_potential)(x))
    }
}

impl std::fmt::Debug for MagneticField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MagneticField")
            .field("uniform", &self.uniform)
            .finish_non_exhaustive()
    }
}

impl std::fmt::Debug for ElectricField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ElectricField")
            .field("singular_at_origin", &self.singular_at_origin)
            .finish_non_exhaustive()
    }
}

/// One test problem: fields, scaling exponent, initial data and horizon.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    /// Stable CLI identifier (`p1-uniform`, `p2-q2`, `p3-q15`, `p4-q1`).
    pub name: &'static str,
    pub magnetic: MagneticField,
    pub electric: ElectricField,
    /// Spatial-variation exponent, in [1, 2]. For the uniform-field problem
    /// the field ignores its argument, so `q` is bookkeeping only; it is
    /// recorded as 2 by convention.
    pub q: f64,
    pub x0: Vec3,
    pub v0: Vec3,
    /// Default time horizon.
    pub t_end: f64,
}

impl ProblemSpec {
    /// `B(eps^q x)` — the unscaled field evaluated at the slow argument.
    /// The `1/eps` strength factor is applied by the steppers.
    #[inline]
    pub fn scaled_b(&self, eps: f64, x: Vec3) -> Vec3 {
        debug_assert!(eps > 0.0 && eps <= 1.0);
        self.magnetic.eval(x * eps.powf(self.q))
    }

    /// `E(x) = -grad U(x)` via the analytic gradient.
    #[inline]
    pub fn e_field(&self, x: Vec3) -> Result<Vec3> {
        self.electric.field(x)
    }

    /// `U(x)`.
    #[inline]
    pub fn potential(&self, x: Vec3) -> Result<f64> {
        self.electric.potential(x)
    }
}

/// The trigonometric perturbed field shared by problems 2-4:
/// `B(y) = (1 - sin(y2)/2, 1 + cos(y3)/2, 1 + cos(y1)/2)`.
fn trig_field() -> MagneticField {
    MagneticField::new(|y: Vec3| {
        Vec3::new(
            1.0 - y.y.sin() / 2.0,
            1.0 + y.z.cos() / 2.0,
            1.0 + y.x.cos() / 2.0,
        )
    })
}

/// The four built-in problems.
///
/// Problem 1 has a uniform field `(1, 0, 0.5)` and a Coulomb potential;
/// problems 2-4 share the trigonometric field and initial data but differ in
/// scaling exponent (`q` = 2, 1.5, 1) and potential.
pub fn catalog() -> Vec<ProblemSpec> {
    let x0_shared = Vec3::new(1.0 / 6.0, 1.0 / 8.0, 1.0 / 4.0);
    let v0_shared = Vec3::new(1.0 / 5.0, 1.0 / 3.0, 1.0 / 2.0);

    vec![
        ProblemSpec {
            name: "p1-uniform",
            magnetic: MagneticField::uniform(Vec3::new(1.0, 0.0, 0.5)),
            electric: ElectricField::coulomb(),
            q: 2.0,
            x0: Vec3::new(0.0, 1.0, 0.1),
            v0: Vec3::new(0.09, 0.05, 0.2),
            t_end: 1.0,
        },
        ProblemSpec {
            name: "p2-q2",
            magnetic: trig_field(),
            electric: ElectricField::coulomb(),
            q: 2.0,
            x0: x0_shared,
            v0: v0_shared,
            t_end: 1.0,
        },
        ProblemSpec {
            name: "p3-q15",
            magnetic: trig_field(),
            electric: ElectricField::new(
                |x: Vec3| x.x.powi(3) - x.y.powi(3) + x.x.powi(4) / 5.0 + x.y.powi(4) + x.z.powi(4),
                |x: Vec3| {
                    Vec3::new(
                        3.0 * x.x * x.x + 0.8 * x.x.powi(3),
                        -3.0 * x.y * x.y + 4.0 * x.y.powi(3),
                        4.0 * x.z.powi(3),
                    )
                },
            ),
            q: 1.5,
            x0: x0_shared,
            v0: v0_shared,
            t_end: 1.0,
        },
        ProblemSpec {
            name: "p4-q1",
            magnetic: trig_field(),
            electric: ElectricField::new(
                |x: Vec3| -(x.x / 2.0).sin() * x.y.sin() * x.z.sin(),
                |x: Vec3| {
                    Vec3::new(
                        -0.5 * (x.x / 2.0).cos() * x.y.sin() * x.z.sin(),
                        -(x.x / 2.0).sin() * x.y.cos() * x.z.sin(),
                        -(x.x / 2.0).sin() * x.y.sin() * x.z.cos(),
                    )
                },
            ),
            q: 1.0,
            x0: x0_shared,
            v0: v0_shared,
            t_end: 1.0,
        },
    ]
}

/// Look a catalog problem up by its CLI identifier.
pub fn by_name(name: &str) -> Result<ProblemSpec> {
    catalog()
        .into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| {
            Error::InvalidArgument(format!(
                "unknown problem '{name}' (expected one of: p1-uniform, p2-q2, p3-q15, p4-q1)"
            ))
        })
}
