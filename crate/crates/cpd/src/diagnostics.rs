//! Measured quantities: energy, parallel-velocity projection, relative error
//! metrics against a reference solution, energy-error series, and log-log
//! slope fits for order studies.

use crate::error::{Error, Result};
use crate::fields::ProblemSpec;
use crate::integrators::ParticleState;
use crate::smallmat::Vec3;

/// Denominators below this become explicit errors instead of huge ratios.
pub const DENOM_GUARD: f64 = 1e-14;

/// Relative error of a numerical state against a reference state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    /// `|x_num - x_ref| / |x_ref|`
    pub errx: f64,
    /// `|vpar_num - vpar_ref| / |vpar_ref|`, each projection taken onto the
    /// field at its own position.
    pub errv_par: f64,
    /// `errx + errv_par`
    pub error: f64,
}

/// Relative energy error along a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergySeries {
    pub times: Vec<f64>,
    pub e_h: Vec<f64>,
}

impl EnergySeries {
    /// Largest energy error over `lo < t <= hi`.
    pub fn max_over(&self, lo: f64, hi: f64) -> f64 {
        self.times
            .iter()
            .zip(&self.e_h)
            .filter(|(t, _)| **t > lo && **t <= hi)
            .map(|(_, e)| *e)
            .fold(0.0, f64::max)
    }

    pub fn max(&self) -> f64 {
        self.e_h.iter().copied().fold(0.0, f64::max)
    }
}

/// Ordinary least-squares fit of `log2 y` against `log2 x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Total energy `|v|^2 / 2 + U(x)`; conserved exactly by the true flow.
pub fn hamiltonian(problem: &ProblemSpec, s: &ParticleState) -> Result<f64> {
    Ok(s.v.norm_sq() / 2.0 + problem.potential(s.x)?)
}

/// Component of `v` parallel to the local magnetic field:
/// `(Bt . v) Bt` with `Bt = B(eps^q x) / |B(eps^q x)|`.
pub fn v_parallel(problem: &ProblemSpec, eps: f64, s: &ParticleState) -> Result<Vec3> {
    let b = problem.scaled_b(eps, s.x);
    let norm = b.norm();
    if norm < 1e-12 {
        return Err(Error::ZeroField { x: s.x, norm });
    }
    let unit = b * (1.0 / norm);
    Ok(unit * unit.dot(s.v))
}

fn guarded_rel(num: Vec3, denom: Vec3, what: &'static str) -> Result<f64> {
    let d = denom.norm();
    if d < DENOM_GUARD {
        return Err(Error::DivisionGuard { what, value: d });
    }
    Ok(num.norm() / d)
}

/// Relative position and parallel-velocity errors of `numerical` against
/// `reference`. The numerical projection uses the field at the numerical
/// position and the reference projection uses the field at the reference
/// position.
pub fn error_report(
    problem: &ProblemSpec,
    eps: f64,
    numerical: &ParticleState,
    reference: &ParticleState,
) -> Result<ErrorReport> {
    let errx = guarded_rel(numerical.x - reference.x, reference.x, "|x_ref|")?;
    let vpar_num = v_parallel(problem, eps, numerical)?;
    let vpar_ref = v_parallel(problem, eps, reference)?;
    let errv_par = guarded_rel(vpar_num - vpar_ref, vpar_ref, "|vpar_ref|")?;
    Ok(ErrorReport {
        errx,
        errv_par,
        error: errx + errv_par,
    })
}

/// Relative error of the perpendicular velocity component. Reported as a
/// courtesy column next to [`error_report`]; no bound is claimed for it.
/// Falls back to the absolute error when the reference component is tiny.
pub fn perp_error(
    problem: &ProblemSpec,
    eps: f64,
    numerical: &ParticleState,
    reference: &ParticleState,
) -> Result<f64> {
    let perp_num = numerical.v - v_parallel(problem, eps, numerical)?;
    let perp_ref = reference.v - v_parallel(problem, eps, reference)?;
    let d = perp_ref.norm();
    if d < DENOM_GUARD {
        return Ok((perp_num - perp_ref).norm());
    }
    Ok((perp_num - perp_ref).norm() / d)
}

/// Relative energy error per recorded state:
/// `|H(x, v) - H(x0, v0)| / |H(x0, v0)|`. The first entry is exactly zero.
pub fn energy_series(problem: &ProblemSpec, trajectory: &[ParticleState]) -> Result<EnergySeries> {
    let first = trajectory.first().ok_or_else(|| {
        Error::InvalidArgument("energy series needs a non-empty trajectory".into())
    })?;
    let h0 = hamiltonian(problem, first)?;
    if h0.abs() < DENOM_GUARD {
        return Err(Error::DivisionGuard {
            what: "|H(x0, v0)|",
            value: h0.abs(),
        });
    }
    let mut times = Vec::with_capacity(trajectory.len());
    let mut e_h = Vec::with_capacity(trajectory.len());
    for s in trajectory {
        times.push(s.t);
        e_h.push((hamiltonian(problem, s)? - h0).abs() / h0.abs());
    }
    Ok(EnergySeries { times, e_h })
}

/// Least squares on `(log2 x, log2 y)`. Base-2 logs keep the dyadic sweep
/// grids at round numbers. All data must be positive, with at least three
/// points.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidArgument(format!(
            "slope fit needs equal lengths, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 3 {
        return Err(Error::InvalidArgument(
            "slope fit needs at least 3 points".into(),
        ));
    }
    if xs.iter().chain(ys).any(|&v| !v.is_finite() || v <= 0.0) {
        return Err(Error::InvalidArgument(
            "slope fit needs strictly positive data".into(),
        ));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.log2()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.log2()).collect();
    let n = lx.len() as f64;
    let mean_x = lx.iter().sum::<f64>() / n;
    let mean_y = ly.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in lx.iter().zip(&ly) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    if sxx == 0.0 {
        return Err(Error::InvalidArgument(
            "slope fit needs at least two distinct x values".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    // Constant y (up to rounding of the log transform): the flat fit is
    // exact. 1e-20 is far below any genuine variation in log space.
    let r2 = if syy <= 1e-20 {
        1.0
    } else {
        (1.0 - (syy - slope * sxy) / syy).clamp(0.0, 1.0)
    };
    Ok(SlopeFit {
        slope,
        intercept,
        r2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::by_name;
    use crate::integrators::{reference_solve, RefSolverConfig};
    use crate::testrng::TestRng;

    #[test]
    fn hamiltonian_on_the_initial_point() {
        let p1 = by_name("p1-uniform").unwrap();
        let s = ParticleState::initial(&p1);
        // |v0|^2 = 0.0506; U = 1 / sqrt(1.01)
        let expected = 0.0506 / 2.0 + 1.0 / 1.01f64.sqrt();
        let h = hamiltonian(&p1, &s).unwrap();
        assert!((h - expected).abs() < 1e-15);
        assert!((h - 1.02033719).abs() < 1e-8);
    }

    #[test]
    fn hamiltonian_zero_for_rest_state_at_origin() {
        let p3 = by_name("p3-q15").unwrap();
        let s = ParticleState::new(Vec3::ZERO, Vec3::ZERO, 0.0);
        assert_eq!(hamiltonian(&p3, &s).unwrap(), 0.0);
    }

    #[test]
    fn hamiltonian_constant_along_reference_trajectory() {
        let p1 = by_name("p1-uniform").unwrap();
        let eps = 2f64.powi(-4);
        let s0 = ParticleState::initial(&p1);
        let h0 = hamiltonian(&p1, &s0).unwrap();
        for t in [0.25, 1.0] {
            let s = reference_solve(&p1, eps, t, &RefSolverConfig::default()).unwrap();
            let h = hamiltonian(&p1, &s).unwrap();
            assert!((h - h0).abs() / h0.abs() < 1e-9, "drift at t = {t}");
        }
    }

    #[test]
    fn v_parallel_of_aligned_and_orthogonal_vectors() {
        let p1 = by_name("p1-uniform").unwrap();
        let b = Vec3::new(1.0, 0.0, 0.5);
        // Aligned: projection returns the vector itself.
        let aligned = ParticleState::new(p1.x0, b * 0.3, 0.0);
        let proj = v_parallel(&p1, 0.5, &aligned).unwrap();
        assert!((proj - aligned.v).norm_inf() < 1e-15);
        // Orthogonal: projection vanishes.
        let ortho = ParticleState::new(p1.x0, Vec3::new(0.0, 1.0, 0.0), 0.0);
        let proj = v_parallel(&p1, 0.5, &ortho).unwrap();
        assert!(proj.norm_inf() < 1e-15);
    }

    #[test]
    fn v_parallel_hand_computed_projection() {
        let p1 = by_name("p1-uniform").unwrap();
        let s = ParticleState::initial(&p1);
        let proj = v_parallel(&p1, 0.25, &s).unwrap();
        // Bt . v = 0.19 / sqrt(1.25)
        let coeff = 0.19 / 1.25f64.sqrt();
        let unit = Vec3::new(1.0, 0.0, 0.5) * (1.0 / 1.25f64.sqrt());
        assert!((proj - unit * coeff).norm_inf() < 1e-15);
        assert!((coeff - 0.169941).abs() < 1e-6);
    }

    #[test]
    fn v_parallel_is_idempotent_and_contractive() {
        let mut rng = TestRng::new(77);
        let p2 = by_name("p2-q2").unwrap();
        for _ in 0..50 {
            let s = ParticleState::new(
                Vec3::new(
                    rng.uniform(-1.0, 1.0),
                    rng.uniform(-1.0, 1.0),
                    rng.uniform(-1.0, 1.0),
                ),
                Vec3::new(
                    rng.uniform(-2.0, 2.0),
                    rng.uniform(-2.0, 2.0),
                    rng.uniform(-2.0, 2.0),
                ),
                0.0,
            );
            let once = v_parallel(&p2, 0.25, &s).unwrap();
            let twice = v_parallel(&p2, 0.25, &ParticleState::new(s.x, once, 0.0)).unwrap();
            assert!((twice - once).norm_inf() <= 1e-14);
            assert!(once.norm() <= s.v.norm() + 1e-14);
        }
    }

    #[test]
    fn v_parallel_rejects_vanishing_field() {
        use crate::fields::{ElectricField, MagneticField, ProblemSpec};
        let p = ProblemSpec {
            name: "zero-b",
            magnetic: MagneticField::uniform(Vec3::ZERO),
            electric: ElectricField::new(|_| 0.0, |_| Vec3::ZERO),
            q: 2.0,
            x0: Vec3::ZERO,
            v0: Vec3::new(1.0, 0.0, 0.0),
            t_end: 1.0,
        };
        let s = ParticleState::initial(&p);
        assert!(matches!(
            v_parallel(&p, 0.5, &s),
            Err(Error::ZeroField { .. })
        ));
    }

    #[test]
    fn error_report_of_identical_states_is_zero() {
        let p1 = by_name("p1-uniform").unwrap();
        let s = ParticleState::initial(&p1);
        let r = error_report(&p1, 0.25, &s, &s).unwrap();
        assert_eq!(r.errx, 0.0);
        assert_eq!(r.errv_par, 0.0);
        assert_eq!(r.error, 0.0);
    }

    #[test]
    fn error_report_doubling_position_gives_unit_errx() {
        let p1 = by_name("p1-uniform").unwrap();
        let reference = ParticleState::initial(&p1);
        let numerical = ParticleState::new(reference.x * 2.0, reference.v, 0.0);
        let r = error_report(&p1, 0.25, &numerical, &reference).unwrap();
        assert!((r.errx - 1.0).abs() < 1e-12);
        // Uniform field: the projection direction is position-independent,
        // so errv_par stays zero.
        assert!(r.errv_par < 1e-15);
        assert!((r.error - (r.errx + r.errv_par)).abs() < 1e-15);
    }

    #[test]
    fn error_report_guards_tiny_reference_norms() {
        let p1 = by_name("p1-uniform").unwrap();
        let reference = ParticleState::new(Vec3::new(1e-15, 0.0, 0.0), p1.v0, 0.0);
        let numerical = ParticleState::initial(&p1);
        assert!(matches!(
            error_report(&p1, 0.25, &numerical, &reference),
            Err(Error::DivisionGuard { .. })
        ));
    }

    #[test]
    fn energy_series_singleton_is_zero() {
        let p1 = by_name("p1-uniform").unwrap();
        let traj = [ParticleState::initial(&p1)];
        let series = energy_series(&p1, &traj).unwrap();
        assert_eq!(series.e_h, vec![0.0]);
    }

    #[test]
    fn energy_series_zero_for_rest_state_with_constant_field() {
        // v0 = 0 and E(x0) != 0 would accelerate, but a held position has
        // constant U, so a trajectory of repeated initial states has e_H = 0.
        let p1 = by_name("p1-uniform").unwrap();
        let s = ParticleState::new(p1.x0, Vec3::ZERO, 0.0);
        let traj = [
            s,
            ParticleState::new(s.x, s.v, 0.5),
            ParticleState::new(s.x, s.v, 1.0),
        ];
        let series = energy_series(&p1, &traj).unwrap();
        assert!(series.max() <= 1e-12);
    }

    #[test]
    fn energy_series_guards_zero_initial_energy() {
        let p3 = by_name("p3-q15").unwrap();
        let traj = [ParticleState::new(Vec3::ZERO, Vec3::ZERO, 0.0)];
        assert!(matches!(
            energy_series(&p3, &traj),
            Err(Error::DivisionGuard { .. })
        ));
    }

    #[test]
    fn slope_of_exact_quadratic_is_two() {
        let xs = [1.0, 2.0, 4.0, 8.0, 16.0];
        let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let fit = loglog_slope(&xs, &ys).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn slope_of_constant_data_is_zero() {
        let xs = [1.0, 2.0, 4.0];
        let ys = [3.5, 3.5, 3.5];
        let fit = loglog_slope(&xs, &ys).unwrap();
        assert!(fit.slope.abs() < 1e-12);
        assert_eq!(fit.r2, 1.0);
    }

    #[test]
    fn slope_of_reciprocal_is_minus_one() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x| 0.7 / x).collect();
        let fit = loglog_slope(&xs, &ys).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-12);
    }

    #[test]
    fn slope_rejects_bad_input() {
        assert!(loglog_slope(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(loglog_slope(&[1.0, 2.0, -3.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(loglog_slope(&[1.0, 2.0, 3.0], &[1.0, 0.0, 3.0]).is_err());
    }
}
