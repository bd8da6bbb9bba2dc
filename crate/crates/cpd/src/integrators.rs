//! Time steppers.
//!
//! * [`step_s2_new`] — the frozen-field Strang splitting. The rotation
//!   subflow uses the field matrix fixed at the anchor position; the spatial
//!   variation of the field and the electric kick live in the other subflow.
//! * [`step_s2_vp`] — the classical drift/kick Strang splitting baseline.
//! * [`subflow_s`] / [`subflow_t`] — the exact propagators the new scheme is
//!   composed from, kept public so the consolidated one-step formula can be
//!   cross-checked against the literal composition.
//! * [`step_s2_new_rescaled`] — the same scheme in the time-rescaled
//!   variables `tau = t/eps`, equivalent step by step to the standard form.
//! * [`reference_solve`] — adaptive Dormand-Prince 5(4) reference solver,
//!   cross-validated by the fixed-step [`rk4_oracle`].

use crate::error::{Error, Result};
use crate::fields::ProblemSpec;
use crate::smallmat::{decompose, hat, rodrigues_exp, rodrigues_phi1, Mat3, Vec3};

/// Guard on `|x| + |v|`; beyond this the trajectory is reported as blown up
/// instead of emitting NaN rows downstream.
pub const BLOWUP_GUARD: f64 = 1e12;

/// A phase-space point with its time stamp. For rescaled trajectories the
/// same struct holds `(z, w, tau)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleState {
    pub x: Vec3,
    pub v: Vec3,
    pub t: f64,
}

impl ParticleState {
    pub fn new(x: Vec3, v: Vec3, t: f64) -> Self {
        Self { x, v, t }
    }

    /// The problem's initial condition at t = 0.
    pub fn initial(problem: &ProblemSpec) -> Self {
        Self::new(problem.x0, problem.v0, 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.v.is_finite() && self.t.is_finite()
    }
}

/// Which one-step map to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    S2New,
    S2Vp,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::S2New, Method::S2Vp];

    pub fn name(self) -> &'static str {
        match self {
            Method::S2New => "s2new",
            Method::S2Vp => "s2vp",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "s2new" => Ok(Method::S2New),
            "s2vp" => Ok(Method::S2Vp),
            other => Err(Error::InvalidArgument(format!(
                "unknown method '{other}' (expected s2new or s2vp)"
            ))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Everything a stepper needs that is fixed along a trajectory: the problem,
/// `eps`, the step size, the frozen field matrix at the anchor position, and
/// the half-step blocks `exp(h hat(B0) / 2 eps)` and `phi1(h hat(B0) / 2 eps)`
/// that depend only on `(h, eps, B0)`.
#[derive(Clone)]
pub struct SchemeContext {
    pub problem: ProblemSpec,
    pub eps: f64,
    /// Step size. Negative values integrate backwards; the symmetry tests
    /// rely on that.
    pub h: f64,
    b0: Vec3,
    b0_hat: Mat3,
    exp_half: Mat3,
    phi1_half: Mat3,
}

impl SchemeContext {
    /// Context anchored at the problem's initial position, exactly as the
    /// scheme prescribes (the frozen matrix uses `x0`, not the running
    /// position).
    pub fn new(problem: ProblemSpec, eps: f64, h: f64) -> Result<Self> {
        let anchor = problem.x0;
        Self::anchored_at(problem, eps, h, anchor)
    }

    /// Context with the frozen field matrix taken at an arbitrary anchor.
    /// Restarting an integration mid-trajectory with a fresh anchor is a
    /// deliberate deviation knob; nothing in this crate does it by default.
    pub fn anchored_at(problem: ProblemSpec, eps: f64, h: f64, anchor: Vec3) -> Result<Self> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "eps must be in (0, 1], got {eps}"
            )));
        }
        if h == 0.0 || !h.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "step size must be finite and nonzero, got {h}"
            )));
        }
        let b0 = problem.scaled_b(eps, anchor);
        let b0_hat = hat(b0);
        let arg = decompose(b0, (0.5 * h) / eps);
        Ok(Self {
            problem,
            eps,
            h,
            b0,
            b0_hat,
            exp_half: rodrigues_exp(arg),
            phi1_half: rodrigues_phi1(arg),
        })
    }

    /// Same anchor and problem, different step size (used for the final
    /// partial step of a horizon and for backward steps).
    pub fn with_step(&self, h: f64) -> Result<Self> {
        if h == 0.0 || !h.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "step size must be finite and nonzero, got {h}"
            )));
        }
        let arg = decompose(self.b0, (0.5 * h) / self.eps);
        Ok(Self {
            problem: self.problem.clone(),
            eps: self.eps,
            h,
            b0: self.b0,
            b0_hat: self.b0_hat,
            exp_half: rodrigues_exp(arg),
            phi1_half: rodrigues_phi1(arg),
        })
    }

    /// The frozen field vector `B(eps^q x_anchor)`.
    pub fn b0(&self) -> Vec3 {
        self.b0
    }

    /// The frozen skew matrix `hat(B0)`.
    pub fn b0_hat(&self) -> Mat3 {
        self.b0_hat
    }

    /// Cached `exp(h hat(B0) / (2 eps))`.
    pub fn exp_half(&self) -> Mat3 {
        self.exp_half
    }

    /// Cached `phi1(h hat(B0) / (2 eps))`.
    pub fn phi1_half(&self) -> Mat3 {
        self.phi1_half
    }
}

/// Exact propagator of the frozen-rotation subflow:
/// `x' = x + dt phi1((dt/eps) hat(B0)) v`, `v' = exp((dt/eps) hat(B0)) v`.
pub fn subflow_s(ctx: &SchemeContext, s: ParticleState, dt: f64) -> ParticleState {
    let arg = decompose(ctx.b0, dt / ctx.eps);
    let phi1 = rodrigues_phi1(arg);
    let rot = rodrigues_exp(arg);
    ParticleState::new(s.x + (phi1 * s.v) * dt, rot * s.v, s.t + dt)
}

/// Exact propagator of the field-variation + electric-kick subflow:
/// position is frozen, and with `D = hat(B(eps^q x)) - hat(B0)`,
/// `v' = exp((dt/eps) D) v + dt phi1((dt/eps) D) E(x)`.
pub fn subflow_t(ctx: &SchemeContext, s: ParticleState, dt: f64) -> Result<ParticleState> {
    let diff = ctx.problem.scaled_b(ctx.eps, s.x) - ctx.b0;
    let arg = decompose(diff, dt / ctx.eps);
    let e = ctx.problem.e_field(s.x)?;
    let v = rodrigues_exp(arg) * s.v + (rodrigues_phi1(arg) * e) * dt;
    Ok(ParticleState::new(s.x, v, s.t + dt))
}

/// One step of the frozen-field splitting, in consolidated form.
///
/// Equivalent to `subflow_s(h/2) . subflow_t(h) . subflow_s(h/2)` up to a
/// couple of ulps; with the midpoint `z = x + (h/2) phi1_half v` and
/// `D = hat(B(eps^q z)) - hat(B0)`:
///
/// ```text
/// x' = x + (h/2) phi1_half (I + e^{hD/eps} exp_half) v
///        + (h^2/2) phi1_half phi1(hD/eps) E(z)
/// v' = exp_half e^{hD/eps} exp_half v + h exp_half phi1(hD/eps) E(z)
/// ```
pub fn step_s2_new(ctx: &SchemeContext, s: ParticleState) -> Result<ParticleState> {
    let h = ctx.h;
    let half_h = 0.5 * h;

    let z_bar = s.x + (ctx.phi1_half * s.v) * half_h;
    let diff = ctx.problem.scaled_b(ctx.eps, z_bar) - ctx.b0;
    let arg = decompose(diff, h / ctx.eps);
    let exp_diff = rodrigues_exp(arg);
    let phi1_diff = rodrigues_phi1(arg);
    let e_mid = ctx.problem.e_field(z_bar)?;

    let v_half = ctx.exp_half * s.v;
    let v_rot = exp_diff * v_half;
    let kick = phi1_diff * e_mid;

    let x_new =
        s.x + (ctx.phi1_half * (s.v + v_rot)) * half_h + (ctx.phi1_half * kick) * (half_h * h);
    let v_new = ctx.exp_half * v_rot + (ctx.exp_half * kick) * h;
    Ok(ParticleState::new(x_new, v_new, s.t + h))
}

/// One step of the drift/kick Strang splitting baseline:
///
/// ```text
/// x_half = x + (h/2) v
/// v'     = exp((h/eps) hat(B(eps^q x_half))) v
///            + h phi1((h/eps) hat(B(eps^q x_half))) E(x_half)
/// x'     = x + (h/2) v + (h/2) v'
/// ```
///
/// The v-update runs first; the x-update references the new velocity.
pub fn step_s2_vp(ctx: &SchemeContext, s: ParticleState) -> Result<ParticleState> {
    let h = ctx.h;
    let x_half = s.x + s.v * (0.5 * h);
    let b_mid = ctx.problem.scaled_b(ctx.eps, x_half);
    let arg = decompose(b_mid, h / ctx.eps);
    let e_mid = ctx.problem.e_field(x_half)?;
    let v_new = rodrigues_exp(arg) * s.v + (rodrigues_phi1(arg) * e_mid) * h;
    let x_new = x_half + v_new * (0.5 * h);
    Ok(ParticleState::new(x_new, v_new, s.t + h))
}

/// One step of the frozen-field splitting for the time-rescaled system
/// `z' = eps w`, `w' = w x B(eps^q z) + eps E(z)` with `tau = t / eps`.
///
/// For any state, a standard step with `h = eps * frak_h` and a rescaled
/// step with `frak_h` produce the same `(x, v)`.
pub fn step_s2_new_rescaled(
    ctx: &SchemeContext,
    s: ParticleState,
    frak_h: f64,
) -> Result<ParticleState> {
    let eps = ctx.eps;
    let arg_half = decompose(ctx.b0, 0.5 * frak_h);
    let exp_half = rodrigues_exp(arg_half);
    let phi1_half = rodrigues_phi1(arg_half);

    let z_bar = s.x + (phi1_half * s.v) * (0.5 * eps * frak_h);
    let diff = ctx.problem.scaled_b(eps, z_bar) - ctx.b0;
    let arg_diff = decompose(diff, frak_h);
    let exp_diff = rodrigues_exp(arg_diff);
    let phi1_diff = rodrigues_phi1(arg_diff);
    let e_mid = ctx.problem.e_field(z_bar)?;

    let w_half = exp_half * s.v;
    let w_rot = exp_diff * w_half;
    let kick = phi1_diff * e_mid;

    let z_new = s.x
        + (phi1_half * (s.v + w_rot)) * (0.5 * eps * frak_h)
        + (phi1_half * kick) * (0.5 * eps * eps * frak_h * frak_h);
    let w_new = exp_half * w_rot + (exp_half * kick) * (eps * frak_h);
    Ok(ParticleState::new(z_new, w_new, s.t + frak_h))
}

/// Apply the chosen one-step map.
pub fn step(ctx: &SchemeContext, method: Method, s: ParticleState) -> Result<ParticleState> {
    match method {
        Method::S2New => step_s2_new(ctx, s),
        Method::S2Vp => step_s2_vp(ctx, s),
    }
}

fn check_blowup(s: &ParticleState) -> Result<()> {
    let norm = s.x.norm() + s.v.norm();
    if norm.is_nan() || norm > BLOWUP_GUARD {
        return Err(Error::BlowUp { t: s.t, norm });
    }
    Ok(())
}

/// Run `n_steps` fixed steps from the problem's initial condition.
///
/// Records the initial state, every `record_every`-th state, and the final
/// state (once). Fully deterministic: identical inputs give bit-identical
/// trajectories.
pub fn integrate(
    ctx: &SchemeContext,
    method: Method,
    n_steps: usize,
    record_every: usize,
) -> Result<Vec<ParticleState>> {
    if n_steps == 0 {
        return Err(Error::InvalidArgument("n_steps must be >= 1".into()));
    }
    if record_every == 0 {
        return Err(Error::InvalidArgument("record_every must be >= 1".into()));
    }
    let mut state = ParticleState::initial(&ctx.problem);
    let mut trajectory = Vec::with_capacity(n_steps / record_every + 2);
    trajectory.push(state);
    for n in 1..=n_steps {
        state = step(ctx, method, state)?;
        check_blowup(&state)?;
        if n % record_every == 0 || n == n_steps {
            trajectory.push(state);
        }
    }
    Ok(trajectory)
}

/// Integrate from 0 to `t_end`, taking `floor(t_end / h)` full steps and one
/// final short step when `t_end` is not a multiple of `h`. The experiment
/// grids are dyadic, so the partial-step path only fires for user-chosen
/// horizons.
pub fn integrate_horizon(
    ctx: &SchemeContext,
    method: Method,
    t_end: f64,
    record_every: usize,
) -> Result<Vec<ParticleState>> {
    if t_end.is_nan() || t_end <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "t_end must be positive, got {t_end}"
        )));
    }
    if record_every == 0 {
        return Err(Error::InvalidArgument("record_every must be >= 1".into()));
    }
    let ratio = t_end / ctx.h;
    let rounded = ratio.round();
    // Treat near-integer ratios as exact to avoid a spurious 1e-16 step.
    let (full_steps, partial) = if (ratio - rounded).abs() <= 1e-9 * ratio.max(1.0) {
        (rounded as usize, None)
    } else {
        let n = ratio.floor() as usize;
        (n, Some(t_end - n as f64 * ctx.h))
    };

    let mut state = ParticleState::initial(&ctx.problem);
    let mut trajectory = Vec::with_capacity(full_steps / record_every + 2);
    trajectory.push(state);
    for n in 1..=full_steps {
        state = step(ctx, method, state)?;
        check_blowup(&state)?;
        if n % record_every == 0 || (n == full_steps && partial.is_none()) {
            trajectory.push(state);
        }
    }
    if let Some(h_last) = partial {
        let ctx_last = ctx.with_step(h_last)?;
        state = step(&ctx_last, method, state)?;
        check_blowup(&state)?;
        trajectory.push(state);
    }
    Ok(trajectory)
}

// ---------------------------------------------------------------------------
// Reference solvers
// ---------------------------------------------------------------------------

/// Settings for the adaptive reference solver.
#[derive(Debug, Clone, Copy)]
pub struct RefSolverConfig {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// First step size; any value <= 0 selects `min(1e-3, eps/10)`, small
    /// enough to resolve the O(eps) gyration before the controller adapts.
    pub initial_step: f64,
}

impl Default for RefSolverConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-12,
            max_steps: 10_000_000,
            initial_step: 0.0,
        }
    }
}

/// Right-hand side of the governing system:
/// `x' = v`, `v' = v x B(eps^q x)/eps + E(x)`.
fn lorentz_rhs(problem: &ProblemSpec, eps: f64, x: Vec3, v: Vec3) -> Result<(Vec3, Vec3)> {
    let b = problem.scaled_b(eps, x);
    let e = problem.e_field(x)?;
    Ok((v, v.cross(b) * (1.0 / eps) + e))
}

// Dormand-Prince 5(4) tableau. The stage times are listed for reference
// only: the governing system is autonomous.
#[allow(dead_code)]
const DP_C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// Fifth-order weights are DP_A[6] (FSAL); these are b5 - b4, used for the
// embedded error estimate.
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Adaptive Dormand-Prince 5(4) with PI step-size control, integrating the
/// governing system from the problem's initial condition to exactly `t_end`
/// (the final step is clamped).
pub fn reference_solve(
    problem: &ProblemSpec,
    eps: f64,
    t_end: f64,
    cfg: &RefSolverConfig,
) -> Result<ParticleState> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "eps must be in (0, 1], got {eps}"
        )));
    }
    if t_end < 0.0 || !t_end.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "t_end must be non-negative, got {t_end}"
        )));
    }
    if !(cfg.rtol > 0.0 && cfg.atol > 0.0) {
        return Err(Error::InvalidArgument(
            "rtol and atol must be positive".into(),
        ));
    }

    let mut state = ParticleState::initial(problem);
    if t_end == 0.0 {
        return Ok(state);
    }

    // Controller constants from the classic dopri5 implementation.
    const SAFE: f64 = 0.9;
    const BETA: f64 = 0.04;
    const EXPO1: f64 = 0.2 - BETA * 0.75;
    const FAC_SHRINK_MAX: f64 = 0.2; // at most 5x shrink per step
    const FAC_GROW_MAX: f64 = 10.0; // at most 10x growth per step

    let mut h = if cfg.initial_step > 0.0 {
        cfg.initial_step
    } else {
        (1e-3f64).min(eps / 10.0)
    };
    h = h.min(t_end);

    let mut facold: f64 = 1e-4;
    let mut k1 = lorentz_rhs(problem, eps, state.x, state.v)?;
    let mut n_steps = 0usize;

    while state.t < t_end {
        if n_steps >= cfg.max_steps {
            return Err(Error::MaxStepsExceeded {
                t_reached: state.t,
                t_end,
                max_steps: cfg.max_steps,
            });
        }
        n_steps += 1;

        let last = state.t + h >= t_end;
        if last {
            h = t_end - state.t;
        }

        // Stage derivatives; k[0] is the FSAL value from the previous step.
        let mut kx = [Vec3::ZERO; 7];
        let mut kv = [Vec3::ZERO; 7];
        kx[0] = k1.0;
        kv[0] = k1.1;
        for i in 1..7 {
            let mut xs = Vec3::ZERO;
            let mut vs = Vec3::ZERO;
            for j in 0..i {
                let a = DP_A[i][j];
                if a != 0.0 {
                    xs = xs + kx[j] * a;
                    vs = vs + kv[j] * a;
                }
            }
            let x_stage = state.x + xs * h;
            let v_stage = state.v + vs * h;
            let (dx, dv) = lorentz_rhs(problem, eps, x_stage, v_stage)?;
            kx[i] = dx;
            kv[i] = dv;
        }

        // Fifth-order solution (row 7 of the tableau) and embedded error.
        let x_new = state.x
            + (kx[0] * DP_A[6][0]
                + kx[2] * DP_A[6][2]
                + kx[3] * DP_A[6][3]
                + kx[4] * DP_A[6][4]
                + kx[5] * DP_A[6][5])
                * h;
        let v_new = state.v
            + (kv[0] * DP_A[6][0]
                + kv[2] * DP_A[6][2]
                + kv[3] * DP_A[6][3]
                + kv[4] * DP_A[6][4]
                + kv[5] * DP_A[6][5])
                * h;
        let (dx7, dv7) = lorentz_rhs(problem, eps, x_new, v_new)?;
        kx[6] = dx7;
        kv[6] = dv7;

        let mut ex = Vec3::ZERO;
        let mut ev = Vec3::ZERO;
        for i in 0..7 {
            if DP_E[i] != 0.0 {
                ex = ex + kx[i] * DP_E[i];
                ev = ev + kv[i] * DP_E[i];
            }
        }
        ex = ex * h;
        ev = ev * h;

        let mut err_sq = 0.0;
        for c in 0..3 {
            let sc = cfg.atol + cfg.rtol * state.x[c].abs().max(x_new[c].abs());
            err_sq += (ex[c] / sc) * (ex[c] / sc);
            let sc = cfg.atol + cfg.rtol * state.v[c].abs().max(v_new[c].abs());
            err_sq += (ev[c] / sc) * (ev[c] / sc);
        }
        let err = (err_sq / 6.0).sqrt();

        let fac11 = err.powf(EXPO1);
        if err <= 1.0 {
            // PI control: combine this error with the previous accepted one.
            let fac =
                (fac11 / facold.powf(BETA) / SAFE).clamp(1.0 / FAC_GROW_MAX, 1.0 / FAC_SHRINK_MAX);
            facold = err.max(1e-4);
            let t_new = if last { t_end } else { state.t + h };
            state = ParticleState::new(x_new, v_new, t_new);
            check_blowup(&state)?;
            k1 = (kx[6], kv[6]);
            h /= fac;
        } else {
            let fac = (fac11 / SAFE).min(1.0 / FAC_SHRINK_MAX);
            h /= fac;
        }
    }
    Ok(state)
}

/// Classical fixed-step RK4 on the governing system; brute-force oracle for
/// cross-validating [`reference_solve`]. `h` must divide `t_end` within
/// rounding.
pub fn rk4_oracle(problem: &ProblemSpec, eps: f64, t_end: f64, h: f64) -> Result<ParticleState> {
    if t_end == 0.0 {
        return Ok(ParticleState::initial(problem));
    }
    if h.is_nan() || h <= 0.0 || t_end.is_nan() || t_end < 0.0 {
        return Err(Error::InvalidArgument(
            "rk4 oracle needs positive h and t_end".into(),
        ));
    }
    let ratio = t_end / h;
    let n = ratio.round();
    if (ratio - n).abs() > 1e-6 {
        return Err(Error::InvalidArgument(format!(
            "h = {h} does not divide t_end = {t_end}"
        )));
    }
    let n = n as usize;
    let mut s = ParticleState::initial(problem);
    for i in 0..n {
        let (k1x, k1v) = lorentz_rhs(problem, eps, s.x, s.v)?;
        let (k2x, k2v) = lorentz_rhs(problem, eps, s.x + k1x * (0.5 * h), s.v + k1v * (0.5 * h))?;
        let (k3x, k3v) = lorentz_rhs(problem, eps, s.x + k2x * (0.5 * h), s.v + k2v * (0.5 * h))?;
        let (k4x, k4v) = lorentz_rhs(problem, eps, s.x + k3x * h, s.v + k3v * h)?;
        let x = s.x + (k1x + (k2x + k3x) * 2.0 + k4x) * (h / 6.0);
        let v = s.v + (k1v + (k2v + k3v) * 2.0 + k4v) * (h / 6.0);
        s = ParticleState::new(x, v, (i + 1) as f64 * h);
        check_blowup(&s)?;
    }
    s.t = t_end;
    Ok(s)
}
