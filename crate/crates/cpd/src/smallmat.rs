//! Fixed-size kernels for 3-vectors, 3x3 matrices, and the matrix functions
//! `exp(A)` and `phi1(A)` of skew-symmetric matrices.
//!
//! Everything here is pure and allocation-free. The Rodrigues closed forms
//! (`rodrigues_exp`, `rodrigues_phi1`) are the fast path used by the time
//! steppers; `series_exp` / `series_phi1` evaluate the same functions by
//! scaling-and-squaring on the truncated Taylor series and exist as an
//! independent cross-check.

use std::ops::{Add, Index, Mul, Neg, Sub};

/// A 3-component real vector. Used for positions, velocities and field values.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Self = Self::new(0.0, 0.0, 0.0);

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn dot(self, rhs: Self) -> f64 {
        self.x * rhs.x + self.y * rhs.y + self.z * rhs.z
    }

    #[inline]
    pub fn cross(self, rhs: Self) -> Self {
        Self::new(
            self.y * rhs.z - self.z * rhs.y,
            self.z * rhs.x - self.x * rhs.z,
            self.x * rhs.y - self.y * rhs.x,
        )
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Largest absolute component.
    #[inline]
    pub fn norm_inf(self) -> f64 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Index<usize> for Vec3 {
    type Output = f64;
    #[inline]
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index out of range: {i}"),
        }
    }
}

/// A dense 3x3 real matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3 {
    pub m: [[f64; 3]; 3],
}

impl Mat3 {
    pub const IDENTITY: Self = Self {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    pub const ZERO: Self = Self { m: [[0.0; 3]; 3] };

    #[inline]
    pub const fn from_rows(m: [[f64; 3]; 3]) -> Self {
        Self { m }
    }

    #[inline]
    pub fn transpose(self) -> Self {
        let m = self.m;
        Self::from_rows([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn det(self) -> f64 {
        let m = self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Max-absolute-entry norm.
    pub fn norm_inf(self) -> f64 {
        let mut n: f64 = 0.0;
        for row in &self.m {
            for &e in row {
                n = n.max(e.abs());
            }
        }
        n
    }

    /// Frobenius norm; cheap upper bound proxy for the spectral norm.
    pub fn norm_fro(self) -> f64 {
        let mut s = 0.0;
        for row in &self.m {
            for &e in row {
                s += e * e;
            }
        }
        s.sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.m.iter().flatten().all(|e| e.is_finite())
    }
}

impl Add for Mat3 {
    type Output = Mat3;
    fn add(self, rhs: Mat3) -> Mat3 {
        let mut out = Mat3::ZERO;
        for i in 0..3 {
            for j in 0..3 {
                out.m[i][j] = self.m[i][j] + rhs.m[i][j];
            }
        }
        out
    }
}

impl Sub for Mat3 {
    type Output = Mat3;
    fn sub(self, rhs: Mat3) -> Mat3 {
        let mut out = Mat3::ZERO;
        for i in 0..3 {
            for j in 0..3 {
                out.m[i][j] = self.m[i][j] - rhs.m[i][j];
            }
        }
        out
    }
}

impl Mul<f64> for Mat3 {
    type Output = Mat3;
    fn mul(self, s: f64) -> Mat3 {
        let mut out = self;
        for row in &mut out.m {
            for e in row {
                *e *= s;
            }
        }
        out
    }
}

impl Mul<Vec3> for Mat3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, v: Vec3) -> Vec3 {
        let m = self.m;
        Vec3::new(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }
}

impl Mul for Mat3 {
    type Output = Mat3;
    fn mul(self, rhs: Mat3) -> Mat3 {
        let mut out = Mat3::ZERO;
        for i in 0..3 {
            for j in 0..3 {
                out.m[i][j] = self.m[i][0] * rhs.m[0][j]
                    + self.m[i][1] * rhs.m[1][j]
                    + self.m[i][2] * rhs.m[2][j];
            }
        }
        out
    }
}

/// Canonical axis/angle decomposition of a scaled skew matrix:
/// `t * hat(b) = angle * hat(axis)` with `angle >= 0` and `|axis| = 1`
/// (the sign of `t` is folded into the axis).
#[derive(Debug, Clone, Copy)]
pub struct SkewAngle {
    pub axis: Vec3,
    pub angle: f64,
}

/// The skew-symmetric matrix with `hat(b) * v = v x b`:
///
/// ```text
/// [  0   b3  -b2 ]
/// [ -b3   0   b1 ]
/// [  b2  -b1   0 ]
/// ```
#[inline]
pub fn hat(b: Vec3) -> Mat3 {
    Mat3::from_rows([[0.0, b.z, -b.y], [-b.z, 0.0, b.x], [b.y, -b.x, 0.0]])
}

/// Decompose `t * hat(b)` as `angle * hat(axis)`.
///
/// `angle = |t| * |b|`; when the angle is zero the axis is set to e3 so the
/// result is still deterministic.
#[inline]
pub fn decompose(b: Vec3, t: f64) -> SkewAngle {
    let bn = b.norm();
    let angle = t.abs() * bn;
    if angle == 0.0 {
        return SkewAngle {
            axis: Vec3::new(0.0, 0.0, 1.0),
            angle: 0.0,
        };
    }
    let scale = if t < 0.0 { -1.0 / bn } else { 1.0 / bn };
    SkewAngle {
        axis: b * scale,
        angle,
    }
}

/// Below this angle the trigonometric coefficients of `phi1` switch to their
/// Taylor expansions; at the crossover both branches agree to < 1e-16 relative.
const SMALL_ANGLE: f64 = 1e-4;

/// The rotation `exp(angle * hat(axis))` by the Rodrigues formula
/// `I + sin(t) K + (1 - cos(t)) K^2` with `K = hat(axis)`.
pub fn rodrigues_exp(s: SkewAngle) -> Mat3 {
    if s.angle == 0.0 {
        return Mat3::IDENTITY;
    }
    let k = hat(s.axis);
    let k2 = k * k;
    let (sin_t, cos_t) = s.angle.sin_cos();
    Mat3::IDENTITY + k * sin_t + k2 * (1.0 - cos_t)
}

/// `phi1(angle * hat(axis))` where `phi1(A) = sum_k A^k / (k+1)!`.
///
/// Closed form `I + (1-cos t)/t K + (t - sin t)/t K^2` for angles above
/// `SMALL_ANGLE`; Taylor-expanded coefficients below it. `phi1` of a skew
/// matrix is never computed via `(exp(A) - I) A^{-1}` since `A` is singular.
pub fn rodrigues_phi1(s: SkewAngle) -> Mat3 {
    if s.angle == 0.0 {
        return Mat3::IDENTITY;
    }
    let t = s.angle;
    let (c1, c2) = if t < SMALL_ANGLE {
        let t2 = t * t;
        // (1 - cos t)/t and (t - sin t)/t to four terms each.
        let c1 = t * (1.0 / 2.0 - t2 * (1.0 / 24.0 - t2 * (1.0 / 720.0 - t2 / 40320.0)));
        let c2 = t2 * (1.0 / 6.0 - t2 * (1.0 / 120.0 - t2 * (1.0 / 5040.0 - t2 / 362880.0)));
        (c1, c2)
    } else {
        let (sin_t, cos_t) = t.sin_cos();
        ((1.0 - cos_t) / t, (t - sin_t) / t)
    };
    let k = hat(s.axis);
    let k2 = k * k;
    Mat3::IDENTITY + k * c1 + k2 * c2
}

/// Number of Taylor terms kept after scaling the argument to norm <= 1/2.
/// The tail is then below 1e-20, far under the 1e-13 target.
const SERIES_TERMS: usize = 24;

fn scaling_exponent(a: Mat3) -> i32 {
    let norm = a.norm_fro();
    if norm <= 0.5 {
        0
    } else {
        (norm / 0.5).log2().ceil() as i32
    }
}

/// `exp(A)` by scaling-and-squaring over the truncated Taylor series.
///
/// Independent of the Rodrigues path: operates on the raw matrix with plain
/// matrix products. Accurate to ~1e-13 relative for `|A| <= 50`.
pub fn series_exp(a: Mat3) -> Mat3 {
    let s = scaling_exponent(a);
    let b = a * 0.5f64.powi(s);
    let mut sum = Mat3::IDENTITY;
    let mut term = Mat3::IDENTITY;
    for k in 1..=SERIES_TERMS {
        term = term * b * (1.0 / k as f64);
        sum = sum + term;
    }
    let mut result = sum;
    for _ in 0..s {
        result = result * result;
    }
    result
}

/// `phi1(A) = sum_k A^k / (k+1)!` by scaling and the doubling identity
/// `phi1(2A) = (exp(A) + I) * phi1(A) / 2`.
pub fn series_phi1(a: Mat3) -> Mat3 {
    let s = scaling_exponent(a);
    let b = a * 0.5f64.powi(s);

    let mut exp = Mat3::IDENTITY;
    let mut phi = Mat3::IDENTITY;
    let mut term = Mat3::IDENTITY;
    for k in 1..=SERIES_TERMS {
        term = term * b * (1.0 / k as f64);
        exp = exp + term;
        phi = phi + term * (1.0 / (k + 1) as f64);
    }
    for _ in 0..s {
        phi = (exp + Mat3::IDENTITY) * phi * 0.5;
        exp = exp * exp;
    }
    phi
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn assert_mat_close(a: Mat3, b: Mat3, tol: f64) {
        let d = (a - b).norm_inf();
        assert!(
            d <= tol,
            "matrices differ by {d:.3e} > {tol:.3e}:\n{a:?}\n{b:?}"
        );
    }

    #[test]
    fn hat_of_zero_is_zero() {
        assert_eq!(hat(Vec3::ZERO), Mat3::ZERO);
    }

    #[test]
    fn hat_matches_cross_product() {
        // Hand-evaluated v x b for the catalog field direction.
        let b = Vec3::new(1.0, 0.0, 0.5);
        let v = Vec3::new(0.09, 0.05, 0.2);
        let hv = hat(b) * v;
        assert!((hv - Vec3::new(0.025, 0.155, -0.05)).norm_inf() < 1e-15);
        assert_eq!(hv, v.cross(b));

        let b = Vec3::new(0.0, 0.0, 1.0);
        let v = Vec3::new(1.0, 0.0, 0.0);
        assert_eq!(hat(b) * v, Vec3::new(0.0, -1.0, 0.0));
    }

    #[test]
    fn decompose_folds_sign_into_axis() {
        let s = decompose(Vec3::new(0.0, 0.0, 2.0), 0.5);
        assert_eq!(s.angle, 1.0);
        assert_eq!(s.axis, Vec3::new(0.0, 0.0, 1.0));

        let s = decompose(Vec3::new(0.0, 0.0, 2.0), -0.5);
        assert_eq!(s.angle, 1.0);
        assert_eq!(s.axis, Vec3::new(0.0, 0.0, -1.0));

        let s = decompose(Vec3::ZERO, 3.7);
        assert_eq!(s.angle, 0.0);
    }

    #[test]
    fn decompose_reconstructs_scaled_hat() {
        let b = Vec3::new(0.3, -1.2, 0.7);
        for &t in &[2.5, -0.03, 1e-9] {
            let s = decompose(b, t);
            assert!((s.axis.norm() - 1.0).abs() <= 1e-14);
            let rebuilt = hat(s.axis * s.angle);
            let target = hat(b) * t;
            assert_mat_close(rebuilt, target, 1e-15 * s.angle.max(1.0));
        }
    }

    #[test]
    fn rodrigues_exp_quarter_turn() {
        let s = SkewAngle {
            axis: Vec3::new(0.0, 0.0, 1.0),
            angle: PI / 2.0,
        };
        let r = rodrigues_exp(s);
        let expected = Mat3::from_rows([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]);
        assert_mat_close(r, expected, 1e-15);
    }

    #[test]
    fn rodrigues_exp_zero_and_full_period() {
        let z = SkewAngle {
            axis: Vec3::new(1.0, 0.0, 0.0),
            angle: 0.0,
        };
        assert_eq!(rodrigues_exp(z), Mat3::IDENTITY);

        let full = SkewAngle {
            axis: Vec3::new(0.0, 0.0, 1.0),
            angle: 2.0 * PI,
        };
        assert_mat_close(rodrigues_exp(full), Mat3::IDENTITY, 1e-14);
    }

    #[test]
    fn rodrigues_phi1_half_turn() {
        let s = SkewAngle {
            axis: Vec3::new(0.0, 0.0, 1.0),
            angle: PI,
        };
        let two_over_pi = 2.0 / PI;
        let expected = Mat3::from_rows([
            [0.0, two_over_pi, 0.0],
            [-two_over_pi, 0.0, 0.0],
            [0.0, 0.0, 1.0],
        ]);
        assert_mat_close(rodrigues_phi1(s), expected, 1e-15);
    }

    #[test]
    fn rodrigues_phi1_tiny_angle_matches_leading_terms() {
        let angle = 1e-9;
        let axis = Vec3::new(0.0, 0.0, 1.0);
        let s = SkewAngle { axis, angle };
        let omega = hat(axis * angle);
        let expected = Mat3::IDENTITY + omega * 0.5 + omega * omega * (1.0 / 6.0);
        assert_mat_close(rodrigues_phi1(s), expected, 1e-15);
        assert_mat_close(rodrigues_phi1(s), series_phi1(omega), 1e-15);
    }

    #[test]
    fn series_exp_trivial_cases() {
        assert_mat_close(series_exp(Mat3::ZERO), Mat3::IDENTITY, 0.0);
        let s = SkewAngle {
            axis: Vec3::new(0.0, 0.0, 1.0),
            angle: PI / 2.0,
        };
        assert_mat_close(
            series_exp(hat(Vec3::new(0.0, 0.0, 1.0)) * (PI / 2.0)),
            rodrigues_exp(s),
            1e-13,
        );
    }

    #[test]
    fn series_phi1_trivial_cases() {
        assert_mat_close(series_phi1(Mat3::ZERO), Mat3::IDENTITY, 0.0);
        let s = SkewAngle {
            axis: Vec3::new(0.0, 0.0, 1.0),
            angle: PI,
        };
        assert_mat_close(
            series_phi1(hat(Vec3::new(0.0, 0.0, 1.0)) * PI),
            rodrigues_phi1(s),
            1e-13,
        );
    }

    #[test]
    fn series_handles_non_skew_input() {
        // exp of a diagonal matrix is the diagonal of exponentials.
        let d = Mat3::from_rows([[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, -3.0]]);
        let e = series_exp(d);
        assert!((e.m[0][0] - 1f64.exp()).abs() < 1e-13);
        assert!((e.m[1][1] - 2f64.exp()).abs() < 1e-12);
        assert!((e.m[2][2] - (-3f64).exp()).abs() < 1e-13);
        // phi1(diag) entry-wise: (e^d - 1)/d
        let p = series_phi1(d);
        assert!((p.m[1][1] - (2f64.exp() - 1.0) / 2.0).abs() < 1e-12);
    }

    fn arb_axis_angle(max_angle: f64) -> impl Strategy<Value = SkewAngle> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, 1e-12..max_angle).prop_filter_map(
            "axis must not vanish",
            |(x, y, z, angle)| {
                let v = Vec3::new(x, y, z);
                let n = v.norm();
                if n < 1e-3 {
                    None
                } else {
                    Some(SkewAngle {
                        axis: v * (1.0 / n),
                        angle,
                    })
                }
            },
        )
    }

    proptest! {
        #[test]
        fn hat_equals_cross_everywhere(
            bx in -10.0..10.0f64, by in -10.0..10.0f64, bz in -10.0..10.0f64,
            vx in -10.0..10.0f64, vy in -10.0..10.0f64, vz in -10.0..10.0f64,
        ) {
            let b = Vec3::new(bx, by, bz);
            let v = Vec3::new(vx, vy, vz);
            // Same arithmetic on both sides, so equality is exact.
            prop_assert_eq!(hat(b) * v, v.cross(b));
        }

        #[test]
        fn rotation_is_orthogonal(s in arb_axis_angle(50.0)) {
            let r = rodrigues_exp(s);
            let residual = (r.transpose() * r - Mat3::IDENTITY).norm_inf();
            prop_assert!(residual <= 1e-13, "R^T R - I = {residual:.3e}");
            prop_assert!((r.det() - 1.0).abs() <= 1e-12, "det = {}", r.det());
        }

        #[test]
        fn negated_axis_gives_transpose(s in arb_axis_angle(50.0)) {
            let r = rodrigues_exp(s);
            let r_inv = rodrigues_exp(SkewAngle { axis: -s.axis, angle: s.angle });
            prop_assert!((r_inv - r.transpose()).norm_inf() <= 1e-13);
        }

        #[test]
        fn closed_forms_match_series(s in arb_axis_angle(50.0)) {
            let a = hat(s.axis * s.angle);
            prop_assert!((rodrigues_exp(s) - series_exp(a)).norm_inf() <= 1e-12);
            prop_assert!((rodrigues_phi1(s) - series_phi1(a)).norm_inf() <= 1e-12);
        }

        #[test]
        fn phi1_times_argument_is_exp_minus_identity(s in arb_axis_angle(50.0)) {
            let a = hat(s.axis * s.angle);
            let lhs = a * rodrigues_phi1(s);
            let rhs = rodrigues_exp(s) - Mat3::IDENTITY;
            prop_assert!((lhs - rhs).norm_inf() <= 1e-12);
        }

        #[test]
        fn rotation_preserves_norm(
            s in arb_axis_angle(50.0),
            vx in -5.0..5.0f64, vy in -5.0..5.0f64, vz in -5.0..5.0f64,
        ) {
            let v = Vec3::new(vx, vy, vz);
            let rv = rodrigues_exp(s) * v;
            prop_assert!((rv.norm() - v.norm()).abs() <= 1e-12 * v.norm().max(1.0));
        }
    }
}
