//! Rotation-matrix utilities on SO(3).
//!
//! Attitudes are kept as plain 3×3 matrices wrapped in [`Rot3`]. Integration
//! uses the closed-form exponential map, and long runs are pulled back onto
//! the manifold by polar projection ([`orthonormalize`]) every
//! [`REORTHO_PERIOD`] steps.

use std::fmt;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;

/// Steps between two polar projections in [`AttitudeIntegrator`].
pub const REORTHO_PERIOD: u32 = 100;

/// Tolerance on `‖S + Sᵀ‖` accepted by [`vee`].
pub const SKEW_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum So3Error {
    #[error("matrix is not skew-symmetric (‖S + Sᵀ‖ = {0:e})")]
    NotSkew(f64),
    #[error("matrix is rank deficient or a reflection (det = {0:e})")]
    Degenerate(f64),
}

/// A rotation matrix. Constructors that accept arbitrary matrices project or
/// validate; the arithmetic helpers preserve the group structure.
#[derive(Clone, Copy, PartialEq)]
pub struct Rot3(Matrix3<f64>);

impl Rot3 {
    pub fn identity() -> Self {
        Rot3(Matrix3::identity())
    }

    /// Rotation of `angle` radians about `axis` (normalized internally).
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::identity();
        }
        Rot3(exp_map(&(axis * (angle / n))))
    }

    pub fn rot_z(angle: f64) -> Self {
        Self::from_axis_angle(&Vec3::z(), angle)
    }

    /// Wraps a matrix without checking. Callers are responsible for the
    /// rotation invariants; use [`orthonormalize`] for untrusted input.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Rot3(m)
    }

    /// Row-major constructor that accepts only matrices within `tol` of SO(3).
    pub fn from_row_major(rows: [f64; 9], tol: f64) -> Result<Self, So3Error> {
        let m = Matrix3::from_row_slice(&rows);
        let r = Rot3(m);
        let det = m.determinant();
        if r.orthogonality_error() > tol || (det - 1.0).abs() > tol {
            return Err(So3Error::Degenerate(det));
        }
        Ok(r)
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [m[(0, 0)], m[(0, 1)], m[(0, 2)], m[(1, 0)], m[(1, 1)], m[(1, 2)], m[(2, 0)], m[(2, 1)], m[(2, 2)]]
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Rot3(self.0.transpose())
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// `Rᵀ v`.
    pub fn inverse_rotate(&self, v: &Vec3) -> Vec3 {
        self.0.tr_mul(v)
    }

    /// Frobenius norm of `R Rᵀ − I`.
    pub fn orthogonality_error(&self) -> f64 {
        (self.0 * self.0.transpose() - Matrix3::identity()).norm()
    }

    pub fn determinant(&self) -> f64 {
        self.0.determinant()
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        ((self.0.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }

    /// Yaw of the body x axis projected on the world xy plane.
    pub fn yaw(&self) -> f64 {
        self.0[(1, 0)].atan2(self.0[(0, 0)])
    }
}

impl Default for Rot3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl std::ops::Mul for Rot3 {
    type Output = Rot3;
    fn mul(self, rhs: Rot3) -> Rot3 {
        Rot3(self.0 * rhs.0)
    }
}

impl fmt::Debug for Rot3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Rot3").field(&self.to_row_major()).finish()
    }
}

impl Serialize for Rot3 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_row_major().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Rot3 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows = <[f64; 9]>::deserialize(d)?;
        Rot3::from_row_major(rows, 1e-6).map_err(serde::de::Error::custom)
    }
}

/// `hat(v) w = v × w`.
pub fn hat(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`]. Rejects matrices whose symmetric part exceeds
/// [`SKEW_TOLERANCE`].
pub fn vee(s: &Matrix3<f64>) -> Result<Vec3, So3Error> {
    let asym = (s + s.transpose()).norm();
    if !(asym <= SKEW_TOLERANCE) {
        return Err(So3Error::NotSkew(asym));
    }
    Ok(Vec3::new(s[(2, 1)], s[(0, 2)], s[(1, 0)]))
}

/// `½ (M − Mᵀ)^∨`, defined for any square matrix. For a rotation this is
/// `sin θ · axis`.
pub fn skew_part_vee(m: &Matrix3<f64>) -> Vec3 {
    0.5 * Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)])
}

/// Rodrigues' formula for `exp(hat(phi))`.
pub fn exp_map(phi: &Vec3) -> Matrix3<f64> {
    let theta2 = phi.norm_squared();
    let k = hat(phi);
    let (a, b) = if theta2 < 1e-8 {
        // Taylor series; truncation error below 1e-17 in this range
        (1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0, 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0)
    } else {
        let theta = theta2.sqrt();
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Matrix3::identity() + k * a + k * k * b
}

/// `R · exp(hat(ω dt))` for a body-frame rate `omega_body`.
pub fn integrate_rotation(r: &Rot3, omega_body: &Vec3, dt: f64) -> Rot3 {
    Rot3(r.0 * exp_map(&(omega_body * dt)))
}

/// Nearest rotation in the Frobenius sense (orthogonal polar factor).
///
/// Computed by the scaled Newton iteration `X ← ½(γX + (γX)⁻ᵀ)`, which
/// converges quadratically for any nonsingular input. Inputs with
/// non-positive determinant have no proper rotation as polar factor and are
/// reported as [`So3Error::Degenerate`].
pub fn orthonormalize(m: &Matrix3<f64>) -> Result<Rot3, So3Error> {
    let det = m.determinant();
    let scale = m.norm().powi(3).max(f64::MIN_POSITIVE);
    if !(det > 1e-12 * scale) {
        return Err(So3Error::Degenerate(det));
    }
    let mut x = *m;
    for _ in 0..60 {
        let inv_t = match x.try_inverse() {
            Some(inv) => inv.transpose(),
            None => return Err(So3Error::Degenerate(x.determinant())),
        };
        // determinant scaling speeds up the first iterations on badly
        // scaled input and is exactly 1 near convergence
        let gamma = (inv_t.norm() / x.norm()).sqrt();
        let next = 0.5 * (x * gamma + inv_t / gamma);
        let delta = (next - x).norm();
        x = next;
        if delta < 1e-14 {
            break;
        }
    }
    Ok(Rot3(x))
}

/// Attitude propagator that re-projects onto SO(3) every
/// [`REORTHO_PERIOD`] steps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AttitudeIntegrator {
    steps: u32,
}

impl AttitudeIntegrator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step(&mut self, r: &Rot3, omega_body: &Vec3, dt: f64) -> Rot3 {
        let next = integrate_rotation(r, omega_body, dt);
        self.steps += 1;
        if self.steps.is_multiple_of(REORTHO_PERIOD) {
            orthonormalize(next.matrix()).unwrap_or(next)
        } else {
            next
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn hat_of_basis_vectors() {
        assert_eq!(hat(&Vec3::zeros()), Matrix3::zeros());
        assert_eq!(hat(&Vec3::z()), Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn vee_inverts_hat_and_rejects_symmetric_input() {
        let v = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(vee(&hat(&v)).unwrap(), v);
        assert_eq!(vee(&Matrix3::zeros()).unwrap(), Vec3::zeros());
        assert!(matches!(vee(&Matrix3::identity()), Err(So3Error::NotSkew(_))));
    }

    #[test]
    fn skew_part_is_sine_axis() {
        assert_eq!(skew_part_vee(Rot3::identity().matrix()), Vec3::zeros());
        let s = skew_part_vee(Rot3::rot_z(FRAC_PI_2).matrix());
        assert!((s - Vec3::z()).norm() < 1e-15);
        let s = skew_part_vee(Rot3::from_axis_angle(&Vec3::x(), 0.3).matrix());
        assert!((s - Vec3::new(0.3f64.sin(), 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn zero_rate_is_identity() {
        assert_eq!(integrate_rotation(&Rot3::identity(), &Vec3::zeros(), 0.01), Rot3::identity());
    }

    #[test]
    fn quarter_turn_in_thousand_steps() {
        let mut r = Rot3::identity();
        let w = Vec3::new(0.0, 0.0, FRAC_PI_2);
        for _ in 0..1000 {
            r = integrate_rotation(&r, &w, 1e-3);
        }
        let (s, c) = FRAC_PI_2.sin_cos();
        let expected = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
        assert!((r.matrix() - expected).norm() < 1e-6);
    }

    #[test]
    fn small_angle_branch_is_continuous() {
        for theta in [1e-5, 9.9e-5, 1.01e-4, 1e-3] {
            let phi = Vec3::new(theta, -0.5 * theta, 0.25 * theta);
            let t = phi.norm();
            let k = hat(&(phi / t));
            let closed = Matrix3::identity() + k * t.sin() + k * k * (1.0 - t.cos());
            assert!((exp_map(&phi) - closed).norm() < 1e-15);
        }
    }

    #[test]
    fn orthonormalize_fixed_points() {
        let r = Rot3::from_axis_angle(&Vec3::new(1.0, -2.0, 0.5), 2.1);
        let p = orthonormalize(r.matrix()).unwrap();
        assert!((p.matrix() - r.matrix()).norm() < 1e-12);
        let p = orthonormalize(&(2.0 * Matrix3::identity())).unwrap();
        assert!((p.matrix() - Matrix3::identity()).norm() < 1e-15);
    }

    #[test]
    fn orthonormalize_rejects_singular_and_reflections() {
        let singular = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0);
        assert!(matches!(orthonormalize(&singular), Err(So3Error::Degenerate(_))));
        let reflection = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(matches!(orthonormalize(&reflection), Err(So3Error::Degenerate(_))));
    }

    #[test]
    fn half_turn_about_z() {
        let mut r = Rot3::identity();
        let steps = 5000;
        let dt = PI / 0.1 / steps as f64;
        for _ in 0..steps {
            r = integrate_rotation(&r, &Vec3::new(0.0, 0.0, 0.1), dt);
        }
        assert!((r.matrix() - Rot3::rot_z(PI).matrix()).norm() < 1e-6);
    }

    #[test]
    fn serde_is_row_major() {
        let r = Rot3::rot_z(FRAC_PI_2);
        let json = serde_json::to_string(&r).unwrap();
        let back: Rot3 = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        assert!(serde_json::from_str::<Rot3>("[2,0,0,0,1,0,0,0,1]").is_err());
    }
}
