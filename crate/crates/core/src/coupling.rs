//! Haptic handle to vehicle coupling.
//!
//! The handle commands velocities: its displacement from the idle frame M
//! maps to a world-frame linear velocity reference and its attitude to a body
//! angular-rate reference. In the other direction, the operator feels a
//! spring pulling the handle back to idle plus a scaled, saturated copy of
//! the estimated contact wrench.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{ReferenceState, Wrench6};
use crate::so3::{integrate_rotation, skew_part_vee, Rot3, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CouplingError {
    #[error("handle position component {0} outside [-1, 1]")]
    HandleOutOfRange(f64),
    #[error("invalid coupling parameter `{0}`: {1}")]
    InvalidParam(&'static str, String),
}

/// Handle pose in its idle frame, with the position normalized to the
/// device workspace `[-1, 1]³`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandleState {
    pub position: Vec3,
    pub attitude: Rot3,
    pub velocity: Vec3,
}

impl HandleState {
    pub fn idle() -> Self {
        Self::default()
    }

    pub fn new(position: Vec3, attitude: Rot3, velocity: Vec3) -> Result<Self, CouplingError> {
        let h = Self { position, attitude, velocity };
        h.validate()?;
        Ok(h)
    }

    /// Handle at `position` (clamped to the workspace) rotated by `yaw`
    /// about the idle z axis.
    pub fn planar(position: Vec3, yaw: f64) -> Self {
        Self { position: position.map(|c| c.clamp(-1.0, 1.0)), attitude: Rot3::rot_z(yaw), velocity: Vec3::zeros() }
    }

    pub fn validate(&self) -> Result<(), CouplingError> {
        match self.position.iter().find(|c| !(c.abs() <= 1.0)) {
            Some(&c) => Err(CouplingError::HandleOutOfRange(c)),
            None => Ok(()),
        }
    }
}

/// Which body axes the angular-rate reference may drive.
pub type AxisMask = [bool; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingParams {
    pub v_max: f64,
    pub omega_max: f64,
    pub k_rec_t: Matrix3<f64>,
    pub k_rec_r: Matrix3<f64>,
    pub k_ext: [f64; 6],
    pub force_scale: f64,
    pub f_sat: f64,
    /// Rotation axes left free to the operator; masked axes get a zero rate
    /// reference so the vehicle holds that part of its attitude.
    pub omega_mask: AxisMask,
}

/// Handle-deflection-to-velocity gain, m/s.
pub const V_MAX: f64 = 0.15;
/// Fraction of the estimated contact wrench rendered on the handle.
pub const FORCE_SCALE: f64 = 1.0 / 3.0;
/// Device force limit per axis, N.
pub const F_SAT: f64 = 12.0;

impl Default for CouplingParams {
    fn default() -> Self {
        Self {
            v_max: V_MAX,
            omega_max: 0.5,
            k_rec_t: Matrix3::identity() * 10.0,
            k_rec_r: Matrix3::identity(),
            k_ext: [1.0; 6],
            force_scale: FORCE_SCALE,
            f_sat: F_SAT,
            omega_mask: [false, false, true],
        }
    }
}

fn is_psd(m: &Matrix3<f64>) -> bool {
    let sym = (m - m.transpose()).norm() <= 1e-12 * m.norm().max(1.0);
    sym && m.symmetric_eigenvalues().iter().all(|&l| l >= -1e-12)
}

impl CouplingParams {
    pub fn validate(&self) -> Result<(), CouplingError> {
        let bad = |name, why: &str| Err(CouplingError::InvalidParam(name, why.to_string()));
        if !(self.v_max > 0.0 && self.v_max.is_finite()) {
            return bad("v_max", "must be positive");
        }
        if !(self.omega_max >= 0.0 && self.omega_max.is_finite()) {
            return bad("omega_max", "must be non-negative");
        }
        if !(self.force_scale > 0.0 && self.force_scale <= 1.0) {
            return bad("force_scale", "must lie in (0, 1]");
        }
        if !(self.f_sat > 0.0 && self.f_sat.is_finite()) {
            return bad("f_sat", "must be positive");
        }
        if !is_psd(&self.k_rec_t) {
            return bad("k_rec_t", "must be symmetric positive semi-definite");
        }
        if !is_psd(&self.k_rec_r) {
            return bad("k_rec_r", "must be symmetric positive semi-definite");
        }
        if !self.k_ext.iter().all(|k| k.is_finite() && *k >= 0.0) {
            return bad("k_ext", "gains must be finite and non-negative");
        }
        Ok(())
    }
}

/// `v_ref = v_max p_H` and `ω_ref = (ω_max / 2)(R_MH − R_MHᵀ)^∨`, the latter
/// restricted to the unmasked axes.
pub fn handle_to_reference_rates(h: &HandleState, params: &CouplingParams) -> (Vec3, Vec3) {
    let v_ref = h.position * params.v_max;
    let mut omega_ref = skew_part_vee(h.attitude.matrix()) * params.omega_max;
    for (w, free) in omega_ref.iter_mut().zip(params.omega_mask) {
        if !free {
            *w = 0.0;
        }
    }
    (v_ref, omega_ref)
}

/// Advances the reference pose by one step: trapezoidal rule on the linear
/// rate, exponential map on the mean angular rate. The new rates are stored
/// in the returned reference.
pub fn integrate_reference(reference: &ReferenceState, v_ref: &Vec3, omega_ref: &Vec3, dt: f64) -> ReferenceState {
    let omega_mean = (reference.omega + omega_ref) * 0.5;
    ReferenceState {
        position: reference.position + (reference.velocity + v_ref) * (0.5 * dt),
        attitude: integrate_rotation(&reference.attitude, &omega_mean, dt),
        velocity: *v_ref,
        omega: *omega_ref,
    }
}

/// `τ_rec = −K_rec [p_H; ½(R_MH − R_MHᵀ)^∨]`.
pub fn recentering_wrench(h: &HandleState, params: &CouplingParams) -> Wrench6 {
    Wrench6 {
        force: -(params.k_rec_t * h.position),
        torque: -(params.k_rec_r * skew_part_vee(h.attitude.matrix())),
    }
}

/// Interaction term `K_ext ∘ (scale · τ̂)` before saturation.
pub fn interaction_wrench(tau_ext_hat: &Wrench6, params: &CouplingParams) -> Wrench6 {
    let v = tau_ext_hat.to_vector() * params.force_scale;
    let k = nalgebra::Vector6::from(params.k_ext);
    Wrench6::from_vector(&v.component_mul(&k))
}

/// Total wrench rendered on the handle, force clamped per axis to `±f_sat`.
/// Pass `haptics = false` to drop the interaction term while keeping the
/// recentering spring.
pub fn feedback_wrench(tau_ext_hat: &Wrench6, h: &HandleState, params: &CouplingParams, haptics: bool) -> Wrench6 {
    let mut total = recentering_wrench(h, params);
    if haptics {
        total += interaction_wrench(tau_ext_hat, params);
    }
    total.force = total.force.map(|f| f.clamp(-params.f_sat, params.f_sat));
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn free_rotation() -> CouplingParams {
        CouplingParams { omega_mask: [true; 3], ..CouplingParams::default() }
    }

    #[test]
    fn idle_handle_commands_nothing() {
        let (v, w) = handle_to_reference_rates(&HandleState::idle(), &CouplingParams::default());
        assert_eq!(v, Vec3::zeros());
        assert_eq!(w, Vec3::zeros());
        assert_eq!(recentering_wrench(&HandleState::idle(), &CouplingParams::default()), Wrench6::zero());
    }

    #[test]
    fn full_deflection_gives_maximum_speed() {
        let h = HandleState::planar(Vec3::x(), 0.0);
        let (v, _) = handle_to_reference_rates(&h, &CouplingParams::default());
        assert_eq!(v, Vec3::new(0.15, 0.0, 0.0));
        // the workspace clamp is what bounds the speed
        let h = HandleState::planar(Vec3::new(3.0, -2.0, 0.0), 0.0);
        let (v, _) = handle_to_reference_rates(&h, &CouplingParams::default());
        assert_eq!(v, Vec3::new(0.15, -0.15, 0.0));
    }

    #[test]
    fn yaw_rate_is_sine_of_handle_angle() {
        let theta = 0.4;
        let h = HandleState::planar(Vec3::zeros(), theta);
        let (_, w) = handle_to_reference_rates(&h, &free_rotation());
        assert!((w - Vec3::new(0.0, 0.0, 0.5 * theta.sin())).norm() < 1e-15);
    }

    #[test]
    fn mask_removes_roll_and_pitch() {
        let h = HandleState { attitude: Rot3::from_axis_angle(&Vec3::new(1.0, 1.0, 1.0), 0.3), ..HandleState::idle() };
        let (_, w) = handle_to_reference_rates(&h, &CouplingParams::default());
        assert_eq!((w.x, w.y), (0.0, 0.0));
        assert!(w.z > 0.0);
    }

    #[test]
    fn reference_integrates_constant_rates_exactly() {
        let mut r = ReferenceState::default();
        let v = Vec3::new(0.15, 0.0, 0.0);
        r.velocity = v;
        for _ in 0..5000 {
            r = integrate_reference(&r, &v, &Vec3::zeros(), 0.002);
        }
        assert!((r.position - Vec3::new(1.5, 0.0, 0.0)).norm() < 1e-9);

        let mut r = ReferenceState::default();
        let w = Vec3::new(0.0, 0.0, 0.1);
        r.omega = w;
        let steps = 10_000;
        let dt = std::f64::consts::PI / 0.1 / steps as f64;
        for _ in 0..steps {
            r = integrate_reference(&r, &Vec3::zeros(), &w, dt);
        }
        assert!((r.attitude.matrix() - Rot3::rot_z(std::f64::consts::PI).matrix()).norm() < 1e-6);
    }

    #[test]
    fn zero_rates_leave_reference_unchanged() {
        let r = ReferenceState::hold(Vec3::new(1.0, 2.0, 3.0), Rot3::rot_z(0.5));
        assert_eq!(integrate_reference(&r, &Vec3::zeros(), &Vec3::zeros(), 0.002), r);
    }

    #[test]
    fn recentering_force_example() {
        let h = HandleState::planar(Vec3::new(0.5, 0.0, 0.0), 0.0);
        let w = recentering_wrench(&h, &CouplingParams::default());
        assert_eq!(w.force, Vec3::new(-5.0, 0.0, 0.0));
    }

    #[test]
    fn scaled_contact_force() {
        let tau = Wrench6::from_force(Vec3::new(5.2, 0.0, 0.0));
        let w = feedback_wrench(&tau, &HandleState::idle(), &CouplingParams::default(), true);
        assert!((w.force.x - 5.2 / 3.0).abs() < 1e-12);
        assert!((w.force.x - 1.733).abs() < 5e-4);
    }

    #[test]
    fn saturates_at_device_limit() {
        let tau = Wrench6::from_force(Vec3::new(100.0, -100.0, 1.0));
        let w = feedback_wrench(&tau, &HandleState::idle(), &CouplingParams::default(), true);
        assert_eq!(w.force.x, 12.0);
        assert_eq!(w.force.y, -12.0);
    }

    #[test]
    fn haptics_off_leaves_only_recentering() {
        let h = HandleState::planar(Vec3::new(0.2, -0.3, 0.1), 0.2);
        let tau = Wrench6::new(Vec3::new(3.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 0.4));
        let p = CouplingParams::default();
        assert_eq!(feedback_wrench(&tau, &h, &p, false), recentering_wrench(&h, &p));
    }

    #[test]
    fn validation() {
        assert!(CouplingParams::default().validate().is_ok());
        let p = CouplingParams { force_scale: 1.5, ..CouplingParams::default() };
        assert!(p.validate().is_err());
        let p = CouplingParams { v_max: 0.0, ..CouplingParams::default() };
        assert!(p.validate().is_err());
        let p = CouplingParams { k_rec_t: -Matrix3::identity(), ..CouplingParams::default() };
        assert!(p.validate().is_err());
        assert!(HandleState::new(Vec3::new(1.01, 0.0, 0.0), Rot3::identity(), Vec3::zeros()).is_err());
    }
}
