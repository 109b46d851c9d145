//! Closed-loop vehicle dynamics under impedance control.
//!
//! The controlled vehicle behaves as a 6-DoF mass-spring-damper around its
//! reference:
//!
//! ```text
//! M [a; ω̇] + D [e_v; e_ω] + K [e_p; e_R] = τ_ext
//! ```
//!
//! with `a` the body-frame linear acceleration and all errors expressed in
//! the body frame (see [`compute_errors`]).

use nalgebra::{Cholesky, Matrix6, Vector6, U6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::so3::{integrate_rotation, skew_part_vee, Rot3, Vec3};

/// Largest accepted integration step, seconds.
pub const MAX_DT: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("{0} matrix is not symmetric positive definite")]
    NotSpd(&'static str),
    #[error("time step {0} outside (0, {MAX_DT}]")]
    InvalidTimestep(f64),
    #[error("observer gain must be positive, got {0}")]
    InvalidGain(f64),
}

/// Pose and twist of the vehicle body frame. `velocity` is expressed in the
/// world frame, `omega` in the body frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RigidState {
    pub position: Vec3,
    pub attitude: Rot3,
    pub velocity: Vec3,
    pub omega: Vec3,
}

impl RigidState {
    pub fn at_rest(position: Vec3, attitude: Rot3) -> Self {
        Self { position, attitude, velocity: Vec3::zeros(), omega: Vec3::zeros() }
    }

    /// `[Rᵀ v; ω]`.
    pub fn body_twist(&self) -> Vector6<f64> {
        stack(&self.attitude.inverse_rotate(&self.velocity), &self.omega)
    }
}

/// Vehicle reference: pose plus the commanded rates that generated it.
/// `velocity` is in the world frame, `omega` in the reference frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReferenceState {
    pub position: Vec3,
    pub attitude: Rot3,
    pub velocity: Vec3,
    pub omega: Vec3,
}

impl ReferenceState {
    pub fn hold(position: Vec3, attitude: Rot3) -> Self {
        Self { position, attitude, velocity: Vec3::zeros(), omega: Vec3::zeros() }
    }
}

impl From<&RigidState> for ReferenceState {
    fn from(s: &RigidState) -> Self {
        Self { position: s.position, attitude: s.attitude, velocity: s.velocity, omega: s.omega }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Wrench6 {
    pub force: Vec3,
    pub torque: Vec3,
}

impl Wrench6 {
    pub fn new(force: Vec3, torque: Vec3) -> Self {
        Self { force, torque }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_force(force: Vec3) -> Self {
        Self { force, torque: Vec3::zeros() }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        stack(&self.force, &self.torque)
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self { force: v.fixed_rows::<3>(0).into(), torque: v.fixed_rows::<3>(3).into() }
    }

    pub fn is_finite(&self) -> bool {
        self.force.iter().chain(self.torque.iter()).all(|v| v.is_finite())
    }
}

impl std::ops::Add for Wrench6 {
    type Output = Wrench6;
    fn add(self, rhs: Wrench6) -> Wrench6 {
        Wrench6 { force: self.force + rhs.force, torque: self.torque + rhs.torque }
    }
}

impl std::ops::AddAssign for Wrench6 {
    fn add_assign(&mut self, rhs: Wrench6) {
        self.force += rhs.force;
        self.torque += rhs.torque;
    }
}

impl std::ops::Neg for Wrench6 {
    type Output = Wrench6;
    fn neg(self) -> Wrench6 {
        Wrench6 { force: -self.force, torque: -self.torque }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorVector {
    pub e_p: Vec3,
    pub e_r: Vec3,
    pub e_v: Vec3,
    pub e_omega: Vec3,
}

impl ErrorVector {
    pub fn pose(&self) -> Vector6<f64> {
        stack(&self.e_p, &self.e_r)
    }

    pub fn rate(&self) -> Vector6<f64> {
        stack(&self.e_v, &self.e_omega)
    }
}

/// Virtual inertia, damping and stiffness, each 6×6 SPD.
#[derive(Debug, Clone)]
pub struct ImpedanceParams {
    mass: Matrix6<f64>,
    damping: Matrix6<f64>,
    stiffness: Matrix6<f64>,
    mass_chol: Cholesky<f64, U6>,
}

impl PartialEq for ImpedanceParams {
    fn eq(&self, other: &Self) -> bool {
        self.mass == other.mass && self.damping == other.damping && self.stiffness == other.stiffness
    }
}

fn check_spd(m: &Matrix6<f64>, name: &'static str) -> Result<Cholesky<f64, U6>, DynamicsError> {
    let asym = (m - m.transpose()).norm();
    if !m.iter().all(|v| v.is_finite()) || asym > 1e-12 * m.norm().max(1.0) {
        return Err(DynamicsError::NotSpd(name));
    }
    Cholesky::new(*m).ok_or(DynamicsError::NotSpd(name))
}

impl ImpedanceParams {
    pub fn new(mass: Matrix6<f64>, damping: Matrix6<f64>, stiffness: Matrix6<f64>) -> Result<Self, DynamicsError> {
        let mass_chol = check_spd(&mass, "inertia")?;
        check_spd(&damping, "damping")?;
        check_spd(&stiffness, "stiffness")?;
        Ok(Self { mass, damping, stiffness, mass_chol })
    }

    pub fn from_diagonals(mass: [f64; 6], damping: [f64; 6], stiffness: [f64; 6]) -> Result<Self, DynamicsError> {
        let diag = |d: [f64; 6]| Matrix6::from_diagonal(&Vector6::from(d));
        Self::new(diag(mass), diag(damping), diag(stiffness))
    }

    pub fn mass(&self) -> &Matrix6<f64> {
        &self.mass
    }

    pub fn damping(&self) -> &Matrix6<f64> {
        &self.damping
    }

    pub fn stiffness(&self) -> &Matrix6<f64> {
        &self.stiffness
    }

    /// `M⁻¹ rhs`.
    pub fn solve(&self, rhs: &Vector6<f64>) -> Vector6<f64> {
        self.mass_chol.solve(rhs)
    }

    /// Controller wrench `−D [e_v; e_ω] − K [e_p; e_R]`.
    pub fn control_wrench(&self, e: &ErrorVector) -> Vector6<f64> {
        -(self.damping * e.rate()) - self.stiffness * e.pose()
    }
}

impl Default for ImpedanceParams {
    /// Translational inertia equal to the vehicle mass (4.82 kg).
    fn default() -> Self {
        Self::from_diagonals(
            [4.82, 4.82, 4.82, 0.5, 0.5, 0.5],
            [20.0, 20.0, 20.0, 4.0, 4.0, 4.0],
            [50.0, 50.0, 50.0, 10.0, 10.0, 10.0],
        )
        .expect("default gains are SPD")
    }
}

pub(crate) fn stack(a: &Vec3, b: &Vec3) -> Vector6<f64> {
    Vector6::new(a.x, a.y, a.z, b.x, b.y, b.z)
}

fn split(v: &Vector6<f64>) -> (Vec3, Vec3) {
    (v.fixed_rows::<3>(0).into(), v.fixed_rows::<3>(3).into())
}

pub fn compute_errors(state: &RigidState, reference: &ReferenceState) -> ErrorVector {
    let r = &state.attitude;
    let r_ref = &reference.attitude;
    let r_rel = r_ref.matrix().tr_mul(r.matrix());
    ErrorVector {
        e_p: r.inverse_rotate(&(state.position - reference.position)),
        // ½(R_refᵀR − RᵀR_ref)^∨ is the skew part of R_refᵀR
        e_r: skew_part_vee(&r_rel),
        e_v: r.inverse_rotate(&(state.velocity - reference.velocity)),
        e_omega: state.omega - r_rel.tr_mul(&reference.omega),
    }
}

/// Body-frame `[a; ω̇]` solving the closed loop for the given state.
pub fn closed_loop_acceleration(
    state: &RigidState,
    reference: &ReferenceState,
    tau_ext: &Wrench6,
    params: &ImpedanceParams,
) -> Vector6<f64> {
    let e = compute_errors(state, reference);
    params.solve(&(tau_ext.to_vector() + params.control_wrench(&e)))
}

/// Advances the closed loop by `dt` with a kick-drift-kick step: half a
/// velocity update, a full pose update at the midpoint twist, then the second
/// half velocity update evaluated at the new pose. The reference and the
/// external wrench are held constant over the step.
pub fn step_dynamics(
    state: &RigidState,
    reference: &ReferenceState,
    tau_ext: &Wrench6,
    params: &ImpedanceParams,
    dt: f64,
) -> Result<RigidState, DynamicsError> {
    if !(dt > 0.0 && dt <= MAX_DT) {
        return Err(DynamicsError::InvalidTimestep(dt));
    }
    let half = 0.5 * dt;
    let (a0, alpha0) = split(&closed_loop_acceleration(state, reference, tau_ext, params));
    let mut next = RigidState {
        velocity: state.velocity + state.attitude.rotate(&a0) * half,
        omega: state.omega + alpha0 * half,
        ..*state
    };
    next.position += next.velocity * dt;
    next.attitude = integrate_rotation(&state.attitude, &next.omega, dt);
    let (a1, alpha1) = split(&closed_loop_acceleration(&next, reference, tau_ext, params));
    next.velocity += next.attitude.rotate(&a1) * half;
    next.omega += alpha1 * half;
    Ok(next)
}

/// Closed-loop energy: kinetic term in the virtual inertia plus the
/// translational spring and the rotational potential `k_r (3 − tr R_e) / 2`.
/// The rotational potential assumes an isotropic rotational stiffness block,
/// for which `e_R` is exactly its gradient.
pub fn lyapunov(state: &RigidState, reference: &ReferenceState, params: &ImpedanceParams) -> f64 {
    let e = compute_errors(state, reference);
    let rate = e.rate();
    let kt = params.stiffness.fixed_view::<3, 3>(0, 0);
    let kr = params.stiffness[(3, 3)];
    let r_rel = reference.attitude.matrix().tr_mul(state.attitude.matrix());
    0.5 * rate.dot(&(params.mass * rate)) + 0.5 * e.e_p.dot(&(kt * e.e_p)) + 0.5 * kr * (3.0 - r_rel.trace())
}

/// First-order momentum observer on the body twist.
///
/// With generalized momentum `p = M ν`, the estimate obeys
/// `r_{n+1} = r_n + K_I (p_{n+1} − p_n − dt (u_n + r_n))`, the discrete form
/// of `ṙ = K_I (τ_ext − r)`. Coriolis coupling between the translational and
/// rotational blocks is neglected.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumObserver {
    gain: Vector6<f64>,
    previous: Option<Vector6<f64>>,
    estimate: Vector6<f64>,
}

impl MomentumObserver {
    /// Diagonal gain `K_I`, in 1/s.
    pub fn new(gain: [f64; 6]) -> Result<Self, DynamicsError> {
        if let Some(&bad) = gain.iter().find(|g| !(**g > 0.0)) {
            return Err(DynamicsError::InvalidGain(bad));
        }
        Ok(Self { gain: Vector6::from(gain), previous: None, estimate: Vector6::zeros() })
    }

    pub fn isotropic(gain: f64) -> Result<Self, DynamicsError> {
        Self::new([gain; 6])
    }

    pub fn estimate(&self) -> Wrench6 {
        Wrench6::from_vector(&self.estimate)
    }

    /// Feeds one sample: the generalized momentum at the end of the step and
    /// the commanded (non-external) wrench applied during it. The first call
    /// only initializes the momentum history.
    pub fn update(&mut self, momentum: &Vector6<f64>, commanded: &Vector6<f64>, dt: f64) -> Wrench6 {
        if let Some(prev) = self.previous {
            let residual = momentum - prev - dt * (commanded + self.estimate);
            self.estimate += self.gain.component_mul(&residual);
        }
        self.previous = Some(*momentum);
        self.estimate()
    }
}
