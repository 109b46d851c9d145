//! Desk-scale rigid-body world.
//!
//! Penalty contacts with Coulomb stick/slip friction, integrated with
//! velocity Verlet over a fixed number of substeps per tick. Dynamic bodies
//! translate only: their attitude is frozen, which keeps blocks and the
//! pushed platform well behaved without a full inertia model. The vehicle
//! enters the world as a set of kinematic parts whose pose is imposed by the
//! impedance dynamics; contact forces on those parts are summed into the
//! wrench the vehicle feels.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{RigidState, Wrench6};
use crate::so3::{Rot3, Vec3};

pub type BodyId = usize;

pub const GRAVITY: f64 = 9.81;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("no graspable body within {0} m of the end effector")]
    NothingInRange(f64),
    #[error("invalid body `{0}`: {1}")]
    InvalidBody(String, String),
    #[error("unknown body id {0}")]
    UnknownBody(BodyId),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub attitude: Rot3,
}

impl Pose {
    pub fn new(position: Vec3, attitude: Rot3) -> Self {
        Self { position, attitude }
    }

    pub fn from_position(position: Vec3) -> Self {
        Self { position, attitude: Rot3::identity() }
    }

    /// `self ∘ other`: `other` expressed in this frame, mapped to the parent.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            position: self.position + self.attitude.rotate(&other.position),
            attitude: self.attitude * other.attitude,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.attitude.transpose();
        Pose { position: -rt.rotate(&self.position), attitude: rt }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.position + self.attitude.rotate(p)
    }

    pub fn inverse_transform_point(&self, p: &Vec3) -> Vec3 {
        self.attitude.inverse_rotate(&(p - self.position))
    }
}

impl From<&RigidState> for Pose {
    fn from(s: &RigidState) -> Self {
        Pose { position: s.position, attitude: s.attitude }
    }
}

/// Collision geometry in the body frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Box { half_extents: [f64; 3] },
    /// Axis along local z.
    Cylinder { radius: f64, half_length: f64 },
    /// Half-space `z ≤ 0` in the body frame; the surface normal is local +z.
    Plane,
    /// Slab `|x| ≤ hx, |y| ≤ hy, |z| ≤ hz` pierced along z by a circular
    /// hole centered on the origin.
    HolePlate { half_extents: [f64; 3], hole_radius: f64 },
}

impl Shape {
    fn validate(&self) -> Result<(), String> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        match *self {
            Shape::Box { half_extents } if !half_extents.iter().all(|&h| pos(h)) => {
                Err("box half extents must be positive".into())
            }
            Shape::Cylinder { radius, half_length } if !(pos(radius) && pos(half_length)) => {
                Err("cylinder radius and half length must be positive".into())
            }
            Shape::HolePlate { half_extents, hole_radius } => {
                if !half_extents.iter().all(|&h| pos(h)) || !pos(hole_radius) {
                    Err("hole plate dimensions must be positive".into())
                } else if hole_radius >= half_extents[0].min(half_extents[1]) {
                    Err("hole must fit inside the plate".into())
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BodyKind {
    Static,
    /// Free translation under gravity, contacts and friction.
    Dynamic,
    /// Wheeled platform: translation along a world axis only, the normal load
    /// `m g` carried by the wheels.
    Rail { axis: [f64; 3] },
    /// Pose imposed from outside (vehicle parts, held blocks).
    Kinematic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Body {
    pub name: String,
    pub shape: Shape,
    pub pose: Pose,
    pub velocity: Vec3,
    pub mass: f64,
    pub mu_s: f64,
    pub mu_k: f64,
    pub kind: BodyKind,
    pub graspable: bool,
}

impl Body {
    pub fn new(name: impl Into<String>, shape: Shape, pose: Pose, kind: BodyKind) -> Self {
        Self {
            name: name.into(),
            shape,
            pose,
            velocity: Vec3::zeros(),
            mass: 1.0,
            mu_s: 0.0,
            mu_k: 0.0,
            kind,
            graspable: false,
        }
    }

    pub fn with_mass(mut self, mass: f64) -> Self {
        self.mass = mass;
        self
    }

    pub fn with_friction(mut self, mu_s: f64, mu_k: f64) -> Self {
        self.mu_s = mu_s;
        self.mu_k = mu_k;
        self
    }

    pub fn graspable(mut self) -> Self {
        self.graspable = true;
        self
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let err = |why: &str| Err(WorldError::InvalidBody(self.name.clone(), why.into()));
        if let Err(why) = self.shape.validate() {
            return err(&why);
        }
        if self.is_moving() && !(self.mass > 0.0 && self.mass.is_finite()) {
            return err("mass must be positive");
        }
        if !(self.mu_k >= 0.0 && self.mu_s >= self.mu_k && self.mu_s.is_finite()) {
            return err("friction requires mu_s >= mu_k >= 0");
        }
        if matches!(self.shape, Shape::Plane | Shape::HolePlate { .. }) && self.kind != BodyKind::Static {
            return err("planes and hole plates must be static");
        }
        if let BodyKind::Rail { axis } = self.kind {
            if !(Vec3::from(axis).norm() > 0.0) {
                return err("rail axis must be non-zero");
            }
        }
        Ok(())
    }

    /// Integrated by the world (dynamic or rail).
    pub fn is_moving(&self) -> bool {
        matches!(self.kind, BodyKind::Dynamic | BodyKind::Rail { .. })
    }

    fn rail_axis(&self) -> Option<Vec3> {
        match self.kind {
            BodyKind::Rail { axis } => Some(Vec3::from(axis).normalize()),
            _ => None,
        }
    }

    /// Translational kinetic plus gravitational potential energy.
    pub fn mechanical_energy(&self) -> f64 {
        if !self.is_moving() {
            return 0.0;
        }
        let potential = if self.rail_axis().is_some() { 0.0 } else { self.mass * GRAVITY * self.pose.position.z };
        0.5 * self.mass * self.velocity.norm_squared() + potential
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactParams {
    /// Penalty stiffness `k_c`, N/m.
    pub stiffness: f64,
    /// Penalty damping `d_c`, N·s/m.
    pub damping: f64,
    /// Relative tangential speed below which a contact may stick, m/s.
    pub slip_epsilon: f64,
    /// Velocity-Verlet substeps per world step.
    pub substeps: u32,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self { stiffness: 5000.0, damping: 50.0, slip_epsilon: 1e-4, substeps: 2 }
    }
}

/// One penetrating pair. `normal` points from `b` towards `a`; the normal
/// force pushes `a` along `+normal` and `b` along `-normal`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    pub a: BodyId,
    pub b: BodyId,
    pub depth: f64,
    pub normal: Vec3,
    pub point: Vec3,
    /// Normal force magnitude, N.
    pub force: f64,
    /// Friction force on `a`, N.
    pub friction: Vec3,
}

impl Contact {
    pub fn involves(&self, id: BodyId) -> bool {
        self.a == id || self.b == id
    }

    /// Total force this contact exerts on `id` (zero if not involved).
    pub fn force_on(&self, id: BodyId) -> Vec3 {
        let on_a = self.normal * self.force + self.friction;
        if id == self.a {
            on_a
        } else if id == self.b {
            -on_a
        } else {
            Vec3::zeros()
        }
    }
}

/// Penalty normal force `k_c d + d_c v_approach`, never pulling.
pub fn contact_force(depth: f64, approach_speed: f64, stiffness: f64, damping: f64) -> f64 {
    (stiffness * depth.max(0.0) + damping * approach_speed).max(0.0)
}

/// One-dimensional Coulomb friction. At rest (`|slip| < ε`) the friction
/// cancels the applied force until it strictly exceeds `μ_s N`, at which
/// point the kinetic force opposes the push; while slipping it opposes the
/// slip with magnitude `μ_k N`.
pub fn friction_force(applied: f64, normal: f64, mu_s: f64, mu_k: f64, slip_speed: f64, epsilon: f64) -> f64 {
    if normal <= 0.0 {
        return 0.0;
    }
    if slip_speed.abs() < epsilon {
        if applied.abs() > mu_s * normal {
            -mu_k * normal * applied.signum()
        } else {
            -applied
        }
    } else {
        -mu_k * normal * slip_speed.signum()
    }
}

/// Vector friction for one contact over one substep. `required` is the
/// tangential force that would bring the slip to zero this substep and
/// `applied` the tangential load the contact must resist.
fn resolve_friction(required: Vec3, applied: Vec3, slip: Vec3, normal: f64, mu_s: f64, mu_k: f64, eps: f64) -> Vec3 {
    if normal <= 0.0 || mu_s <= 0.0 {
        return Vec3::zeros();
    }
    let slip_speed = slip.norm();
    if slip_speed < eps {
        let load = applied.norm();
        if load > mu_s * normal {
            return applied * (-mu_k * normal / load);
        }
        let r = required.norm();
        let cap = mu_s * normal;
        if r > cap {
            required * (cap / r)
        } else {
            required
        }
    } else {
        let kinetic = slip * (-mu_k * normal / slip_speed);
        // kinetic friction stops the slip but never reverses it
        if required.dot(&kinetic) > 0.0 && required.norm() < kinetic.norm() {
            required
        } else {
            kinetic
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attachment {
    pub body: BodyId,
    /// Body pose in the end-effector frame at latch time.
    pub offset: Pose,
    pub restore_kind: BodyKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperState {
    pub attached: Option<Attachment>,
    pub latch_distance: f64,
}

impl Default for GripperState {
    fn default() -> Self {
        Self { attached: None, latch_distance: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GripperCommand {
    #[default]
    Hold,
    Latch,
    Release,
}

/// Kinematic vehicle attachment: parts rigidly fixed in the vehicle body
/// frame plus the end-effector frame used by the gripper.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleRig {
    pub parts: Vec<(BodyId, Pose)>,
    pub end_effector: Pose,
    pub state: RigidState,
}

/// Result of one world step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepReport {
    /// Contact wrench on the vehicle, world frame, torque about the vehicle
    /// origin; includes the weight of a held body. Averaged over substeps.
    pub vehicle_wrench: Wrench6,
    /// Contacts merged per body pair over the substeps: deepest penetration,
    /// force averaged over the whole step.
    pub contacts: Vec<Contact>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub bodies: Vec<Body>,
    pub params: ContactParams,
    pub gripper: GripperState,
    pub rig: VehicleRig,
}

/// External force applied at the center of a body for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppliedForce {
    pub body: BodyId,
    pub force: Vec3,
}

struct Obb {
    center: Vec3,
    axes: Matrix3<f64>,
    half: Vec3,
}

impl Obb {
    fn axis(&self, i: usize) -> Vec3 {
        self.axes.column(i).into()
    }

    fn radius_along(&self, n: &Vec3) -> f64 {
        (0..3).map(|i| self.half[i] * self.axis(i).dot(n).abs()).sum()
    }

    /// Deepest point along `-n`; faces and edges perpendicular to `n`
    /// contribute their midpoint.
    fn support_against(&self, n: &Vec3) -> Vec3 {
        let mut p = self.center;
        for i in 0..3 {
            let d = self.axis(i).dot(n);
            if d.abs() > 1e-6 {
                p -= self.axis(i) * (self.half[i] * d.signum());
            }
        }
        p
    }

    fn vertices(&self) -> [Vec3; 8] {
        let mut out = [Vec3::zeros(); 8];
        for (k, v) in out.iter_mut().enumerate() {
            let s = |bit: usize| if k & (1 << bit) == 0 { -1.0 } else { 1.0 };
            *v = self.center + self.axes * Vec3::new(s(0) * self.half.x, s(1) * self.half.y, s(2) * self.half.z);
        }
        out
    }
}

/// Oriented bounding box of a shape; `None` for unbounded shapes.
fn obb_of(shape: &Shape, pose: &Pose) -> Option<Obb> {
    let half = match *shape {
        Shape::Box { half_extents } | Shape::HolePlate { half_extents, .. } => Vec3::from(half_extents),
        Shape::Cylinder { radius, half_length } => Vec3::new(radius, radius, half_length),
        Shape::Plane => return None,
    };
    Some(Obb { center: pose.position, axes: *pose.attitude.matrix(), half })
}

#[derive(Debug, Clone, Copy)]
struct Aabb {
    min: Vec3,
    max: Vec3,
}

impl Aabb {
    fn overlaps(&self, other: &Aabb) -> bool {
        (0..3).all(|i| self.min[i] <= other.max[i] && other.min[i] <= self.max[i])
    }
}

fn aabb_of(shape: &Shape, pose: &Pose) -> Option<Aabb> {
    let obb = obb_of(shape, pose)?;
    let extent = obb.axes.abs() * obb.half;
    Some(Aabb { min: obb.center - extent, max: obb.center + extent })
}

struct RawContact {
    depth: f64,
    normal: Vec3,
    point: Vec3,
}

fn obb_obb(a: &Obb, b: &Obb) -> Option<RawContact> {
    let d = a.center - b.center;
    let mut best: Option<(f64, Vec3)> = None;
    let mut consider = |axis: Vec3, bias: f64| -> bool {
        let len = axis.norm();
        if len < 1e-9 {
            return true;
        }
        let n = axis / len;
        let dist = d.dot(&n);
        let overlap = a.radius_along(&n) + b.radius_along(&n) - dist.abs();
        if overlap <= 0.0 {
            return false;
        }
        // edge axes must win by a margin so resting faces stay face contacts
        if best.is_none_or(|(o, _)| overlap + bias < o) {
            let n = if dist < 0.0 { -n } else { n };
            best = Some((overlap, n));
        }
        true
    };
    for i in 0..3 {
        if !consider(a.axis(i), 0.0) || !consider(b.axis(i), 0.0) {
            return None;
        }
    }
    for i in 0..3 {
        for j in 0..3 {
            if !consider(a.axis(i).cross(&b.axis(j)), 1e-6) {
                return None;
            }
        }
    }
    let (depth, normal) = best?;
    // report the point on the smaller box, halfway into the overlap
    let point = if a.half.product() <= b.half.product() {
        a.support_against(&normal) + normal * (0.5 * depth)
    } else {
        b.support_against(&-normal) - normal * (0.5 * depth)
    };
    Some(RawContact { depth, normal, point })
}

fn box_plane(a: &Obb, plane: &Pose) -> Option<RawContact> {
    let n = plane.attitude.rotate(&Vec3::z());
    let verts = a.vertices();
    let depths = verts.map(|v| -(v - plane.position).dot(&n));
    let deepest = depths.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if deepest <= 0.0 {
        return None;
    }
    let (sum, count) = verts
        .iter()
        .zip(depths)
        .filter(|(_, d)| *d > deepest - 1e-9)
        .fold((Vec3::zeros(), 0.0), |(s, c), (v, _)| (s + v, c + 1.0));
    Some(RawContact { depth: deepest, normal: n, point: sum / count + n * (0.5 * deepest) })
}

fn cylinder_support(pose: &Pose, radius: f64, half_length: f64, dir: &Vec3) -> Vec3 {
    let axis = pose.attitude.rotate(&Vec3::z());
    let along = axis.dot(dir);
    let radial = dir - axis * along;
    let rn = radial.norm();
    let mut p = pose.position;
    if along.abs() > 1e-12 {
        p += axis * (half_length * along.signum());
    }
    if rn > 1e-12 {
        p += radial * (radius / rn);
    }
    p
}

fn cylinder_plane(pose: &Pose, radius: f64, half_length: f64, plane: &Pose) -> Option<RawContact> {
    let n = plane.attitude.rotate(&Vec3::z());
    let p = cylinder_support(pose, radius, half_length, &-n);
    let depth = -(p - plane.position).dot(&n);
    (depth > 0.0).then(|| RawContact { depth, normal: n, point: p + n * (0.5 * depth) })
}

/// Peg against a hole plate, treating the peg as parallel to the hole axis.
/// A peg whose cross-section fits inside the hole never touches; otherwise the
/// shallower of the axial (face) and radial (rim wall) penetrations wins.
fn cylinder_hole_plate(
    peg: &Pose,
    radius: f64,
    half_length: f64,
    plate: &Pose,
    half: [f64; 3],
    hole: f64,
) -> Option<RawContact> {
    let c = plate.inverse_transform_point(&peg.position);
    let axis = plate.attitude.inverse_rotate(&peg.attitude.rotate(&Vec3::z()));
    if axis.z.abs() < 0.9 {
        // far from aligned: fall back to the slab's bounding box
        let peg_box = obb_of(&Shape::Cylinder { radius, half_length }, peg)?;
        let slab = obb_of(&Shape::Box { half_extents: half }, plate)?;
        return obb_obb(&peg_box, &slab);
    }
    let [hx, hy, t] = half;
    let reach = half_length * axis.z.abs();
    let (zmin, zmax) = (c.z - reach, c.z + reach);
    if zmax <= -t || zmin >= t || c.x.abs() - radius >= hx || c.y.abs() - radius >= hy {
        return None;
    }
    let lateral = Vec3::new(c.x, c.y, 0.0);
    let s = lateral.norm();
    if s + radius <= hole {
        return None;
    }
    let dir = if s > 1e-12 { lateral / s } else { Vec3::x() };
    let (axial_depth, axial_normal) = if c.z >= 0.0 { (t - zmin, Vec3::z()) } else { (zmax + t, -Vec3::z()) };
    let radial_depth = if s < hole { s + radius - hole } else { f64::INFINITY };
    let (depth, normal, point) = if radial_depth < axial_depth {
        (radial_depth, -dir, dir * hole + Vec3::z() * c.z.clamp(-t, t))
    } else {
        (axial_depth, axial_normal, dir * hole.max(s - radius) + axial_normal * t)
    };
    Some(RawContact {
        depth,
        normal: plate.attitude.rotate(&normal),
        point: plate.transform_point(&point),
    })
}

/// Narrow phase for one ordered pair. Returns the contact with `normal`
/// pointing from `b` to `a`.
fn collide(a: &Body, b: &Body) -> Option<RawContact> {
    use Shape::*;
    let flip = |c: RawContact| RawContact { normal: -c.normal, ..c };
    match (&a.shape, &b.shape) {
        (Plane, Plane) | (Plane, HolePlate { .. }) | (HolePlate { .. }, Plane) => None,
        (HolePlate { .. }, HolePlate { .. }) => None,
        (_, Plane) => match a.shape {
            Cylinder { radius, half_length } => cylinder_plane(&a.pose, radius, half_length, &b.pose),
            _ => box_plane(&obb_of(&a.shape, &a.pose)?, &b.pose),
        },
        (Plane, _) => collide(b, a).map(flip),
        (Cylinder { radius, half_length }, HolePlate { half_extents, hole_radius }) => {
            cylinder_hole_plate(&a.pose, *radius, *half_length, &b.pose, *half_extents, *hole_radius)
        }
        (HolePlate { .. }, Cylinder { .. }) => collide(b, a).map(flip),
        // boxes against plates see a solid slab
        _ => obb_obb(&obb_of(&a.shape, &a.pose)?, &obb_of(&b.shape, &b.pose)?),
    }
}

fn needs_test(a: &Body, b: &Body) -> bool {
    a.is_moving() || b.is_moving() || (a.kind == BodyKind::Kinematic) != (b.kind == BodyKind::Kinematic)
}

impl World {
    pub fn new(bodies: Vec<Body>, params: ContactParams) -> Result<Self, WorldError> {
        for b in &bodies {
            b.validate()?;
        }
        Ok(Self { bodies, params, gripper: GripperState::default(), rig: VehicleRig::default() })
    }

    pub fn add_body(&mut self, body: Body) -> Result<BodyId, WorldError> {
        body.validate()?;
        self.bodies.push(body);
        Ok(self.bodies.len() - 1)
    }

    pub fn body(&self, id: BodyId) -> Result<&Body, WorldError> {
        self.bodies.get(id).ok_or(WorldError::UnknownBody(id))
    }

    pub fn find(&self, name: &str) -> Option<BodyId> {
        self.bodies.iter().position(|b| b.name == name)
    }

    /// Registers a kinematic body as a vehicle part at `local` in the body
    /// frame.
    pub fn attach_part(&mut self, id: BodyId, local: Pose) -> Result<(), WorldError> {
        let body = self.bodies.get_mut(id).ok_or(WorldError::UnknownBody(id))?;
        if body.kind != BodyKind::Kinematic {
            return Err(WorldError::InvalidBody(body.name.clone(), "vehicle parts must be kinematic".into()));
        }
        self.rig.parts.push((id, local));
        Ok(())
    }

    pub fn end_effector_pose(&self) -> Pose {
        Pose::from(&self.rig.state).compose(&self.rig.end_effector)
    }

    /// World velocity of a point rigidly attached to the vehicle.
    fn vehicle_point_velocity(&self, p: &Vec3) -> Vec3 {
        let s = &self.rig.state;
        s.velocity + s.attitude.rotate(&s.omega).cross(&(p - s.position))
    }

    /// Moves the vehicle parts and any held body to follow `state`.
    pub fn set_vehicle(&mut self, state: &RigidState) {
        self.rig.state = *state;
        let base = Pose::from(state);
        for k in 0..self.rig.parts.len() {
            let (id, local) = self.rig.parts[k];
            let pose = base.compose(&local);
            let v = self.vehicle_point_velocity(&pose.position);
            let body = &mut self.bodies[id];
            body.pose = pose;
            body.velocity = v;
        }
        if let Some(att) = self.gripper.attached {
            let pose = self.end_effector_pose().compose(&att.offset);
            let v = self.vehicle_point_velocity(&pose.position);
            let body = &mut self.bodies[att.body];
            body.pose = pose;
            body.velocity = v;
        }
    }

    /// Applies a gripper command and returns the new gripper state.
    pub fn command_gripper(&mut self, cmd: GripperCommand) -> Result<GripperState, WorldError> {
        let ee = self.end_effector_pose();
        let next = gripper_update(&self.gripper, &ee, self, cmd)?;
        if next == self.gripper {
            return Ok(next);
        }
        if let Some(old) = self.gripper.attached {
            // release: the body keeps the velocity it had in the gripper
            self.bodies[old.body].kind = old.restore_kind;
        }
        if let Some(new) = next.attached {
            self.bodies[new.body].kind = BodyKind::Kinematic;
        }
        self.gripper = next;
        let state = self.rig.state;
        self.set_vehicle(&state);
        Ok(next)
    }

    /// All penetrating pairs, in body-index order.
    pub fn detect_contacts(&self) -> Vec<Contact> {
        let boxes: Vec<Option<Aabb>> = self.bodies.iter().map(|b| aabb_of(&b.shape, &b.pose)).collect();
        let mut out = Vec::new();
        for i in 0..self.bodies.len() {
            for j in (i + 1)..self.bodies.len() {
                let (a, b) = (&self.bodies[i], &self.bodies[j]);
                if !needs_test(a, b) {
                    continue;
                }
                if let (Some(ba), Some(bb)) = (&boxes[i], &boxes[j]) {
                    if !ba.overlaps(bb) {
                        continue;
                    }
                }
                if let Some(raw) = collide(a, b) {
                    out.push(Contact {
                        a: i,
                        b: j,
                        depth: raw.depth,
                        normal: raw.normal,
                        point: raw.point,
                        force: 0.0,
                        friction: Vec3::zeros(),
                    });
                }
            }
        }
        out
    }

    fn inverse_mass(&self, id: BodyId) -> f64 {
        let b = &self.bodies[id];
        if b.is_moving() {
            1.0 / b.mass
        } else {
            0.0
        }
    }

    fn project(&self, id: BodyId, f: Vec3) -> Vec3 {
        match self.bodies[id].rail_axis() {
            Some(axis) => axis * axis.dot(&f),
            None => f,
        }
    }

    /// Velocity update over `h` from the forces at the current positions and
    /// velocities.
    fn kick(&mut self, applied: &[AppliedForce], h: f64) -> (Wrench6, Vec<Contact>) {
        let n = self.bodies.len();
        let mut contacts = self.detect_contacts();
        let mut forces = vec![Vec3::zeros(); n];
        for f in applied {
            if let Some(slot) = forces.get_mut(f.body) {
                *slot += f.force;
            }
        }
        for (i, b) in self.bodies.iter().enumerate() {
            if b.kind == BodyKind::Dynamic {
                forces[i].z -= b.mass * GRAVITY;
            }
        }
        let p = self.params;
        for c in &mut contacts {
            let v_rel = self.bodies[c.a].velocity - self.bodies[c.b].velocity;
            c.force = contact_force(c.depth, -v_rel.dot(&c.normal), p.stiffness, p.damping);
            forces[c.a] += c.normal * c.force;
            forces[c.b] -= c.normal * c.force;
        }
        // friction sees the non-friction load of the same substep
        let loads: Vec<Vec3> = (0..n).map(|i| self.project(i, forces[i])).collect();
        for c in &mut contacts {
            let (a, b) = (&self.bodies[c.a], &self.bodies[c.b]);
            let (inv_a, inv_b) = (self.inverse_mass(c.a), self.inverse_mass(c.b));
            if inv_a + inv_b == 0.0 || a.rail_axis().is_some() && b.rail_axis().is_some() {
                continue;
            }
            let m_eff = 1.0 / (inv_a + inv_b);
            let tangential = |v: Vec3| v - c.normal * c.normal.dot(&v);
            let slip = tangential(a.velocity - b.velocity);
            let accel = tangential(loads[c.a] * inv_a - loads[c.b] * inv_b);
            let required = -(slip / h + accel) * m_eff;
            let f = resolve_friction(
                required,
                accel * m_eff,
                slip,
                c.force,
                a.mu_s.min(b.mu_s),
                a.mu_k.min(b.mu_k),
                p.slip_epsilon,
            );
            c.friction = f;
            forces[c.a] += f;
            forces[c.b] -= f;
        }

        let vehicle = self.vehicle_wrench(&contacts);

        for (i, body) in self.bodies.iter_mut().enumerate() {
            match body.kind {
                BodyKind::Dynamic => body.velocity += forces[i] * (h / body.mass),
                BodyKind::Rail { axis } => {
                    let axis = Vec3::from(axis).normalize();
                    let load = axis.dot(&forces[i]);
                    let v = axis.dot(&body.velocity);
                    let normal = body.mass * GRAVITY;
                    let f = rail_friction(load, v, normal, body.mass, body.mu_s, body.mu_k, h, p.slip_epsilon);
                    body.velocity = axis * (v + (load + f) * (h / body.mass));
                }
                BodyKind::Static | BodyKind::Kinematic => {}
            }
        }
        (vehicle, contacts)
    }

    /// Contact wrench on the vehicle parts and held body, plus the held
    /// body's weight, in the world frame about the vehicle origin.
    fn vehicle_wrench(&self, contacts: &[Contact]) -> Wrench6 {
        let origin = self.rig.state.position;
        let held = self.gripper.attached.map(|a| a.body);
        let on_vehicle = |id: BodyId| self.rig.parts.iter().any(|(p, _)| *p == id) || held == Some(id);
        let mut w = Wrench6::zero();
        for c in contacts {
            for id in [c.a, c.b] {
                if on_vehicle(id) {
                    let f = c.force_on(id);
                    w.force += f;
                    w.torque += (c.point - origin).cross(&f);
                }
            }
        }
        if let Some(id) = held {
            let b = &self.bodies[id];
            let f = Vec3::new(0.0, 0.0, -b.mass * GRAVITY);
            w.force += f;
            w.torque += (b.pose.position - origin).cross(&f);
        }
        w
    }

    fn drift(&mut self, h: f64) {
        for body in self.bodies.iter_mut().filter(|b| b.is_moving()) {
            body.pose.position += body.velocity * h;
        }
    }

    /// Advances the world by `dt` in `params.substeps` velocity-Verlet
    /// substeps (half kick, drift, half kick). Constant forces integrate
    /// exactly; the contact springs see a symplectic scheme.
    pub fn step(&mut self, applied: &[AppliedForce], dt: f64) -> StepReport {
        let k = self.params.substeps.max(1);
        let h = dt / k as f64;
        let weight = 1.0 / (2 * k) as f64;
        let mut report = StepReport::default();
        let absorb = |report: &mut StepReport, (w, contacts): (Wrench6, Vec<Contact>)| {
            report.vehicle_wrench.force += w.force * weight;
            report.vehicle_wrench.torque += w.torque * weight;
            for c in contacts {
                match report.contacts.iter_mut().find(|r| r.a == c.a && r.b == c.b) {
                    Some(r) => {
                        if c.depth > r.depth {
                            r.depth = c.depth;
                            r.normal = c.normal;
                            r.point = c.point;
                        }
                        r.force += c.force * weight;
                        r.friction += c.friction * weight;
                    }
                    None => report.contacts.push(Contact { force: c.force * weight, friction: c.friction * weight, ..c }),
                }
            }
        };
        for _ in 0..k {
            let first = self.kick(applied, 0.5 * h);
            absorb(&mut report, first);
            self.drift(h);
            let second = self.kick(applied, 0.5 * h);
            absorb(&mut report, second);
        }
        // held bodies follow the end effector exactly
        if self.gripper.attached.is_some() {
            let state = self.rig.state;
            self.set_vehicle(&state);
        }
        report
    }

    /// Kinetic and gravitational energy of the moving bodies plus the
    /// elastic energy stored in the penalty springs.
    pub fn mechanical_energy(&self) -> f64 {
        let springs: f64 = self.detect_contacts().iter().map(|c| 0.5 * self.params.stiffness * c.depth * c.depth).sum();
        self.bodies.iter().map(Body::mechanical_energy).sum::<f64>() + springs
    }
}

#[allow(clippy::too_many_arguments)]
fn rail_friction(load: f64, v: f64, normal: f64, mass: f64, mu_s: f64, mu_k: f64, h: f64, eps: f64) -> f64 {
    let f = friction_force(load, normal, mu_s, mu_k, v, eps);
    let required = -(mass * v / h + load);
    if v.abs() < eps {
        // sticking also absorbs the sub-threshold drift
        if load.abs() > mu_s * normal {
            f
        } else {
            required.clamp(-mu_s * normal, mu_s * normal)
        }
    } else if required * f > 0.0 && required.abs() < f.abs() {
        required
    } else {
        f
    }
}

/// Pure world step on a copy.
pub fn step_world(world: &World, applied: &[AppliedForce], dt: f64) -> (World, StepReport) {
    let mut next = world.clone();
    let report = next.step(applied, dt);
    (next, report)
}

/// Distance from `p` to the surface of a box body (zero inside).
fn distance_to_body(body: &Body, p: &Vec3) -> f64 {
    let q = body.pose.inverse_transform_point(p);
    match body.shape {
        Shape::Box { half_extents } => {
            let h = Vec3::from(half_extents);
            q.abs().zip_map(&h, |a, b| (a - b).max(0.0)).norm()
        }
        Shape::Cylinder { radius, half_length } => {
            let radial = (q.x.hypot(q.y) - radius).max(0.0);
            let axial = (q.z.abs() - half_length).max(0.0);
            radial.hypot(axial)
        }
        Shape::Plane | Shape::HolePlate { .. } => f64::INFINITY,
    }
}

/// Proximity latch. `Latch` attaches the nearest graspable, free body whose
/// surface lies within the latch distance of the end-effector point;
/// `Release` drops whatever is held (a no-op when empty).
pub fn gripper_update(g: &GripperState, ee: &Pose, world: &World, cmd: GripperCommand) -> Result<GripperState, WorldError> {
    match cmd {
        GripperCommand::Hold => Ok(*g),
        GripperCommand::Release => Ok(GripperState { attached: None, ..*g }),
        GripperCommand::Latch => {
            if g.attached.is_some() {
                return Ok(*g);
            }
            let best = world
                .bodies
                .iter()
                .enumerate()
                .filter(|(_, b)| b.graspable && b.is_moving())
                .map(|(i, b)| (i, distance_to_body(b, &ee.position)))
                .filter(|(_, d)| *d <= g.latch_distance)
                .min_by(|x, y| x.1.total_cmp(&y.1));
            let (id, _) = best.ok_or(WorldError::NothingInRange(g.latch_distance))?;
            let body = &world.bodies[id];
            Ok(GripperState {
                attached: Some(Attachment { body: id, offset: ee.inverse().compose(&body.pose), restore_kind: body.kind }),
                ..*g
            })
        }
    }
}
