//! Declarative scenario files.
//!
//! A scenario is a TOML document (bundled files use the `.cfg` extension)
//! describing the world, the vehicle, the controller and coupling gains, the
//! task and the study condition. Every table rejects unknown keys. Loading
//! goes text → [`ScenarioConfig`] → validated [`Scenario`] with the world
//! built and task bodies resolved.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use teleop_stats::{Condition, DisplayMode, Haptics};

use crate::coupling::{AxisMask, CouplingParams, FORCE_SCALE, F_SAT, V_MAX};
use crate::dynamics::{ImpedanceParams, RigidState, MAX_DT};
use crate::so3::{exp_map, Rot3, Vec3};
use crate::task::{AbbtGeometry, TaskSpec};
use crate::world::{Body, BodyKind, ContactParams, Pose, Shape, World, GRAVITY};

/// Vehicle mass used by the energy metric, kg.
pub const VEHICLE_MASS: f64 = 4.82;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("line {line}, column {column}{}: {message}", field.as_ref().map(|f| format!(" (field `{f}`)")).unwrap_or_default())]
    Parse { line: usize, column: usize, field: Option<String>, message: String },
    #[error("invalid `{field}`: {invariant}")]
    Validation { field: String, invariant: String },
    #[error("bad override `{0}`: {1}")]
    Override(String, String),
}

fn invalid(field: impl Into<String>, invariant: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation { field: field.into(), invariant: invariant.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    /// Simulation tick, s.
    pub dt: f64,
    /// Ticks between feedback frames.
    pub feedback_every: u32,
    /// Ticks between log checkpoints.
    pub checkpoint_every: u32,
    /// Live input silence after which the handle is treated as idle, s.
    pub input_timeout: f64,
    /// Artificial input delay, ticks.
    pub delay_ticks: u32,
    pub seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self { dt: 0.002, feedback_every: 5, checkpoint_every: 500, input_timeout: 1.0, delay_ticks: 0, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartConfig {
    pub name: String,
    pub shape: Shape,
    #[serde(default)]
    pub offset: [f64; 3],
    /// Rotation vector (axis times angle, rad).
    #[serde(default)]
    pub rotation: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleConfig {
    pub position: [f64; 3],
    pub yaw: f64,
    /// Mass entering the energy metric, kg.
    pub mass: f64,
    /// Gripper point in the body frame.
    pub end_effector: [f64; 3],
    pub latch_distance: f64,
    pub parts: Vec<PartConfig>,
}

impl Default for VehicleConfig {
    fn default() -> Self {
        Self {
            position: [0.0, 0.0, 1.0],
            yaw: 0.0,
            mass: VEHICLE_MASS,
            end_effector: [0.0, 0.0, -0.3],
            latch_distance: 0.05,
            parts: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImpedanceConfig {
    pub mass: [f64; 6],
    pub damping: [f64; 6],
    pub stiffness: [f64; 6],
    /// Momentum observer bandwidth, 1/s.
    pub observer_gain: f64,
}

impl Default for ImpedanceConfig {
    fn default() -> Self {
        Self {
            mass: [4.82, 4.82, 4.82, 0.5, 0.5, 0.5],
            damping: [20.0, 20.0, 20.0, 4.0, 4.0, 4.0],
            stiffness: [50.0, 50.0, 50.0, 10.0, 10.0, 10.0],
            observer_gain: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingConfig {
    pub v_max: f64,
    pub omega_max: f64,
    /// Diagonal of the translational recentering stiffness.
    pub k_rec_t: [f64; 3],
    pub k_rec_r: [f64; 3],
    pub k_ext: [f64; 6],
    pub force_scale: f64,
    pub f_sat: f64,
    pub omega_mask: AxisMask,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        Self {
            v_max: V_MAX,
            omega_max: 0.5,
            k_rec_t: [10.0; 3],
            k_rec_r: [1.0; 3],
            k_ext: [1.0; 6],
            force_scale: FORCE_SCALE,
            f_sat: F_SAT,
            omega_mask: [false, false, true],
        }
    }
}

impl CouplingConfig {
    pub fn params(&self) -> CouplingParams {
        CouplingParams {
            v_max: self.v_max,
            omega_max: self.omega_max,
            k_rec_t: nalgebra::Matrix3::from_diagonal(&Vec3::from(self.k_rec_t)),
            k_rec_r: nalgebra::Matrix3::from_diagonal(&Vec3::from(self.k_rec_r)),
            k_ext: self.k_ext,
            force_scale: self.force_scale,
            f_sat: self.f_sat,
            omega_mask: self.omega_mask,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindConfig {
    #[default]
    Static,
    Dynamic,
    Rail,
    Kinematic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyConfig {
    pub name: String,
    pub shape: Shape,
    #[serde(default)]
    pub position: [f64; 3],
    /// Rotation vector (axis times angle, rad).
    #[serde(default)]
    pub rotation: [f64; 3],
    #[serde(default)]
    pub kind: KindConfig,
    /// Travel direction of a rail body.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<[f64; 3]>,
    #[serde(default = "unit_mass")]
    pub mass: f64,
    #[serde(default)]
    pub mu_s: f64,
    #[serde(default)]
    pub mu_k: f64,
    /// Rail bodies: breakaway force `μ_s m g` given directly, N.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub static_force: Option<f64>,
    /// Rail bodies: rolling resistance `μ_k m g` given directly, N.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kinetic_force: Option<f64>,
    #[serde(default)]
    pub graspable: bool,
}

fn unit_mass() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PushConfig {
    pub duration: f64,
    /// Name of the wheeled platform.
    pub platform: String,
    /// Name of the vehicle part doing the pushing.
    pub tool: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PegConfig {
    pub duration: f64,
    /// Vehicle part carrying the peg; its tip is the local `+z` end.
    pub peg: String,
    /// Hole plate, entered from its local `-z` face.
    pub board: String,
    /// Tip depth past the entry face that counts as an insertion, m.
    #[serde(default = "default_insertion_depth")]
    pub insertion_depth: f64,
}

fn default_insertion_depth() -> f64 {
    0.01
}

/// Box-and-blocks layout. Lengths are the clinical test's and get
/// multiplied by `scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbbtConfig {
    pub duration: f64,
    pub scale: f64,
    /// Outer box length (across the partition), width and wall height, m.
    pub box_size: [f64; 3],
    pub partition_height: f64,
    pub wall_thickness: f64,
    pub block_edge: f64,
    pub blocks: usize,
    pub block_mass: f64,
    pub block_mu: [f64; 2],
    /// Uniform jitter on the initial block positions, m (after scaling).
    pub block_jitter: f64,
    pub settle_speed: f64,
    pub settle_time: f64,
}

impl Default for AbbtConfig {
    fn default() -> Self {
        Self {
            duration: 80.0,
            scale: 16.0,
            box_size: [0.537, 0.254, 0.085],
            partition_height: 0.152,
            wall_thickness: 0.01,
            block_edge: 0.025,
            blocks: 16,
            block_mass: 0.25,
            block_mu: [0.6, 0.4],
            block_jitter: 0.0,
            settle_speed: 1e-2,
            settle_time: 0.2,
        }
    }
}

impl AbbtConfig {
    pub fn geometry(&self) -> AbbtGeometry {
        let s = self.scale;
        AbbtGeometry {
            half_length: 0.5 * s * self.box_size[0],
            half_width: 0.5 * s * self.box_size[1],
            wall_height: s * self.box_size[2],
            partition_height: s * self.partition_height,
            wall_thickness: s * self.wall_thickness,
            block_edge: s * self.block_edge,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskConfig {
    Push(PushConfig),
    Peg(PegConfig),
    Abbt(AbbtConfig),
    /// Geometry-only worlds (training stubs) that simply run for a while.
    Free {
        duration: f64,
    },
}

impl TaskConfig {
    pub fn duration(&self) -> f64 {
        match self {
            TaskConfig::Push(p) => p.duration,
            TaskConfig::Peg(p) => p.duration,
            TaskConfig::Abbt(a) => a.duration,
            TaskConfig::Free { duration } => *duration,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub task: TaskConfig,
    #[serde(default)]
    pub condition: Condition,
    #[serde(default)]
    pub session: SessionConfig,
    #[serde(default)]
    pub vehicle: VehicleConfig,
    #[serde(default)]
    pub impedance: ImpedanceConfig,
    #[serde(default)]
    pub coupling: CouplingConfig,
    #[serde(default)]
    pub contact: ContactParams,
    #[serde(default)]
    pub bodies: Vec<BodyConfig>,
}

/// A validated scenario ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub world: World,
    pub impedance: ImpedanceParams,
    pub coupling: CouplingParams,
    pub start: RigidState,
    pub task: TaskSpec,
}

/// Bundled scenario files, by name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("push", include_str!("../scenarios/push.cfg")),
    ("peg", include_str!("../scenarios/peg.cfg")),
    ("abbt", include_str!("../scenarios/abbt.cfg")),
    ("race", include_str!("../scenarios/race.cfg")),
    ("catch", include_str!("../scenarios/catch.cfg")),
    ("golf", include_str!("../scenarios/golf.cfg")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    let name = name.strip_suffix(".cfg").unwrap_or(name);
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

fn parse_error(text: &str, e: toml::de::Error) -> ScenarioError {
    let offset = e.span().map(|s| s.start).unwrap_or(0).min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map(|l| l.chars().count()).unwrap_or(0) + 1;
    let message = e.message().to_string();
    let field = message.split_once("field `").and_then(|(_, rest)| rest.split_once('`')).map(|(f, _)| f.to_string());
    ScenarioError::Parse { line, column, field, message }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Sets `path` (dot separated; numeric segments index arrays) to `raw`,
/// parsed as a TOML value or taken as a bare string.
fn apply_override(root: &mut toml::Value, path: &str, raw: &str) -> Result<(), ScenarioError> {
    let bad = |why: &str| ScenarioError::Override(path.to_string(), why.to_string());
    let mut cursor = root;
    for seg in path.split('.') {
        if seg.is_empty() {
            return Err(bad("empty key segment"));
        }
        cursor = match cursor {
            toml::Value::Table(t) => t.entry(seg).or_insert_with(|| toml::Value::Table(toml::Table::new())),
            toml::Value::Array(a) => {
                let i: usize = seg.parse().map_err(|_| bad("array segments must be indices"))?;
                a.get_mut(i).ok_or_else(|| bad("index out of range"))?
            }
            _ => return Err(bad("path goes through a scalar")),
        };
    }
    *cursor = parse_value(raw);
    Ok(())
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        Self::parse_with_overrides(text, &[])
    }

    /// Parses `text` after applying `key=value` overrides.
    pub fn parse_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self, ScenarioError> {
        if overrides.is_empty() {
            return toml::from_str(text).map_err(|e| parse_error(text, e));
        }
        let table: toml::Table = toml::from_str(text).map_err(|e| parse_error(text, e))?;
        let mut doc = toml::Value::Table(table);
        for (k, v) in overrides {
            apply_override(&mut doc, k, v)?;
        }
        let toml::Value::Table(table) = doc else { unreachable!("root stays a table") };
        let merged = toml::to_string(&table).map_err(|e| ScenarioError::Override("*".into(), e.to_string()))?;
        toml::from_str(&merged).map_err(|e| parse_error(&merged, e))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    /// Checks every invariant and builds the runnable scenario.
    pub fn build(&self) -> Result<Scenario, ScenarioError> {
        let duration = self.task.duration();
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(invalid("task.duration", "must be positive"));
        }
        let s = &self.session;
        if !(s.dt > 0.0 && s.dt <= MAX_DT) {
            return Err(invalid("session.dt", format!("must lie in (0, {MAX_DT}]")));
        }
        if s.feedback_every == 0 || s.dt * s.feedback_every as f64 > 0.01 + 1e-12 {
            return Err(invalid("session.feedback_every", "feedback must be emitted at 100 Hz or faster"));
        }
        if s.checkpoint_every == 0 {
            return Err(invalid("session.checkpoint_every", "must be positive"));
        }
        if !(s.input_timeout > 0.0) {
            return Err(invalid("session.input_timeout", "must be positive"));
        }
        let v = &self.vehicle;
        if !(v.mass > 0.0) {
            return Err(invalid("vehicle.mass", "must be positive"));
        }
        if !(v.latch_distance > 0.0) {
            return Err(invalid("vehicle.latch_distance", "must be positive"));
        }
        let imp = &self.impedance;
        let impedance = ImpedanceParams::from_diagonals(imp.mass, imp.damping, imp.stiffness)
            .map_err(|e| invalid("impedance", e.to_string()))?;
        if !(imp.observer_gain > 0.0) {
            return Err(invalid("impedance.observer_gain", "must be positive"));
        }
        let coupling = self.coupling.params();
        coupling.validate().map_err(|e| invalid("coupling", e.to_string()))?;
        let c = &self.contact;
        if !(c.stiffness > 0.0 && c.damping >= 0.0 && c.slip_epsilon > 0.0 && c.substeps > 0) {
            return Err(invalid("contact", "stiffness, slip_epsilon and substeps must be positive, damping non-negative"));
        }

        let mut world = World::new(Vec::new(), *c).map_err(|e| invalid("bodies", e.to_string()))?;
        world.gripper.latch_distance = v.latch_distance;
        for (i, b) in self.bodies.iter().enumerate() {
            let body = body_from_config(b).map_err(|why| invalid(format!("bodies.{i}"), why))?;
            world.add_body(body).map_err(|e| invalid(format!("bodies.{i}"), e.to_string()))?;
        }
        let abbt_bodies = match &self.task {
            TaskConfig::Abbt(a) => Some(add_abbt_bodies(&mut world, a, s.seed)?),
            _ => None,
        };
        for (i, p) in v.parts.iter().enumerate() {
            let body = Body::new(p.name.clone(), p.shape, Pose::default(), BodyKind::Kinematic);
            let id = world.add_body(body).map_err(|e| invalid(format!("vehicle.parts.{i}"), e.to_string()))?;
            let local = Pose::new(Vec3::from(p.offset), rotation(p.rotation));
            world.attach_part(id, local).map_err(|e| invalid(format!("vehicle.parts.{i}"), e.to_string()))?;
        }
        let mut names: Vec<&str> = world.bodies.iter().map(|b| b.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(invalid("bodies", format!("duplicate body name `{}`", w[0])));
        }
        world.rig.end_effector = Pose::from_position(Vec3::from(v.end_effector));
        let start = RigidState::at_rest(Vec3::from(v.position), Rot3::rot_z(v.yaw));
        world.set_vehicle(&start);

        let find = |field: &str, name: &str| world.find(name).ok_or_else(|| invalid(field, format!("no body named `{name}`")));
        let is_part = |id| world.rig.parts.iter().any(|(p, _)| *p == id);
        let task = match &self.task {
            TaskConfig::Push(p) => {
                let platform = find("task.platform", &p.platform)?;
                let tool = find("task.tool", &p.tool)?;
                let axis = match world.bodies[platform].kind {
                    BodyKind::Rail { axis } => Vec3::from(axis).normalize(),
                    _ => return Err(invalid("task.platform", "must be a rail body")),
                };
                if !is_part(tool) {
                    return Err(invalid("task.tool", "must be a vehicle part"));
                }
                let start = world.bodies[platform].pose.position;
                TaskSpec::Push { platform, tool, axis, start }
            }
            TaskConfig::Peg(p) => {
                let peg = find("task.peg", &p.peg)?;
                let board = find("task.board", &p.board)?;
                if !matches!(world.bodies[peg].shape, Shape::Cylinder { .. }) || !is_part(peg) {
                    return Err(invalid("task.peg", "must be a cylindrical vehicle part"));
                }
                if !matches!(world.bodies[board].shape, Shape::HolePlate { .. }) {
                    return Err(invalid("task.board", "must be a hole plate"));
                }
                if !(p.insertion_depth > 0.0) {
                    return Err(invalid("task.insertion_depth", "must be positive"));
                }
                TaskSpec::Peg { peg, board, insertion_depth: p.insertion_depth }
            }
            TaskConfig::Abbt(a) => {
                let (partition, blocks) = abbt_bodies.expect("abbt bodies added above");
                let held = world.rig.parts.iter().map(|(id, _)| *id).collect();
                TaskSpec::Abbt {
                    geometry: a.geometry(),
                    partition,
                    blocks,
                    vehicle_parts: held,
                    settle_speed: a.settle_speed,
                    settle_time: a.settle_time,
                }
            }
            TaskConfig::Free { .. } => TaskSpec::Free,
        };
        Ok(Scenario { config: self.clone(), world, impedance, coupling, start, task })
    }
}

/// Parses, validates and builds a scenario.
pub fn load_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    ScenarioConfig::parse(text)?.build()
}

fn rotation(v: [f64; 3]) -> Rot3 {
    Rot3::from_matrix_unchecked(exp_map(&Vec3::from(v)))
}

fn body_from_config(b: &BodyConfig) -> Result<Body, String> {
    let kind = match (b.kind, b.axis) {
        (KindConfig::Rail, Some(axis)) => BodyKind::Rail { axis },
        (KindConfig::Rail, None) => return Err("rail bodies need an `axis`".into()),
        (_, Some(_)) => return Err("`axis` only applies to rail bodies".into()),
        (KindConfig::Static, None) => BodyKind::Static,
        (KindConfig::Dynamic, None) => BodyKind::Dynamic,
        (KindConfig::Kinematic, None) => BodyKind::Kinematic,
    };
    let (mut mu_s, mut mu_k) = (b.mu_s, b.mu_k);
    if b.static_force.is_some() || b.kinetic_force.is_some() {
        if b.kind != KindConfig::Rail {
            return Err("`static_force`/`kinetic_force` only apply to rail bodies".into());
        }
        let n = b.mass * GRAVITY;
        mu_s = b.static_force.map_or(mu_s, |f| f / n);
        mu_k = b.kinetic_force.map_or(mu_k, |f| f / n);
    }
    let pose = Pose::new(Vec3::from(b.position), rotation(b.rotation));
    let mut body = Body::new(b.name.clone(), b.shape, pose, kind).with_mass(b.mass).with_friction(mu_s, mu_k);
    body.graspable = b.graspable;
    Ok(body)
}

/// Adds the box walls, partition and blocks; returns the partition id and
/// the block ids.
fn add_abbt_bodies(world: &mut World, a: &AbbtConfig, seed: u64) -> Result<(usize, Vec<usize>), ScenarioError> {
    let positive = [
        ("task.scale", a.scale),
        ("task.partition_height", a.partition_height),
        ("task.wall_thickness", a.wall_thickness),
        ("task.block_edge", a.block_edge),
        ("task.block_mass", a.block_mass),
        ("task.settle_speed", a.settle_speed),
        ("task.settle_time", a.settle_time),
    ];
    for (field, v) in positive {
        if !(v > 0.0 && v.is_finite()) {
            return Err(invalid(field, "must be positive"));
        }
    }
    if !a.box_size.iter().all(|v| *v > 0.0) {
        return Err(invalid("task.box_size", "must be positive"));
    }
    if !(a.block_mu[0] >= a.block_mu[1] && a.block_mu[1] >= 0.0) {
        return Err(invalid("task.block_mu", "requires mu_s >= mu_k >= 0"));
    }
    if !(a.block_jitter >= 0.0) {
        return Err(invalid("task.block_jitter", "must be non-negative"));
    }
    let g = a.geometry();
    let t = 0.5 * g.wall_thickness;
    let add_static = |world: &mut World, name: String, center: Vec3, half: [f64; 3]| {
        world
            .add_body(Body::new(name, Shape::Box { half_extents: half }, Pose::from_position(center), BodyKind::Static))
            .map_err(|e| invalid("task", e.to_string()))
    };
    let hz = 0.5 * g.wall_height;
    let outer_x = g.half_length + t;
    let outer_y = g.half_width + t;
    add_static(world, "wall_x_neg".into(), Vec3::new(-outer_x, 0.0, hz), [t, outer_y + t, hz])?;
    add_static(world, "wall_x_pos".into(), Vec3::new(outer_x, 0.0, hz), [t, outer_y + t, hz])?;
    add_static(world, "wall_y_neg".into(), Vec3::new(0.0, -outer_y, hz), [outer_x - t, t, hz])?;
    add_static(world, "wall_y_pos".into(), Vec3::new(0.0, outer_y, hz), [outer_x - t, t, hz])?;
    let partition = add_static(
        world,
        "partition".into(),
        Vec3::new(0.0, 0.0, 0.5 * g.partition_height),
        [t, g.half_width, 0.5 * g.partition_height],
    )?;

    // blocks on a square grid filling the start compartment (x < 0)
    let h = 0.5 * g.block_edge;
    let cols = (a.blocks as f64).sqrt().ceil().max(1.0) as usize;
    let rows = a.blocks.div_ceil(cols).max(1);
    let (x0, x1) = (-g.half_length, -t);
    let (y0, y1) = (-g.half_width, g.half_width);
    let pitch_x = (x1 - x0) / cols as f64;
    let pitch_y = (y1 - y0) / rows as f64;
    if pitch_x < g.block_edge + 2.0 * a.block_jitter || pitch_y < g.block_edge + 2.0 * a.block_jitter {
        return Err(invalid("task.blocks", "blocks do not fit in the start compartment"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // start slightly sunk so the stack begins at its static compression
    let rest_z = h - a.block_mass * GRAVITY / world.params.stiffness;
    let mut blocks = Vec::with_capacity(a.blocks);
    for k in 0..a.blocks {
        let (i, j) = (k % cols, k / cols);
        let mut jitter = Vec3::zeros();
        if a.block_jitter > 0.0 {
            jitter.x = rng.random_range(-a.block_jitter..=a.block_jitter);
            jitter.y = rng.random_range(-a.block_jitter..=a.block_jitter);
        }
        let center = Vec3::new(x0 + pitch_x * (i as f64 + 0.5), y0 + pitch_y * (j as f64 + 0.5), rest_z) + jitter;
        let body = Body::new(format!("block_{k:02}"), Shape::Box { half_extents: [h; 3] }, Pose::from_position(center), BodyKind::Dynamic)
            .with_mass(a.block_mass)
            .with_friction(a.block_mu[0], a.block_mu[1])
            .graspable();
        blocks.push(world.add_body(body).map_err(|e| invalid("task", e.to_string()))?);
    }
    Ok((partition, blocks))
}
