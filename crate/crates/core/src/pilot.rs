//! Scripted operators for headless sessions.
//!
//! Both pilots steer the way a person does: through handle deflection
//! only. They read the session state each tick and never touch the world.

use crate::coupling::HandleState;
use crate::scenario::Scenario;
use crate::session::{InputFrame, Pilot, SessionState};
use crate::so3::Vec3;
use crate::task::TaskSpec;
use crate::world::{BodyId, GripperCommand};

/// Full handle deflection along `direction` for `push_time` seconds, then
/// hands off.
#[derive(Debug, Clone)]
pub struct PushPilot {
    pub direction: Vec3,
    pub push_time: f64,
}

impl PushPilot {
    pub fn new(direction: Vec3, push_time: f64) -> Self {
        Self { direction, push_time }
    }
}

impl Pilot for PushPilot {
    fn input(&mut self, state: &SessionState, scenario: &Scenario) -> Option<InputFrame> {
        let t = state.elapsed(scenario.config.session.dt);
        let handle = if t < self.push_time { HandleState::planar(self.direction, 0.0) } else { HandleState::idle() };
        let frame = InputFrame { handle, gripper: GripperCommand::Hold };
        (frame != state.input).then_some(frame)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Step {
    /// Drive the reference to `target`. `settle` waits for the vehicle to
    /// come to rest there; otherwise passing within `tol` is enough.
    Move { target: Vec3, tol: f64, settle: bool },
    Grip(GripperCommand),
    Wait(u64),
    /// Abandon the block unless the gripper holds something.
    CheckHeld,
}

/// Box-and-blocks operator: takes the blocks closest to the partition
/// first, lifts each over it and sets it down at the mirrored spot.
#[derive(Debug, Clone)]
pub struct AbbtPilot {
    /// Handle gain from reference position error, 1/s.
    pub gain: f64,
    /// Transit height of the vehicle origin over the partition.
    pub cruise: f64,
    /// Gap between the end effector and the block top when latching.
    pub grasp_gap: f64,
    /// Height of the block bottom above the floor when it is let go.
    pub drop_height: f64,
    /// Ticks after which a step is abandoned.
    pub step_timeout: u64,
    /// Ticks between handle updates, like a console sending at 50 Hz.
    pub period: u64,
    /// Stop after attempting this many blocks.
    pub max_blocks: usize,
    plan: Vec<Step>,
    step_started: u64,
    gripper: GripperCommand,
    attempted: Vec<BodyId>,
}

impl Default for AbbtPilot {
    fn default() -> Self {
        Self {
            gain: 4.0,
            cruise: 3.35,
            grasp_gap: 0.02,
            drop_height: 0.08,
            step_timeout: 4000,
            period: 10,
            max_blocks: usize::MAX,
            plan: Vec::new(),
            step_started: 0,
            gripper: GripperCommand::Hold,
            attempted: Vec::new(),
        }
    }
}

impl AbbtPilot {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_max_blocks(max_blocks: usize) -> Self {
        Self { max_blocks, ..Self::default() }
    }

    fn next_block(&self, state: &SessionState, scenario: &Scenario) -> Option<BodyId> {
        let TaskSpec::Abbt { blocks, geometry, .. } = &scenario.task else { return None };
        if self.attempted.len() >= self.max_blocks {
            return None;
        }
        let here = state.vehicle.position;
        blocks
            .iter()
            .copied()
            .filter(|b| !self.attempted.contains(b))
            .filter(|&b| {
                let p = state.world.bodies[b].pose.position;
                p.x < 0.0 && p.z < geometry.wall_height
            })
            .min_by(|&a, &b| {
                let key = |id: BodyId| {
                    let p = state.world.bodies[id].pose.position;
                    // nearest column to the partition, then nearest to the vehicle
                    (-p.x, (p.y - here.y).abs())
                };
                let (ka, kb) = (key(a), key(b));
                ka.0.total_cmp(&kb.0).then(ka.1.total_cmp(&kb.1))
            })
    }

    fn plan_transfer(&mut self, block: BodyId, state: &SessionState, scenario: &Scenario) {
        let TaskSpec::Abbt { geometry, .. } = &scenario.task else { return };
        let b = state.world.bodies[block].pose.position;
        let half = 0.5 * geometry.block_edge;
        let ee_drop = -state.world.rig.end_effector.position.z;
        let pick_z = b.z + half + self.grasp_gap + ee_drop;
        let drop_z = self.drop_height + 2.0 * half + self.grasp_gap + ee_drop;
        let here = state.vehicle.position;
        let pass = 0.15;
        let mut plan = Vec::new();
        if here.z < self.cruise - pass {
            plan.push(Step::Move { target: Vec3::new(here.x, here.y, self.cruise), tol: pass, settle: false });
        }
        plan.extend([
            Step::Move { target: Vec3::new(b.x, b.y, self.cruise), tol: pass, settle: false },
            Step::Move { target: Vec3::new(b.x, b.y, pick_z), tol: 0.01, settle: true },
            Step::Grip(GripperCommand::Latch),
            Step::Wait(10),
            Step::CheckHeld,
            Step::Move { target: Vec3::new(b.x, b.y, self.cruise), tol: pass, settle: false },
            Step::Move { target: Vec3::new(-b.x, b.y, self.cruise), tol: pass, settle: false },
            Step::Move { target: Vec3::new(-b.x, b.y, drop_z), tol: 0.01, settle: true },
            Step::Grip(GripperCommand::Release),
            Step::Wait(25),
        ]);
        plan.reverse();
        self.plan = plan;
        self.attempted.push(block);
    }
}

impl Pilot for AbbtPilot {
    fn input(&mut self, state: &SessionState, scenario: &Scenario) -> Option<InputFrame> {
        let tick = state.tick;
        if !tick.is_multiple_of(self.period) {
            return None;
        }
        loop {
            let Some(&step) = self.plan.last() else {
                match self.next_block(state, scenario) {
                    Some(b) => {
                        self.plan_transfer(b, state, scenario);
                        self.step_started = tick;
                        continue;
                    }
                    None => break,
                }
            };
            let age = tick - self.step_started;
            let done = match step {
                Step::Grip(cmd) => {
                    self.gripper = cmd;
                    true
                }
                Step::Wait(n) => age >= n,
                Step::CheckHeld => {
                    if state.world.gripper.attached.is_none() {
                        self.plan.clear();
                        self.gripper = GripperCommand::Hold;
                        continue;
                    }
                    true
                }
                Step::Move { target, tol, settle } => {
                    let reached = if settle {
                        // the vehicle sags under a held block; the reference does not
                        let sag = if state.world.gripper.attached.is_some() { 0.06 } else { 0.0 };
                        (state.reference.position - target).norm() < 1e-3
                            && (state.vehicle.position - target).norm() < tol + sag
                            && state.vehicle.velocity.norm() < 0.02
                    } else {
                        (state.vehicle.position - target).norm() < tol
                    };
                    reached || age >= self.step_timeout
                }
            };
            if !done {
                break;
            }
            self.plan.pop();
            self.step_started = tick;
        }
        let handle = match self.plan.last() {
            Some(Step::Move { target, .. }) => {
                let v_max = scenario.coupling.v_max;
                let p = (target - state.reference.position) * (self.gain / v_max);
                HandleState::planar(p, 0.0)
            }
            _ => HandleState::idle(),
        };
        let frame = InputFrame { handle, gripper: self.gripper };
        (frame != state.input).then_some(frame)
    }
}
