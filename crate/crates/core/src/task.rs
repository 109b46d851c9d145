//! Task logic: success detection, counters and event logs for the push,
//! peg-in-hole and box-and-blocks scenarios.
//!
//! Every update is a pure function of the previous status, the world after
//! the step, the contacts the step reported and `dt`, so replaying a session
//! reproduces the event log exactly.

use serde::{Deserialize, Serialize};

use crate::so3::Vec3;
use crate::world::{BodyId, Contact, Shape, World};

/// Scaled box-and-blocks layout. The partition plane is `x = 0`; blocks
/// start on the `x < 0` side and count once they settle on `x > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbbtGeometry {
    pub half_length: f64,
    pub half_width: f64,
    pub wall_height: f64,
    pub partition_height: f64,
    pub wall_thickness: f64,
    pub block_edge: f64,
}

impl AbbtGeometry {
    /// Block center inside the target compartment.
    pub fn on_target_side(&self, p: &Vec3) -> bool {
        p.x > 0.0 && p.x < self.half_length && p.y.abs() < self.half_width && p.z < self.wall_height
    }
}

/// Task with its bodies resolved to world ids.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskSpec {
    Push { platform: BodyId, tool: BodyId, axis: Vec3, start: Vec3 },
    Peg { peg: BodyId, board: BodyId, insertion_depth: f64 },
    Abbt {
        geometry: AbbtGeometry,
        partition: BodyId,
        blocks: Vec<BodyId>,
        /// Bodies whose contact with the partition counts as a hit.
        vehicle_parts: Vec<BodyId>,
        settle_speed: f64,
        settle_time: f64,
    },
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    ContactMade { body: String },
    ContactBroken { body: String },
    Latched { body: String },
    Released { body: String },
    Transfer { block: String },
    PartitionHit,
    Insertion,
    Extraction,
    TimeUp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskEvent {
    pub tick: u64,
    pub t: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counters {
    pub transfers: u32,
    pub partition_hits: u32,
    pub insertions: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PushStats {
    /// Platform travel along its rail, m.
    pub displacement: f64,
    pub peak_force: f64,
    /// Time integral of the tool-platform normal force, N·s.
    pub impulse: f64,
    pub contact_time: f64,
    pub in_contact: bool,
}

impl PushStats {
    /// Mean normal force while in contact, zero before the first touch.
    pub fn average_force(&self) -> f64 {
        if self.contact_time > 0.0 {
            self.impulse / self.contact_time
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PegStats {
    /// Tip depth past the entry face, m (negative before entry).
    pub depth: f64,
    /// Tip radial offset from the hole axis, m.
    pub offset: f64,
    pub inside: bool,
    pub inserted: bool,
    pub inside_time: f64,
    pub peak_lateral_force: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BlockTrack {
    pub was_held: bool,
    pub counted: bool,
    /// Time spent at rest on the target side since the last disturbance.
    pub settled_for: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum TaskDetail {
    Push(PushStats),
    Peg(PegStats),
    Abbt { blocks: Vec<BlockTrack>, partition_contact: bool },
    Free,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskStatus {
    pub tick: u64,
    pub elapsed: f64,
    pub duration: f64,
    pub events: Vec<TaskEvent>,
    pub counters: Counters,
    pub terminal: bool,
    /// Body held at the end of the previous update.
    pub held: Option<BodyId>,
    pub detail: TaskDetail,
}

impl TaskStatus {
    pub fn new(spec: &TaskSpec, duration: f64) -> Self {
        let detail = match spec {
            TaskSpec::Push { .. } => TaskDetail::Push(PushStats::default()),
            TaskSpec::Peg { .. } => TaskDetail::Peg(PegStats { depth: f64::NEG_INFINITY, ..PegStats::default() }),
            TaskSpec::Abbt { blocks, .. } => {
                TaskDetail::Abbt { blocks: vec![BlockTrack::default(); blocks.len()], partition_contact: false }
            }
            TaskSpec::Free => TaskDetail::Free,
        };
        Self {
            tick: 0,
            elapsed: 0.0,
            duration,
            events: Vec::new(),
            counters: Counters::default(),
            terminal: false,
            held: None,
            detail,
        }
    }

    fn log(&mut self, kind: EventKind) {
        self.events.push(TaskEvent { tick: self.tick, t: self.elapsed, kind });
    }
}

/// Advances the clock and logs gripper transitions. Returns `None` when the
/// task had already ended.
fn begin(status: &TaskStatus, world: &World) -> Option<TaskStatus> {
    if status.terminal {
        return None;
    }
    let mut next = status.clone();
    next.tick += 1;
    // each update covers one tick; the caller keeps dt fixed
    let held = world.gripper.attached.map(|a| a.body);
    if held != next.held {
        if let Some(old) = next.held {
            next.events.push(TaskEvent { tick: next.tick, t: 0.0, kind: EventKind::Released { body: world.bodies[old].name.clone() } });
        }
        if let Some(new) = held {
            next.events.push(TaskEvent { tick: next.tick, t: 0.0, kind: EventKind::Latched { body: world.bodies[new].name.clone() } });
        }
        next.held = held;
    }
    Some(next)
}

/// Stamps the events of this tick and applies the time limit.
fn finish(mut next: TaskStatus, dt: f64) -> TaskStatus {
    next.elapsed = next.tick as f64 * dt;
    let tick = next.tick;
    let t = next.elapsed;
    for e in next.events.iter_mut().rev().take_while(|e| e.tick == tick) {
        e.t = t;
    }
    if next.elapsed >= next.duration - 0.5 * dt {
        next.terminal = true;
        next.log(EventKind::TimeUp);
    }
    next
}

fn pair(contacts: &[Contact], a: BodyId, b: BodyId) -> impl Iterator<Item = &Contact> {
    contacts.iter().filter(move |c| c.involves(a) && c.involves(b))
}

/// Platform displacement along the rail, tool contact force statistics and
/// contact make/break events.
pub fn push_task_update(status: &TaskStatus, spec: &TaskSpec, world: &World, contacts: &[Contact], dt: f64) -> TaskStatus {
    let TaskSpec::Push { platform, tool, axis, start } = spec else {
        panic!("push update on a {spec:?} task");
    };
    let Some(mut next) = begin(status, world) else {
        return status.clone();
    };
    let TaskDetail::Push(mut stats) = next.detail.clone() else {
        panic!("push update on a {:?} status", next.detail);
    };
    stats.displacement = (world.bodies[*platform].pose.position - start).dot(axis);
    let touching: Vec<&Contact> = pair(contacts, *platform, *tool).collect();
    let force: f64 = touching.iter().map(|c| c.force).sum();
    let in_contact = !touching.is_empty();
    if in_contact {
        stats.peak_force = stats.peak_force.max(force);
        stats.impulse += force * dt;
        stats.contact_time += dt;
    }
    let body = world.bodies[*platform].name.clone();
    match (stats.in_contact, in_contact) {
        (false, true) => next.log(EventKind::ContactMade { body }),
        (true, false) => next.log(EventKind::ContactBroken { body }),
        _ => {}
    }
    stats.in_contact = in_contact;
    next.detail = TaskDetail::Push(stats);
    finish(next, dt)
}

/// Tracks the peg tip relative to the hole: depth past the entry face,
/// radial offset, time inside and lateral contact force. An insertion is the
/// tip passing `insertion_depth` while clearing the hole wall.
pub fn peg_task_update(status: &TaskStatus, spec: &TaskSpec, world: &World, contacts: &[Contact], dt: f64) -> TaskStatus {
    let TaskSpec::Peg { peg, board, insertion_depth } = spec else {
        panic!("peg update on a {spec:?} task");
    };
    let Some(mut next) = begin(status, world) else {
        return status.clone();
    };
    let TaskDetail::Peg(mut stats) = next.detail.clone() else {
        panic!("peg update on a {:?} status", next.detail);
    };
    let (peg_body, board_body) = (&world.bodies[*peg], &world.bodies[*board]);
    let (Shape::Cylinder { radius, half_length }, Shape::HolePlate { half_extents, hole_radius }) = (peg_body.shape, board_body.shape)
    else {
        panic!("peg task needs a cylinder and a hole plate");
    };
    let tip = peg_body.pose.transform_point(&Vec3::new(0.0, 0.0, half_length));
    let q = board_body.pose.inverse_transform_point(&tip);
    stats.depth = q.z + half_extents[2];
    stats.offset = q.x.hypot(q.y);
    let fits = stats.offset + radius <= hole_radius;
    stats.inside = stats.depth > 0.0 && fits;
    if stats.inside {
        stats.inside_time += dt;
    }
    let inserted = stats.depth > *insertion_depth && fits;
    match (stats.inserted, inserted) {
        (false, true) => {
            next.counters.insertions += 1;
            next.log(EventKind::Insertion);
        }
        (true, false) => next.log(EventKind::Extraction),
        _ => {}
    }
    stats.inserted = inserted;
    let hole_axis = board_body.pose.attitude.rotate(&Vec3::z());
    for c in pair(contacts, *peg, *board) {
        let f = c.force_on(*peg);
        let lateral = (f - hole_axis * hole_axis.dot(&f)).norm();
        stats.peak_lateral_force = stats.peak_lateral_force.max(lateral);
    }
    next.detail = TaskDetail::Peg(stats);
    finish(next, dt)
}

/// Counts a transfer when a block that has been in the gripper rests on the
/// target side (speed below `settle_speed` for `settle_time`). Each block
/// counts once. Partition touches by the vehicle or the held block are
/// logged as hits without affecting the score.
pub fn abbt_update(status: &TaskStatus, spec: &TaskSpec, world: &World, contacts: &[Contact], dt: f64) -> TaskStatus {
    let TaskSpec::Abbt { geometry, partition, blocks, vehicle_parts, settle_speed, settle_time } = spec else {
        panic!("abbt update on a {spec:?} task");
    };
    let Some(mut next) = begin(status, world) else {
        return status.clone();
    };
    let TaskDetail::Abbt { blocks: mut tracks, partition_contact } = next.detail.clone() else {
        panic!("abbt update on a {:?} status", next.detail);
    };
    let held = world.gripper.attached.map(|a| a.body);
    for (track, &id) in tracks.iter_mut().zip(blocks) {
        if track.counted {
            continue;
        }
        let body = &world.bodies[id];
        if held == Some(id) {
            track.was_held = true;
            track.settled_for = 0.0;
            continue;
        }
        if track.was_held && body.velocity.norm() < *settle_speed && geometry.on_target_side(&body.pose.position) {
            track.settled_for += dt;
            // tolerance absorbs the accumulated rounding of n·dt
            if track.settled_for >= settle_time - 1e-9 {
                track.counted = true;
                next.counters.transfers += 1;
                next.log(EventKind::Transfer { block: body.name.clone() });
            }
        } else {
            track.settled_for = 0.0;
        }
    }
    let touching = contacts
        .iter()
        .filter(|c| c.involves(*partition))
        .any(|c| vehicle_parts.iter().chain(held.iter()).any(|&v| c.involves(v)));
    if touching && !partition_contact {
        next.counters.partition_hits += 1;
        next.log(EventKind::PartitionHit);
    }
    next.detail = TaskDetail::Abbt { blocks: tracks, partition_contact: touching };
    finish(next, dt)
}

/// Dispatches to the update for the task kind.
pub fn task_update(status: &TaskStatus, spec: &TaskSpec, world: &World, contacts: &[Contact], dt: f64) -> TaskStatus {
    match spec {
        TaskSpec::Push { .. } => push_task_update(status, spec, world, contacts, dt),
        TaskSpec::Peg { .. } => peg_task_update(status, spec, world, contacts, dt),
        TaskSpec::Abbt { .. } => abbt_update(status, spec, world, contacts, dt),
        TaskSpec::Free => match begin(status, world) {
            Some(next) => finish(next, dt),
            None => status.clone(),
        },
    }
}
