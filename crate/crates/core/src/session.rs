//! Fixed-step teleoperation session.
//!
//! One tick: apply the held input, integrate the reference from the handle,
//! step the vehicle under the contact wrench of the previous world step,
//! update the wrench observer, step the world with the vehicle parts at
//! the new pose, then run the task logic. Every `feedback_every` ticks the
//! feedback wrench for the operator is computed; every `checkpoint_every`
//! ticks the state is hashed into the session log.
//!
//! Simulation time is `tick · dt`; nothing reads the wall clock. A live
//! front end only decides which tick an input lands on.

use std::collections::VecDeque;
use std::hash::Hasher;
use std::sync::{Arc, Mutex};

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coupling::{feedback_wrench, handle_to_reference_rates, integrate_reference, HandleState};
use crate::dynamics::{compute_errors, step_dynamics, DynamicsError, MomentumObserver, ReferenceState, RigidState, Wrench6};
use crate::log::{LogHeader, LogRecord, SessionLog};
use crate::scenario::{Condition, Haptics, Scenario};
use crate::so3::Vec3;
use crate::task::{task_update, EventKind, TaskEvent, TaskStatus};
use crate::world::{Contact, GripperCommand, World};
use teleop_stats::{Expertise, TrialRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("dynamics: {0}")]
    Dynamics(#[from] DynamicsError),
    #[error("input handle out of range: {0}")]
    BadInput(String),
}

/// One operator sample: handle pose and gripper command.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputFrame {
    pub handle: HandleState,
    pub gripper: GripperCommand,
}

impl InputFrame {
    pub fn idle() -> Self {
        Self::default()
    }
}

/// Everything that evolves during a session.
#[derive(Debug, Clone)]
pub struct SessionState {
    pub tick: u64,
    pub vehicle: RigidState,
    pub reference: ReferenceState,
    pub input: InputFrame,
    pub world: World,
    pub task: TaskStatus,
    /// Contact wrench on the vehicle from the last world step, body frame.
    pub tau_ext: Wrench6,
    pub observer: MomentumObserver,
    /// Last feedback wrench sent to the operator, world frame.
    pub feedback: Wrench6,
    /// Contacts of the last world step.
    pub contacts: Vec<Contact>,
}

impl SessionState {
    pub fn elapsed(&self, dt: f64) -> f64 {
        self.tick as f64 * dt
    }

    /// 64-bit FNV-1a over the canonical little-endian encoding of the state.
    pub fn checksum(&self) -> u64 {
        let mut floats: Vec<f64> = Vec::with_capacity(80 + 15 * self.world.bodies.len());
        let (s, r, h) = (&self.vehicle, &self.reference, &self.input.handle);
        let frames = [
            (s.position, s.attitude, s.velocity, s.omega),
            (r.position, r.attitude, r.velocity, r.omega),
            (h.position, h.attitude, h.velocity, Vec3::zeros()),
        ];
        for (p, rot, v, w) in frames {
            floats.extend(p.iter().chain(&rot.to_row_major()).chain(v.iter()).chain(w.iter()));
        }
        let est = self.observer.estimate();
        for w in [self.tau_ext, est] {
            floats.extend(w.force.iter().chain(w.torque.iter()));
        }
        for b in &self.world.bodies {
            floats.extend(b.pose.position.iter().chain(&b.pose.attitude.to_row_major()).chain(b.velocity.iter()));
        }

        let mut hasher = FnvHasher::default();
        for v in floats {
            hasher.write(&v.to_bits().to_le_bytes());
        }
        hasher.write(&self.tick.to_le_bytes());
        hasher.write(&[self.input.gripper as u8]);
        let held = self.world.gripper.attached.map_or(u64::MAX, |a| a.body as u64);
        hasher.write(&held.to_le_bytes());
        let c = &self.task.counters;
        for v in [c.transfers, c.partition_hits, c.insertions] {
            hasher.write(&v.to_le_bytes());
        }
        hasher.write(&[self.task.terminal as u8]);
        hasher.write(&(self.task.events.len() as u64).to_le_bytes());
        hasher.finish()
    }
}

/// What one tick produced.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TickOutput {
    /// Tick count after the step.
    pub tick: u64,
    pub feedback: Option<Wrench6>,
    pub events: Vec<TaskEvent>,
    pub checkpoint: Option<u64>,
    pub done: bool,
}

/// Turns arriving inputs into applied inputs: optional fixed delay and, for
/// live sources, falling back to an idle handle after a silence.
#[derive(Debug, Clone)]
pub struct InputStage {
    delay: u64,
    timeout_ticks: Option<u64>,
    pending: VecDeque<(u64, InputFrame)>,
    last_arrival: u64,
    timed_out: bool,
}

impl InputStage {
    pub fn new(delay_ticks: u32, timeout_ticks: Option<u64>) -> Self {
        Self { delay: delay_ticks as u64, timeout_ticks, pending: VecDeque::new(), last_arrival: 0, timed_out: false }
    }

    /// Input to apply at `tick`, if it changes.
    pub fn process(&mut self, tick: u64, arriving: Option<InputFrame>) -> Option<InputFrame> {
        if let Some(frame) = arriving {
            self.pending.push_back((tick + self.delay, frame));
            self.last_arrival = tick;
            self.timed_out = false;
        }
        let mut applied = None;
        while let Some(&(due, frame)) = self.pending.front() {
            if due > tick {
                break;
            }
            applied = Some(frame);
            self.pending.pop_front();
        }
        if let Some(limit) = self.timeout_ticks {
            if !self.timed_out && tick.saturating_sub(self.last_arrival) > limit && self.pending.is_empty() {
                self.timed_out = true;
                applied = Some(InputFrame::idle());
            }
        }
        applied
    }
}

/// Trial metadata not carried by the scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Participant {
    pub id: String,
    pub expertise: Expertise,
}

impl Default for Participant {
    fn default() -> Self {
        Self { id: "anonymous".into(), expertise: Expertise::Beginner }
    }
}

#[derive(Debug, Clone)]
pub struct Session {
    pub scenario: Scenario,
    pub condition: Condition,
    pub state: SessionState,
    log: SessionLog,
    record: TrialRecord,
}

impl Session {
    /// Session in the scenario's own condition.
    pub fn new(scenario: Scenario) -> Result<Self, SessionError> {
        let condition = scenario.config.condition;
        Self::with_condition(scenario, condition, &Participant::default())
    }

    pub fn with_condition(scenario: Scenario, condition: Condition, participant: &Participant) -> Result<Self, SessionError> {
        let cfg = &scenario.config;
        let mut observer = MomentumObserver::isotropic(cfg.impedance.observer_gain)?;
        let vehicle = scenario.start;
        observer.update(&(scenario.impedance.mass() * vehicle.body_twist()), &nalgebra::Vector6::zeros(), cfg.session.dt);
        let task = TaskStatus::new(&scenario.task, cfg.task.duration());
        let state = SessionState {
            tick: 0,
            vehicle,
            reference: ReferenceState::hold(vehicle.position, vehicle.attitude),
            input: InputFrame::idle(),
            world: scenario.world.clone(),
            task,
            tau_ext: Wrench6::zero(),
            observer,
            feedback: Wrench6::zero(),
            contacts: Vec::new(),
        };
        let mut config = cfg.clone();
        config.condition = condition;
        let header = LogHeader::new(&config, participant);
        let mut record = TrialRecord::new(
            participant.id.clone(),
            participant.expertise,
            condition.display,
            condition.haptics,
            cfg.task.duration(),
        );
        record.speed_trace.push((0.0, vehicle.velocity.norm()));
        Ok(Self { scenario, condition, state, log: SessionLog { header, records: Vec::new() }, record })
    }

    pub fn dt(&self) -> f64 {
        self.scenario.config.session.dt
    }

    pub fn finished(&self) -> bool {
        self.state.task.terminal
    }

    pub fn log(&self) -> &SessionLog {
        &self.log
    }

    pub fn record(&self) -> &TrialRecord {
        &self.record
    }

    /// Advances one tick with `applied` as the new input (or holding the
    /// previous one).
    pub fn step(&mut self, applied: Option<InputFrame>) -> Result<TickOutput, SessionError> {
        let dt = self.dt();
        let cfg = &self.scenario.config;
        let st = &mut self.state;
        if st.task.terminal {
            return Ok(TickOutput { tick: st.tick, done: true, ..TickOutput::default() });
        }
        if let Some(frame) = applied {
            frame.handle.validate().map_err(|e| SessionError::BadInput(e.to_string()))?;
            st.input = frame;
            self.log.records.push(LogRecord::Input { tick: st.tick, input: frame });
        }
        // a latch with nothing in reach is simply ignored
        let _ = st.world.command_gripper(st.input.gripper);

        let coupling = &self.scenario.coupling;
        let params = &self.scenario.impedance;
        let (v_ref, omega_ref) = handle_to_reference_rates(&st.input.handle, coupling);
        st.reference = integrate_reference(&st.reference, &v_ref, &omega_ref, dt);

        let before = st.vehicle;
        let next = step_dynamics(&before, &st.reference, &st.tau_ext, params, dt)?;
        // commanded wrench averaged over the step, matching the integrator
        let u0 = params.control_wrench(&compute_errors(&before, &st.reference));
        let u1 = params.control_wrench(&compute_errors(&next, &st.reference));
        st.observer.update(&(params.mass() * next.body_twist()), &((u0 + u1) * 0.5), dt);
        st.vehicle = next;

        st.world.set_vehicle(&next);
        let report = st.world.step(&[], dt);
        let r = next.attitude;
        st.tau_ext = Wrench6::new(r.inverse_rotate(&report.vehicle_wrench.force), r.inverse_rotate(&report.vehicle_wrench.torque));

        let seen = st.task.events.len();
        st.task = task_update(&st.task, &self.scenario.task, &st.world, &report.contacts, dt);
        st.contacts = report.contacts;
        st.tick += 1;
        let events = st.task.events[seen..].to_vec();
        let t = st.elapsed(dt);
        self.record.speed_trace.push((t, next.velocity.norm()));
        for e in &events {
            if matches!(e.kind, EventKind::Transfer { .. }) {
                self.record.transfers.push(e.t);
            }
        }

        let mut out = TickOutput { tick: st.tick, events, done: st.task.terminal, ..TickOutput::default() };
        if st.tick.is_multiple_of(cfg.session.feedback_every as u64) {
            let est = st.observer.estimate();
            let world_hat = Wrench6::new(r.rotate(&est.force), r.rotate(&est.torque));
            st.feedback = feedback_wrench(&world_hat, &st.input.handle, coupling, self.condition.haptics == Haptics::On);
            out.feedback = Some(st.feedback);
        }
        if st.tick.is_multiple_of(cfg.session.checkpoint_every as u64) || st.task.terminal {
            let sum = st.checksum();
            self.log.records.push(LogRecord::Checkpoint { tick: st.tick, checksum: sum });
            out.checkpoint = Some(sum);
        }
        Ok(out)
    }

    /// Ends the session and hands back the log and the trial record.
    pub fn finish(self) -> SessionOutcome {
        SessionOutcome { final_checksum: self.state.checksum(), log: self.log, record: self.record, state: self.state }
    }
}

#[derive(Debug, Clone)]
pub struct SessionOutcome {
    pub log: SessionLog,
    pub record: TrialRecord,
    pub state: SessionState,
    pub final_checksum: u64,
}

/// Latest-wins mailbox between a network reader and the session loop.
#[derive(Debug, Clone, Default)]
pub struct LiveInput {
    slot: Arc<Mutex<(u64, Option<InputFrame>)>>,
}

impl LiveInput {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, frame: InputFrame) {
        let mut slot = self.slot.lock().expect("input mailbox poisoned");
        slot.0 += 1;
        slot.1 = Some(frame);
    }

    /// Newest frame not yet taken.
    pub fn take(&self) -> Option<InputFrame> {
        self.slot.lock().expect("input mailbox poisoned").1.take()
    }
}

/// Closed-loop input generator for headless runs.
pub trait Pilot {
    /// Input for the coming tick, or `None` to keep the previous one.
    fn input(&mut self, state: &SessionState, scenario: &Scenario) -> Option<InputFrame>;
}

impl<F: FnMut(&SessionState, &Scenario) -> Option<InputFrame>> Pilot for F {
    fn input(&mut self, state: &SessionState, scenario: &Scenario) -> Option<InputFrame> {
        self(state, scenario)
    }
}

pub enum InputSource<'a> {
    /// Operator over the network; silence beyond the input timeout idles
    /// the handle.
    Live(LiveInput),
    /// Inputs exactly as applied in a recorded session.
    Replay(Vec<(u64, InputFrame)>),
    Scripted(Box<dyn Pilot + 'a>),
}

/// Runs a session to the end of its task with the given input source.
pub fn run_session(session: Session, source: InputSource<'_>) -> Result<SessionOutcome, SessionError> {
    run_session_with(session, source, |_| {})
}

/// [`run_session`] with a callback on every tick's output.
pub fn run_session_with(
    mut session: Session,
    source: InputSource<'_>,
    mut on_tick: impl FnMut(&TickOutput),
) -> Result<SessionOutcome, SessionError> {
    let s = session.scenario.config.session;
    let timeout = (s.input_timeout / s.dt).round() as u64;
    match source {
        InputSource::Replay(inputs) => {
            let mut inputs = inputs.into_iter().peekable();
            while !session.finished() {
                let tick = session.state.tick;
                let mut applied = None;
                while let Some((_, frame)) = inputs.next_if(|(t, _)| *t <= tick) {
                    applied = Some(frame);
                }
                on_tick(&session.step(applied)?);
            }
        }
        InputSource::Live(live) => {
            let mut stage = InputStage::new(s.delay_ticks, Some(timeout));
            while !session.finished() {
                let applied = stage.process(session.state.tick, live.take());
                on_tick(&session.step(applied)?);
            }
        }
        InputSource::Scripted(mut pilot) => {
            let mut stage = InputStage::new(s.delay_ticks, None);
            while !session.finished() {
                let arriving = pilot.input(&session.state, &session.scenario);
                let applied = stage.process(session.state.tick, arriving);
                on_tick(&session.step(applied)?);
            }
        }
    }
    Ok(session.finish())
}
