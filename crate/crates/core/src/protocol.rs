//! Wire protocol between the session service and an operator console.
//!
//! Every websocket text frame is one JSON object with exactly four keys:
//!
//! ```text
//! {"v":1,"kind":"input","tick":1200,"payload":{"handle":{…},"gripper":"latch"}}
//! ```
//!
//! | kind       | direction        | payload                          |
//! |------------|------------------|----------------------------------|
//! | `hello`    | service → console| [`Hello`]                        |
//! | `input`    | console → service| [`InputFrame`]                   |
//! | `state`    | service → console| [`StateFrame`]                   |
//! | `feedback` | service → console| [`Wrench6`], world frame, newtons|
//! | `event`    | service → console| [`TaskEvent`]                    |
//! | `tlx`      | console → service| [`TlxResponse`]                  |
//! | `end`      | both             | [`EndSummary`] (empty from the console) |
//!
//! `tick` is the simulation tick the frame refers to; it never decreases
//! within one direction of a connection. Numbers round-trip exactly.

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use thiserror::Error;

use crate::dynamics::Wrench6;
use crate::scenario::Condition;
use crate::session::{InputFrame, Session};
use crate::so3::{Rot3, Vec3};
use crate::task::{Counters, TaskEvent};
use crate::world::{BodyKind, Shape};
use teleop_stats::TlxResponse;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("malformed frame at byte {offset}: {message}")]
    MalformedFrame { offset: usize, message: String },
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u32),
    #[error("unknown message kind `{0}`")]
    UnknownKind(String),
    #[error("invalid {kind} payload: {message}")]
    InvalidPayload { kind: &'static str, message: String },
    #[error("tick {tick} after tick {last}")]
    TickRegression { last: u64, tick: u64 },
}

/// Scene description sent once when a console connects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hello {
    pub scenario: String,
    pub condition: Condition,
    pub dt: f64,
    pub duration: f64,
    /// Ticks between feedback frames.
    pub feedback_every: u32,
    pub bodies: Vec<BodyInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyInfo {
    pub name: String,
    pub shape: Shape,
    /// `static`, `dynamic`, `rail` or `kinematic`.
    pub kind: String,
    pub vehicle_part: bool,
    pub position: Vec3,
    pub attitude: Rot3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseFrame {
    pub position: Vec3,
    pub attitude: Rot3,
}

/// Snapshot for rendering. `bodies` lists every body in [`Hello`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateFrame {
    pub t: f64,
    pub vehicle: PoseFrame,
    pub velocity: Vec3,
    pub reference: PoseFrame,
    pub handle: Vec3,
    pub held: Option<String>,
    pub counters: Counters,
    pub bodies: Vec<PoseFrame>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndSummary {
    #[serde(default)]
    pub reason: String,
    #[serde(default)]
    pub blocks: usize,
    /// Energy per transferred block in joules, absent when none was moved.
    #[serde(default)]
    pub energy: Option<f64>,
    #[serde(default)]
    pub checksum: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Hello(Hello),
    Input(InputFrame),
    State(Box<StateFrame>),
    Feedback(Wrench6),
    Event(TaskEvent),
    Tlx(TlxResponse),
    End(EndSummary),
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Hello(_) => "hello",
            Message::Input(_) => "input",
            Message::State(_) => "state",
            Message::Feedback(_) => "feedback",
            Message::Event(_) => "event",
            Message::Tlx(_) => "tlx",
            Message::End(_) => "end",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub tick: u64,
    pub message: Message,
}

#[derive(Serialize)]
struct OutFrame<'a, T: Serialize> {
    v: u32,
    kind: &'a str,
    tick: u64,
    payload: &'a T,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InFrame<'a> {
    v: u32,
    kind: &'a str,
    tick: u64,
    #[serde(borrow)]
    payload: &'a RawValue,
}

/// Byte offset of a serde_json error position inside `text`.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let start: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    (start + column.saturating_sub(1)).min(text.len())
}

fn malformed(text: &str, base: usize, e: &serde_json::Error) -> ProtocolError {
    let local = if e.is_eof() { text.len() } else { byte_offset(text, e.line(), e.column()) };
    ProtocolError::MalformedFrame { offset: base + local, message: e.to_string() }
}

pub fn encode_message(frame: &Frame) -> String {
    fn out<T: Serialize>(kind: &str, tick: u64, payload: &T) -> String {
        serde_json::to_string(&OutFrame { v: PROTOCOL_VERSION, kind, tick, payload }).expect("protocol payloads serialize")
    }
    let (k, t) = (frame.message.kind(), frame.tick);
    match &frame.message {
        Message::Hello(p) => out(k, t, p),
        Message::Input(p) => out(k, t, p),
        Message::State(p) => out(k, t, p),
        Message::Feedback(p) => out(k, t, p),
        Message::Event(p) => out(k, t, p),
        Message::Tlx(p) => out(k, t, p),
        Message::End(p) => out(k, t, p),
    }
}

pub fn decode_message(text: &str) -> Result<Frame, ProtocolError> {
    let raw: InFrame = serde_json::from_str(text).map_err(|e| malformed(text, 0, &e))?;
    if raw.v != PROTOCOL_VERSION {
        return Err(ProtocolError::UnsupportedVersion(raw.v));
    }
    let body = raw.payload.get();
    let base = body.as_ptr() as usize - text.as_ptr() as usize;
    fn parse<T: for<'de> Deserialize<'de>>(body: &str, base: usize) -> Result<T, ProtocolError> {
        serde_json::from_str(body).map_err(|e| malformed(body, base, &e))
    }
    let message = match raw.kind {
        "hello" => Message::Hello(parse(body, base)?),
        "input" => {
            let input: InputFrame = parse(body, base)?;
            input
                .handle
                .validate()
                .map_err(|e| ProtocolError::InvalidPayload { kind: "input", message: e.to_string() })?;
            Message::Input(input)
        }
        "state" => Message::State(parse(body, base)?),
        "feedback" => Message::Feedback(parse(body, base)?),
        "event" => Message::Event(parse(body, base)?),
        "tlx" => Message::Tlx(parse(body, base)?),
        "end" => Message::End(parse(body, base)?),
        other => return Err(ProtocolError::UnknownKind(other.to_string())),
    };
    Ok(Frame { tick: raw.tick, message })
}

/// Enforces non-decreasing ticks on one direction of a stream.
#[derive(Debug, Clone, Copy, Default)]
pub struct TickGuard {
    last: Option<u64>,
}

impl TickGuard {
    pub fn check(&mut self, tick: u64) -> Result<(), ProtocolError> {
        match self.last {
            Some(last) if tick < last => Err(ProtocolError::TickRegression { last, tick }),
            _ => {
                self.last = Some(tick);
                Ok(())
            }
        }
    }

    /// Decodes `text` and checks its tick.
    pub fn decode(&mut self, text: &str) -> Result<Frame, ProtocolError> {
        let frame = decode_message(text)?;
        self.check(frame.tick)?;
        Ok(frame)
    }
}

fn pose_frame(position: Vec3, attitude: Rot3) -> PoseFrame {
    PoseFrame { position, attitude }
}

impl Hello {
    pub fn for_session(session: &Session) -> Self {
        let cfg = &session.scenario.config;
        let world = &session.state.world;
        let parts: Vec<_> = world.rig.parts.iter().map(|(id, _)| *id).collect();
        let bodies = world
            .bodies
            .iter()
            .enumerate()
            .map(|(i, b)| BodyInfo {
                name: b.name.clone(),
                shape: b.shape,
                kind: match b.kind {
                    BodyKind::Static => "static",
                    BodyKind::Dynamic => "dynamic",
                    BodyKind::Rail { .. } => "rail",
                    BodyKind::Kinematic => "kinematic",
                }
                .into(),
                vehicle_part: parts.contains(&i),
                position: b.pose.position,
                attitude: b.pose.attitude,
            })
            .collect();
        Self {
            scenario: cfg.name.clone(),
            condition: session.condition,
            dt: cfg.session.dt,
            duration: cfg.task.duration(),
            feedback_every: cfg.session.feedback_every,
            bodies,
        }
    }
}

impl StateFrame {
    pub fn for_session(session: &Session) -> Self {
        let st = &session.state;
        let world = &st.world;
        Self {
            t: st.elapsed(session.dt()),
            vehicle: pose_frame(st.vehicle.position, st.vehicle.attitude),
            velocity: st.vehicle.velocity,
            reference: pose_frame(st.reference.position, st.reference.attitude),
            handle: st.input.handle.position,
            held: world.gripper.attached.map(|a| world.bodies[a.body].name.clone()),
            counters: st.task.counters,
            bodies: world.bodies.iter().map(|b| pose_frame(b.pose.position, b.pose.attitude)).collect(),
        }
    }
}
