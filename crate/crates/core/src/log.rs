//! Session logs: record and replay.
//!
//! A log is newline-delimited JSON. The first line is the [`LogHeader`]
//! carrying the full scenario configuration; every following line is a
//! [`LogRecord`]: an input as applied at a tick, or a state checkpoint.
//! Checksums are 64-bit FNV-1a values written as 16 hex digits.
//!
//! ```text
//! {"format":"omav-teleop-log","version":1,"scenario_hash":"…","config":{…},…}
//! {"type":"input","tick":0,"input":{"handle":{…},"gripper":"hold"}}
//! {"type":"checkpoint","tick":500,"checksum":"9f3c…"}
//! ```

use std::hash::Hasher;
use std::io::{BufRead, Write};

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::{Condition, ScenarioConfig, ScenarioError};
use crate::session::{run_session_with, InputFrame, InputSource, Participant, Session, SessionError, SessionOutcome};
use teleop_stats::Expertise;

pub const LOG_FORMAT: &str = "omav-teleop-log";
pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("unsupported log format `{0}` version {1}")]
    Unsupported(String, u32),
    #[error("scenario hash {found} does not match the logged {expected}")]
    ScenarioMismatch { expected: String, found: String },
    #[error("state diverged at tick {tick}: expected checksum {expected:016x}, got {found:016x}")]
    ChecksumMismatch { tick: u64, expected: u64, found: u64 },
    #[error("scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("session: {0}")]
    Session(#[from] SessionError),
}

mod hex64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{v:016x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let text = String::deserialize(d)?;
        u64::from_str_radix(&text, 16).map_err(serde::de::Error::custom)
    }
}

/// FNV-1a of the canonical JSON encoding of a scenario configuration.
pub fn scenario_hash(config: &ScenarioConfig) -> u64 {
    let mut h = FnvHasher::default();
    h.write(serde_json::to_string(config).expect("scenario config serializes").as_bytes());
    h.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format: String,
    pub version: u32,
    /// Version of the simulator that wrote the log.
    pub simulator: String,
    #[serde(with = "hex64")]
    pub scenario_hash: u64,
    pub seed: u64,
    pub condition: Condition,
    pub participant: String,
    pub expertise: Expertise,
    pub config: ScenarioConfig,
}

impl LogHeader {
    pub fn new(config: &ScenarioConfig, participant: &Participant) -> Self {
        Self {
            format: LOG_FORMAT.into(),
            version: LOG_VERSION,
            simulator: env!("CARGO_PKG_VERSION").into(),
            scenario_hash: scenario_hash(config),
            seed: config.session.seed,
            condition: config.condition,
            participant: participant.id.clone(),
            expertise: participant.expertise,
            config: config.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogRecord {
    Input {
        tick: u64,
        input: InputFrame,
    },
    Checkpoint {
        tick: u64,
        #[serde(with = "hex64")]
        checksum: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionLog {
    pub header: LogHeader,
    pub records: Vec<LogRecord>,
}

impl SessionLog {
    pub fn inputs(&self) -> Vec<(u64, InputFrame)> {
        self.records
            .iter()
            .filter_map(|r| match r {
                LogRecord::Input { tick, input } => Some((*tick, *input)),
                LogRecord::Checkpoint { .. } => None,
            })
            .collect()
    }

    pub fn checkpoints(&self) -> Vec<(u64, u64)> {
        self.records
            .iter()
            .filter_map(|r| match r {
                LogRecord::Checkpoint { tick, checksum } => Some((*tick, *checksum)),
                LogRecord::Input { .. } => None,
            })
            .collect()
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        serde_json::to_writer(&mut w, &self.header)?;
        w.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn to_ndjson(&self) -> String {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to memory cannot fail");
        String::from_utf8(out).expect("JSON is UTF-8")
    }

    pub fn read_from(r: impl BufRead) -> Result<Self, LogError> {
        let mut lines = r.lines().enumerate().filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()));
        let malformed = |line: usize, e: serde_json::Error| LogError::Malformed { line: line + 1, message: e.to_string() };
        let (n, first) = lines.next().ok_or(LogError::Malformed { line: 1, message: "empty log".into() })?;
        let header: LogHeader = serde_json::from_str(&first?).map_err(|e| malformed(n, e))?;
        if header.format != LOG_FORMAT || header.version != LOG_VERSION {
            return Err(LogError::Unsupported(header.format, header.version));
        }
        let mut records = Vec::new();
        let mut last_tick = 0;
        for (n, line) in lines {
            let record: LogRecord = serde_json::from_str(&line?).map_err(|e| malformed(n, e))?;
            let tick = match record {
                LogRecord::Input { tick, .. } | LogRecord::Checkpoint { tick, .. } => tick,
            };
            if tick < last_tick {
                return Err(LogError::Malformed { line: n + 1, message: format!("tick {tick} after tick {last_tick}") });
            }
            last_tick = tick;
            records.push(record);
        }
        Ok(Self { header, records })
    }

    pub fn parse(text: &str) -> Result<Self, LogError> {
        Self::read_from(text.as_bytes())
    }
}

#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    pub outcome: SessionOutcome,
    /// Logged checkpoints that matched.
    pub verified: usize,
}

/// Re-runs a logged session from its header with the logged inputs. With
/// `verify`, every logged checkpoint must match the replayed state; the
/// first one that does not is reported.
pub fn replay_log(log: &SessionLog, verify: bool) -> Result<ReplayOutcome, LogError> {
    let h = &log.header;
    let found = scenario_hash(&h.config);
    if verify && found != h.scenario_hash {
        return Err(LogError::ScenarioMismatch { expected: format!("{:016x}", h.scenario_hash), found: format!("{found:016x}") });
    }
    let scenario = h.config.build()?;
    let participant = Participant { id: h.participant.clone(), expertise: h.expertise };
    let session = Session::with_condition(scenario, h.condition, &participant)?;
    let expected = log.checkpoints();
    let mut next = expected.iter().peekable();
    let mut mismatch = None;
    let mut verified = 0;
    let outcome = run_session_with(session, InputSource::Replay(log.inputs()), |out| {
        let Some(sum) = out.checkpoint else { return };
        while let Some(&&(tick, want)) = next.peek() {
            if tick > out.tick {
                break;
            }
            next.next();
            if mismatch.is_some() {
                continue;
            }
            if tick < out.tick {
                // logged checkpoint at a tick the replay never produced
                mismatch = Some((tick, want, 0));
            } else if want != sum {
                mismatch = Some((tick, want, sum));
            } else {
                verified += 1;
            }
        }
    })?;
    if verify {
        if let Some((tick, expected, found)) = mismatch {
            return Err(LogError::ChecksumMismatch { tick, expected, found });
        }
        if let Some(&(tick, expected)) = next.peek() {
            return Err(LogError::ChecksumMismatch { tick: *tick, expected: *expected, found: 0 });
        }
    }
    Ok(ReplayOutcome { outcome, verified })
}
