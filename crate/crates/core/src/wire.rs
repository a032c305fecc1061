//! Wire protocol, version 1.
//!
//! Newline-delimited UTF-8 JSON. Every message is an envelope
//!
//! ```text
//! {"v":1,"type":"<kind>","seq":<n>,"server_time":<ms>,"payload":{...}}
//! ```
//!
//! `server_time` is present on everything the server sends and absent on
//! client messages. On `event` messages `seq` is the session log sequence
//! number; on other server messages it is the last sequence number applied.
//! Clients put their own running counter there.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::archive::JournalEntry;
use crate::ids::{IterationId, SessionId, StoryId};
use crate::ledger::{EstimateAdvice, Iteration, LedgerError, Story, StoryStatus};
use crate::presence::PresenceBoard;
use crate::session::{LogEntry, Member, SessionError, SessionEvent, SessionReplayError, SessionState};
use crate::time::Timestamp;
use crate::timer::{InterruptionKind, TimerConfig, TimerError};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub session: SessionId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token: Option<String>,
    /// Joins the session as this member unless already present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub member: Option<Member>,
    /// Creates the session if it does not exist.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub create: Option<CreateOptions>,
}

/// Timer settings for a new session; missing fields take the server's defaults.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreateOptions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub work_minutes: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub short_break_minutes: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub long_break_minutes: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub long_break_every: Option<u32>,
}

impl CreateOptions {
    pub fn resolve(&self, defaults: TimerConfig) -> TimerConfig {
        TimerConfig {
            work_minutes: self.work_minutes.unwrap_or(defaults.work_minutes),
            short_break_minutes: self.short_break_minutes.unwrap_or(defaults.short_break_minutes),
            long_break_minutes: self.long_break_minutes.unwrap_or(defaults.long_break_minutes),
            long_break_every: self.long_break_every.unwrap_or(defaults.long_break_every),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub state: SessionState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReportRequest {
    Day {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        date: Option<NaiveDate>,
    },
    Iteration {
        iteration: IterationId,
    },
    /// A member's journal entry; defaults to the sender and today.
    Journal {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        member: Option<crate::ids::MemberId>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        date: Option<NaiveDate>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum CommandBody {
    Ready,
    Start,
    Void {
        kind: InterruptionKind,
        #[serde(default)]
        note: String,
    },
    /// A deflected interruption; the pomodoro goes on.
    Interrupt {
        kind: InterruptionKind,
        #[serde(default)]
        note: String,
    },
    Estimate {
        story: StoryId,
        units: i64,
    },
    Track {
        story: StoryId,
        ptype: String,
        #[serde(default)]
        half: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pomodoro: Option<u64>,
    },
    Rotate,
    Journal {
        lines: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        date: Option<NaiveDate>,
    },
    Leave,
    AddIteration {
        iteration: Iteration,
    },
    AddStory {
        story: Story,
    },
    SetStatus {
        story: StoryId,
        status: StoryStatus,
    },
    DefineType {
        name: String,
    },
    CloseIteration {
        iteration: IterationId,
    },
    RecordDay {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        date: Option<NaiveDate>,
    },
    Report {
        report: ReportRequest,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Command {
    /// Client-chosen id; a retried id is acknowledged, never re-applied.
    pub id: String,
    #[serde(flatten)]
    pub body: CommandBody,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorReply {
    pub code: String,
    pub reason: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command_id: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub missing: Vec<crate::ids::MemberId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub command_id: String,
    /// True when the id had been seen before and nothing was applied.
    pub duplicate: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advice: Option<EstimateAdvice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub journal: Option<JournalEntry>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Text,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub command_id: String,
    pub format: ReportFormat,
    pub body: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    Hello(Hello),
    Snapshot(Box<Snapshot>),
    Command(Command),
    Event(SessionEvent),
    Presence(PresenceBoard),
    Error(ErrorReply),
    Ack(Ack),
    Report(Report),
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Hello(_) => "hello",
            Message::Snapshot(_) => "snapshot",
            Message::Command(_) => "command",
            Message::Event(_) => "event",
            Message::Presence(_) => "presence",
            Message::Error(_) => "error",
            Message::Ack(_) => "ack",
            Message::Report(_) => "report",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Envelope {
    pub v: u32,
    pub seq: u64,
    pub server_time: Option<Timestamp>,
    pub message: Message,
}

impl Envelope {
    pub fn from_server(seq: u64, server_time: Timestamp, message: Message) -> Self {
        Envelope { v: PROTOCOL_VERSION, seq, server_time: Some(server_time), message }
    }

    pub fn from_client(seq: u64, message: Message) -> Self {
        Envelope { v: PROTOCOL_VERSION, seq, server_time: None, message }
    }

    pub fn event(entry: &LogEntry, server_time: Timestamp) -> Self {
        Envelope::from_server(entry.seq, server_time, Message::Event(entry.event.clone()))
    }
}

#[derive(Serialize, Deserialize)]
struct Raw {
    v: u32,
    #[serde(rename = "type")]
    kind: String,
    seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    server_time: Option<Timestamp>,
    payload: Value,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u32),
}

impl WireError {
    pub fn code(&self) -> &'static str {
        match self {
            WireError::Malformed(_) => "MalformedMessage",
            WireError::UnsupportedVersion(_) => "UnsupportedVersion",
        }
    }
}

fn to_value<T: Serialize>(t: &T) -> Value {
    serde_json::to_value(t).expect("protocol types always serialize")
}

/// One line of the protocol, without the trailing newline.
pub fn encode(envelope: &Envelope) -> String {
    let payload = match &envelope.message {
        Message::Hello(p) => to_value(p),
        Message::Snapshot(p) => to_value(p),
        Message::Command(p) => to_value(p),
        Message::Event(p) => to_value(p),
        Message::Presence(p) => to_value(p),
        Message::Error(p) => to_value(p),
        Message::Ack(p) => to_value(p),
        Message::Report(p) => to_value(p),
    };
    let raw = Raw {
        v: envelope.v,
        kind: envelope.message.kind().to_owned(),
        seq: envelope.seq,
        server_time: envelope.server_time,
        payload,
    };
    serde_json::to_string(&raw).expect("protocol types always serialize")
}

pub fn decode(line: &str) -> Result<Envelope, WireError> {
    let raw: Raw =
        serde_json::from_str(line.trim_end_matches(['\r', '\n'])).map_err(|e| WireError::Malformed(e.to_string()))?;
    if raw.v != PROTOCOL_VERSION {
        return Err(WireError::UnsupportedVersion(raw.v));
    }
    fn payload<T: serde::de::DeserializeOwned>(v: Value) -> Result<T, WireError> {
        serde_json::from_value(v).map_err(|e| WireError::Malformed(e.to_string()))
    }
    let message = match raw.kind.as_str() {
        "hello" => Message::Hello(payload(raw.payload)?),
        "snapshot" => Message::Snapshot(Box::new(payload(raw.payload)?)),
        "command" => Message::Command(payload(raw.payload)?),
        "event" => Message::Event(payload(raw.payload)?),
        "presence" => Message::Presence(payload(raw.payload)?),
        "error" => Message::Error(payload(raw.payload)?),
        "ack" => Message::Ack(payload(raw.payload)?),
        "report" => Message::Report(payload(raw.payload)?),
        other => return Err(WireError::Malformed(format!("unknown message type `{other}`"))),
    };
    Ok(Envelope { v: raw.v, seq: raw.seq, server_time: raw.server_time, message })
}

/// The raw `payload` object of a line, untouched.
pub fn raw_payload(line: &str) -> Option<Value> {
    serde_json::from_str::<Raw>(line).ok().map(|r| r.payload)
}

/// Stable error code for a domain error, e.g. `NotAllReady`.
pub fn error_code(err: &SessionError) -> &'static str {
    match err {
        SessionError::InvalidConfig(_) => "InvalidConfig",
        SessionError::DuplicateMember(_) => "DuplicateMember",
        SessionError::UnknownMember(_) => "UnknownMember",
        SessionError::NotIdle(_) => "NotIdle",
        SessionError::NotAllReady { .. } => "NotAllReady",
        SessionError::RotateDuringWork => "RotateDuringWork",
        SessionError::Observer(_) => "Observer",
        SessionError::TimeWentBackwards { .. } => "TimeWentBackwards",
        SessionError::NothingToTrack { .. } => "NothingToTrack",
        SessionError::Timer(t) => match t {
            TimerError::StartWhileActive(_) => "StartWhileActive",
            TimerError::InterruptOutsideWork(_) => "InterruptOutsideWork",
            TimerError::NoActivePhase => "NoActivePhase",
            TimerError::TimeWentBackwards { .. } => "TimeWentBackwards",
        },
        SessionError::Ledger(l) => match l {
            LedgerError::UnknownStory(_) => "UnknownStory",
            LedgerError::UntrackedStory(_) => "UntrackedStory",
            LedgerError::NegativeEstimate(_) => "NegativeEstimate",
            LedgerError::VoidedPomodoro(_) => "VoidedPomodoro",
            LedgerError::PomodoroNotCompleted(_) => "PomodoroNotCompleted",
            LedgerError::UnknownPomodoro(_) => "UnknownPomodoro",
            LedgerError::NotAParticipant { .. } => "NotAParticipant",
            LedgerError::AlreadyTracked { .. } => "AlreadyTracked",
            LedgerError::InvalidEffort(_) => "InvalidEffort",
            LedgerError::UnknownPomodoroType(_) => "UnknownPomodoroType",
            LedgerError::DuplicateType(_) => "DuplicateType",
            LedgerError::UnknownIteration(_) => "UnknownIteration",
            LedgerError::DuplicateIteration(_) => "DuplicateIteration",
            LedgerError::InvalidIterationDates { .. } => "InvalidIterationDates",
            LedgerError::DuplicateStory(_) => "DuplicateStory",
            LedgerError::EstimateOnUntracked(_) => "EstimateOnUntracked",
        },
    }
}

impl ErrorReply {
    pub fn from_session(err: &SessionError, command_id: Option<String>) -> Self {
        let missing = match err {
            SessionError::NotAllReady { missing } => missing.clone(),
            _ => Vec::new(),
        };
        ErrorReply { code: error_code(err).to_owned(), reason: err.to_string(), command_id, missing }
    }

    pub fn new(code: &str, reason: impl Into<String>, command_id: Option<String>) -> Self {
        ErrorReply { code: code.to_owned(), reason: reason.into(), command_id, missing: Vec::new() }
    }
}

/// What a client makes of one incoming envelope.
#[derive(Clone, Debug, PartialEq)]
pub enum MirrorUpdate {
    Applied,
    /// Sequence gap or inapplicable event; re-handshake for a snapshot.
    NeedSnapshot(SessionReplayError),
    Ignored,
}

/// Client-side copy of a session, built from one snapshot plus the events
/// that follow it. It never runs the clock itself.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Mirror {
    pub state: Option<SessionState>,
    /// Server time minus local receive time, from the latest message.
    pub skew_ms: i64,
}

impl Mirror {
    pub fn receive(&mut self, envelope: &Envelope, local_receive: Timestamp) -> MirrorUpdate {
        if let Some(st) = envelope.server_time {
            self.skew_ms = st.as_millis() as i64 - local_receive.as_millis() as i64;
        }
        match &envelope.message {
            Message::Snapshot(s) => {
                self.state = Some(s.state.clone());
                MirrorUpdate::Applied
            }
            Message::Event(event) => {
                let Some(state) = self.state.as_mut() else {
                    return MirrorUpdate::NeedSnapshot(SessionReplayError {
                        seq: envelope.seq,
                        reason: "event before snapshot".into(),
                    });
                };
                if envelope.seq <= state.last_seq() {
                    return MirrorUpdate::Ignored;
                }
                match state.apply_entry(&LogEntry { seq: envelope.seq, event: event.clone() }) {
                    Ok(()) => MirrorUpdate::Applied,
                    Err(e) => MirrorUpdate::NeedSnapshot(e),
                }
            }
            _ => MirrorUpdate::Ignored,
        }
    }

    /// Server time estimated from a local clock reading.
    pub fn server_now(&self, local: Timestamp) -> Timestamp {
        Timestamp(local.as_millis().saturating_add_signed(self.skew_ms))
    }
}
