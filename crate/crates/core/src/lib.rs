//! Shared pomodoro for a whole team.
//!
//! One server-held [`PomodoroClock`] sets the work/break rhythm for everybody
//! in a [`SessionState`]; the [`Ledger`] uses the pair-pomodoro as its unit of
//! effort; the [`archive`] and [`reports`] modules keep the daily record and
//! turn it into metrics, the iteration spreadsheet and journals. [`wire`]
//! holds the line protocol shared by the server and its clients.

pub mod archive;
pub mod ids;
pub mod ledger;
pub mod pairing;
pub mod presence;
pub mod reports;
pub mod session;
pub mod time;
pub mod timer;
pub mod wire;

pub use archive::{Archive, ArchiveError, ArchiveRecord, ArchiveStore, DailyRecord, IterationRecord, JournalEntry};
pub use ids::{IterationId, MemberId, SessionId, StoryId};
pub use ledger::{
    capacity, meeting_effort, Effort, EstimateAdvice, Ledger, LedgerError, Story, StoryStatus, TrackMark,
};
pub use pairing::Pairing;
pub use presence::{PresenceBoard, PresenceState, PresenceStatus};
pub use session::{LogEntry, Member, Role, SessionError, SessionEvent, SessionState};
pub use time::Timestamp;
pub use timer::{Interruption, InterruptionKind, Phase, PomodoroClock, TimerConfig, TimerError, TimerEvent};
