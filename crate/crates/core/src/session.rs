//! One shared clock for the whole team.
//!
//! [`SessionState`] owns the clock, membership, the ready roster, the current
//! pairing, the effort ledger and the append-only event log. Every mutation is
//! a command that validates, then appends one or more [`SessionEvent`]s; the
//! state is always exactly what [`SessionState::replay`] rebuilds from the log.
//!
//! Commands never advance time on their own. Callers run [`SessionState::tick`]
//! with the same `now` first, so overdue deadlines are applied before the
//! command is judged.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{MemberId, SessionId, StoryId};
use crate::ledger::{
    Effort, EstimateAdvice, Iteration, Ledger, LedgerError, PomodoroOutcome, Story, StoryStatus, TrackMark,
};
use crate::pairing::{round_robin, Pairing};
use crate::time::Timestamp;
use crate::timer::{
    ConfigError, Interruption, InterruptionKind, Phase, PomodoroClock, TimerConfig, TimerError, TimerEvent,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Developer,
    Coach,
    CustomerProxy,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Member {
    pub id: MemberId,
    pub display_name: String,
    pub role: Role,
    pub full_time: bool,
}

impl Member {
    pub fn developer(id: impl Into<MemberId>) -> Self {
        let id = id.into();
        Member { display_name: id.to_string(), id, role: Role::Developer, full_time: true }
    }

    pub fn coach(id: impl Into<MemberId>) -> Self {
        Member { role: Role::Coach, ..Member::developer(id) }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SessionEvent {
    Created { at: Timestamp, session_id: SessionId, config: TimerConfig, creator: Member },
    Joined { at: Timestamp, member: Member },
    Left { at: Timestamp, member_id: MemberId },
    Ready { at: Timestamp, member_id: MemberId },
    PairsRotated { at: Timestamp, round: u64 },
    Started { at: Timestamp, initiator: MemberId, participants: Pairing, coach_override: bool },
    Timer { timer: TimerEvent },
    DayStarted { at: Timestamp, date: NaiveDate },
    IterationAdded { at: Timestamp, iteration: Iteration },
    StoryAdded { at: Timestamp, story: Story },
    Estimated { at: Timestamp, story_id: StoryId, units: u64, advice: EstimateAdvice },
    StatusChanged { at: Timestamp, story_id: StoryId, status: StoryStatus },
    TypeDefined { at: Timestamp, name: String },
    Tracked { mark: TrackMark },
}

impl SessionEvent {
    pub fn at(&self) -> Timestamp {
        match self {
            SessionEvent::Created { at, .. }
            | SessionEvent::Joined { at, .. }
            | SessionEvent::Left { at, .. }
            | SessionEvent::Ready { at, .. }
            | SessionEvent::PairsRotated { at, .. }
            | SessionEvent::Started { at, .. }
            | SessionEvent::DayStarted { at, .. }
            | SessionEvent::IterationAdded { at, .. }
            | SessionEvent::StoryAdded { at, .. }
            | SessionEvent::Estimated { at, .. }
            | SessionEvent::StatusChanged { at, .. }
            | SessionEvent::TypeDefined { at, .. } => *at,
            SessionEvent::Timer { timer } => timer.at(),
            SessionEvent::Tracked { mark } => mark.at,
        }
    }

    /// The clock event this entry carries, if any.
    pub fn timer_event(&self) -> Option<TimerEvent> {
        match self {
            SessionEvent::Started { at, .. } => Some(TimerEvent::Started { at: *at }),
            SessionEvent::Timer { timer } => Some(timer.clone()),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    pub event: SessionEvent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PomodoroStatus {
    Running,
    Completed,
    Voided,
}

/// A shared pomodoro, keyed in [`SessionState::pomodoros`] by the sequence
/// number of its `Started` entry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PomodoroRecord {
    pub started_at: Timestamp,
    /// Pairing frozen at start; later joins and leaves do not change it.
    pub participants: Pairing,
    pub status: PomodoroStatus,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SessionError {
    #[error("invalid timer config: {0}")]
    InvalidConfig(#[from] ConfigError),
    #[error("member {0} is already in the session")]
    DuplicateMember(MemberId),
    #[error("unknown member {0}")]
    UnknownMember(MemberId),
    #[error("the clock is not idle ({0:?})")]
    NotIdle(Phase),
    #[error("not everyone is ready; waiting for {}", join_ids(.missing))]
    NotAllReady { missing: Vec<MemberId> },
    #[error("pairs can only rotate at a break or while idle")]
    RotateDuringWork,
    #[error("{0} joined mid-pomodoro and observes until the clock is idle")]
    Observer(MemberId),
    #[error("time went backwards: {now} is before the last event at {last}")]
    TimeWentBackwards { now: Timestamp, last: Timestamp },
    #[error("{member} has no completed pomodoro to track")]
    NothingToTrack { member: MemberId },
    #[error(transparent)]
    Timer(#[from] TimerError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

fn join_ids(ids: &[MemberId]) -> String {
    ids.iter().map(MemberId::as_str).collect::<Vec<_>>().join(", ")
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("log entry #{seq} cannot be replayed: {reason}")]
pub struct SessionReplayError {
    pub seq: u64,
    pub reason: String,
}

pub type CommandResult = Result<Vec<LogEntry>, SessionError>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: SessionId,
    pub config: TimerConfig,
    pub clock: PomodoroClock,
    /// In join order; rotation seats members in this order.
    pub members: Vec<Member>,
    /// Joined while a phase was running; promoted when the clock goes idle.
    pub observers: BTreeSet<MemberId>,
    pub ready: BTreeSet<MemberId>,
    pub rotation_round: u64,
    pub pairing: Pairing,
    pub pomodoros: BTreeMap<u64, PomodoroRecord>,
    pub ledger: Ledger,
    pub today: Option<NaiveDate>,
    pub event_log: Vec<LogEntry>,
}

impl SessionState {
    pub fn create(
        session_id: impl Into<SessionId>,
        config: TimerConfig,
        creator: Member,
        now: Timestamp,
    ) -> Result<SessionState, SessionError> {
        config.validate()?;
        let session_id = session_id.into();
        let mut state = SessionState::blank(session_id.clone(), config);
        state.clock.phase_started_at = now;
        state.push(SessionEvent::Created { at: now, session_id, config, creator });
        Ok(state)
    }

    fn blank(session_id: SessionId, config: TimerConfig) -> SessionState {
        SessionState {
            session_id,
            config,
            clock: PomodoroClock::new(config),
            members: Vec::new(),
            observers: BTreeSet::new(),
            ready: BTreeSet::new(),
            rotation_round: 0,
            pairing: Pairing::default(),
            pomodoros: BTreeMap::new(),
            ledger: Ledger::default(),
            today: None,
            event_log: Vec::new(),
        }
    }

    pub fn last_seq(&self) -> u64 {
        self.event_log.last().map_or(0, |e| e.seq)
    }

    pub fn member(&self, id: &MemberId) -> Option<&Member> {
        self.members.iter().find(|m| &m.id == id)
    }

    pub fn is_active(&self, id: &MemberId) -> bool {
        self.member(id).is_some() && !self.observers.contains(id)
    }

    pub fn active_members(&self) -> Vec<MemberId> {
        self.members.iter().filter(|m| !self.observers.contains(&m.id)).map(|m| m.id.clone()).collect()
    }

    /// The running pomodoro's `Started` sequence number, if one is running.
    pub fn running_pomodoro(&self) -> Option<u64> {
        self.pomodoros.iter().rev().find(|(_, p)| p.status == PomodoroStatus::Running).map(|(seq, _)| *seq)
    }

    pub fn pomodoro_outcome(&self, seq: u64) -> PomodoroOutcome {
        match self.pomodoros.get(&seq) {
            None => PomodoroOutcome::Unknown,
            Some(p) => match p.status {
                PomodoroStatus::Running => PomodoroOutcome::Running,
                PomodoroStatus::Voided => PomodoroOutcome::Voided,
                PomodoroStatus::Completed => PomodoroOutcome::Completed { participants: p.participants.clone() },
            },
        }
    }

    fn last_at(&self) -> Timestamp {
        self.event_log.last().map_or(Timestamp::ZERO, |e| e.event.at())
    }

    fn check_now(&self, now: Timestamp) -> Result<(), SessionError> {
        let last = self.last_at();
        if now < last {
            return Err(SessionError::TimeWentBackwards { now, last });
        }
        Ok(())
    }

    fn require_active(&self, id: &MemberId) -> Result<&Member, SessionError> {
        let member = self.member(id).ok_or_else(|| SessionError::UnknownMember(id.clone()))?;
        if self.observers.contains(id) {
            return Err(SessionError::Observer(id.clone()));
        }
        Ok(member)
    }

    /// Appends `event` and updates everything except the clock, which live
    /// commands set from the timer's own transition functions.
    fn push(&mut self, event: SessionEvent) -> LogEntry {
        let entry = LogEntry { seq: self.last_seq() + 1, event };
        self.bookkeep(&entry).expect("live command produced an inapplicable event");
        self.event_log.push(entry.clone());
        entry
    }

    fn bookkeep(&mut self, entry: &LogEntry) -> Result<(), String> {
        match &entry.event {
            SessionEvent::Created { creator, .. } => {
                self.members.push(creator.clone());
                self.repair();
            }
            SessionEvent::Joined { member, .. } => {
                if self.member(&member.id).is_some() {
                    return Err(format!("{} joined twice", member.id));
                }
                self.members.push(member.clone());
                if self.clock.phase.is_active() {
                    self.observers.insert(member.id.clone());
                } else {
                    self.repair();
                }
            }
            SessionEvent::Left { member_id, .. } => {
                let before = self.members.len();
                self.members.retain(|m| &m.id != member_id);
                if self.members.len() == before {
                    return Err(format!("{member_id} left without being a member"));
                }
                self.observers.remove(member_id);
                self.ready.remove(member_id);
                self.repair();
            }
            SessionEvent::Ready { member_id, .. } => {
                self.ready.insert(member_id.clone());
            }
            SessionEvent::PairsRotated { round, .. } => {
                self.rotation_round = *round;
                self.repair();
            }
            SessionEvent::Started { at, participants, .. } => {
                self.ready.clear();
                self.pomodoros.insert(
                    entry.seq,
                    PomodoroRecord {
                        started_at: *at,
                        participants: participants.clone(),
                        status: PomodoroStatus::Running,
                    },
                );
            }
            SessionEvent::Timer { timer } => {
                let settle = |s: &mut SessionState, status| {
                    if let Some(seq) = s.running_pomodoro() {
                        s.pomodoros.get_mut(&seq).expect("running pomodoro").status = status;
                    }
                };
                match timer {
                    TimerEvent::WorkCompleted { .. } => settle(self, PomodoroStatus::Completed),
                    TimerEvent::Voided { .. } => {
                        settle(self, PomodoroStatus::Voided);
                        self.go_idle();
                    }
                    TimerEvent::BreakEnded { .. } => self.go_idle(),
                    TimerEvent::Started { .. }
                    | TimerEvent::BreakStarted { .. }
                    | TimerEvent::InterruptionLogged { .. } => {}
                }
                if timer.is_phase_transition() {
                    self.ready.clear();
                }
            }
            SessionEvent::DayStarted { date, .. } => {
                self.today = Some(*date);
            }
            SessionEvent::IterationAdded { iteration, .. } => {
                self.ledger.add_iteration(iteration.clone()).map_err(|e| e.to_string())?;
            }
            SessionEvent::StoryAdded { story, .. } => {
                self.ledger.add_story(story.clone()).map_err(|e| e.to_string())?;
            }
            SessionEvent::Estimated { story_id, units, .. } => {
                let units = i64::try_from(*units).map_err(|e| e.to_string())?;
                let advice = self.ledger.estimate_story(story_id, units).map_err(|e| e.to_string())?;
                if advice.is_rejection() {
                    return Err(format!("estimate {units} for {story_id} would have been refused"));
                }
            }
            SessionEvent::StatusChanged { story_id, status, .. } => {
                self.ledger.set_status(story_id, *status).map_err(|e| e.to_string())?;
            }
            SessionEvent::TypeDefined { name, .. } => {
                self.ledger.define_type(name).map_err(|e| e.to_string())?;
            }
            SessionEvent::Tracked { mark } => {
                let outcome = self.pomodoro_outcome(mark.pomodoro_seq);
                self.ledger.track(mark.clone(), &outcome).map_err(|e| e.to_string())?;
            }
        }
        Ok(())
    }

    fn go_idle(&mut self) {
        self.observers.clear();
        self.repair();
    }

    fn repair(&mut self) {
        self.pairing = round_robin(&self.active_members(), self.rotation_round as usize);
    }

    /// Applies every clock transition that is due at `now`.
    pub fn tick(&mut self, now: Timestamp) -> Vec<LogEntry> {
        let (clock, events) = self.clock.advance(now);
        self.clock = clock;
        events.into_iter().map(|timer| self.push(SessionEvent::Timer { timer })).collect()
    }

    /// Starts a new civil day: the daily completion counter goes back to zero.
    pub fn roll_day(&mut self, date: NaiveDate, now: Timestamp) -> CommandResult {
        self.check_now(now)?;
        self.clock = self.clock.roll_day();
        Ok(vec![self.push(SessionEvent::DayStarted { at: now, date })])
    }

    pub fn join(&mut self, member: Member, now: Timestamp) -> CommandResult {
        self.check_now(now)?;
        if self.member(&member.id).is_some() {
            return Err(SessionError::DuplicateMember(member.id));
        }
        Ok(vec![self.push(SessionEvent::Joined { at: now, member })])
    }

    /// Leaving mid-pomodoro is logged as a deflected interruption; it does not
    /// void the pomodoro for the others.
    pub fn leave(&mut self, member_id: &MemberId, now: Timestamp) -> CommandResult {
        self.check_now(now)?;
        if self.member(member_id).is_none() {
            return Err(SessionError::UnknownMember(member_id.clone()));
        }
        let mut out = Vec::new();
        if self.clock.phase == Phase::Work && self.is_active(member_id) {
            let interruption = Interruption {
                kind: InterruptionKind::Internal,
                deflected: true,
                at: now,
                note: "left the session".into(),
                initiator: member_id.clone(),
            };
            if let Ok((clock, timer)) = self.clock.interrupt(interruption) {
                self.clock = clock;
                out.push(self.push(SessionEvent::Timer { timer }));
            }
        }
        out.push(self.push(SessionEvent::Left { at: now, member_id: member_id.clone() }));
        Ok(out)
    }

    pub fn declare_ready(&mut self, member_id: &MemberId, now: Timestamp) -> CommandResult {
        self.check_now(now)?;
        self.require_active(member_id)?;
        if self.clock.phase != Phase::Idle {
            return Err(SessionError::NotIdle(self.clock.phase));
        }
        if self.ready.contains(member_id) {
            return Ok(Vec::new());
        }
        Ok(vec![self.push(SessionEvent::Ready { at: now, member_id: member_id.clone() })])
    }

    /// Members whose readiness is still missing for a shared start.
    pub fn missing_ready(&self) -> Vec<MemberId> {
        self.active_members().into_iter().filter(|m| !self.ready.contains(m)).collect()
    }

    /// Starts the shared pomodoro once everyone is ready, or right away when a
    /// coach asks for it.
    pub fn start_shared(&mut self, initiator: &MemberId, now: Timestamp) -> CommandResult {
        self.check_now(now)?;
        let role = self.require_active(initiator)?.role;
        if self.clock.phase != Phase::Idle {
            return Err(SessionError::NotIdle(self.clock.phase));
        }
        let missing = self.missing_ready();
        let coach_override = !missing.is_empty();
        if coach_override && role != Role::Coach {
            return Err(SessionError::NotAllReady { missing });
        }
        let (clock, _) = self.clock.start(now)?;
        self.clock = clock;
        Ok(vec![self.push(SessionEvent::Started {
            at: now,
            initiator: initiator.clone(),
            participants: self.pairing.clone(),
            coach_override,
        })])
    }

    /// Logs an interruption from any member. Not deflected means the shared
    /// pomodoro is void for everyone.
    pub fn interrupt(&mut self, interruption: Interruption) -> CommandResult {
        self.check_now(interruption.at)?;
        if self.member(&interruption.initiator).is_none() {
            return Err(SessionError::UnknownMember(interruption.initiator));
        }
        let (clock, timer) = self.clock.interrupt(interruption)?;
        self.clock = clock;
        Ok(vec![self.push(SessionEvent::Timer { timer })])
    }

    pub fn void_shared(&mut self, mut interruption: Interruption) -> CommandResult {
        interruption.deflected = false;
        self.interrupt(interruption)
    }

    pub fn rotate_pairs(&mut self, now: Timestamp) -> CommandResult {
        self.check_now(now)?;
        if self.clock.phase == Phase::Work {
            return Err(SessionError::RotateDuringWork);
        }
        let round = self.rotation_round + 1;
        Ok(vec![self.push(SessionEvent::PairsRotated { at: now, round })])
    }

    pub fn add_iteration(&mut self, iteration: Iteration, now: Timestamp) -> CommandResult {
        self.check_now(now)?;
        self.ledger.clone().add_iteration(iteration.clone())?;
        Ok(vec![self.push(SessionEvent::IterationAdded { at: now, iteration })])
    }

    pub fn add_story(&mut self, story: Story, now: Timestamp) -> CommandResult {
        self.check_now(now)?;
        self.ledger.clone().add_story(story.clone())?;
        Ok(vec![self.push(SessionEvent::StoryAdded { at: now, story })])
    }

    /// A refused (split-required) estimate is reported as advice and logs nothing.
    pub fn estimate(
        &mut self,
        story_id: &StoryId,
        units: i64,
        now: Timestamp,
    ) -> Result<(EstimateAdvice, Vec<LogEntry>), SessionError> {
        self.check_now(now)?;
        let advice = self.ledger.clone().estimate_story(story_id, units)?;
        if advice.is_rejection() {
            return Ok((advice, Vec::new()));
        }
        let units = units as u64;
        let entry = self.push(SessionEvent::Estimated { at: now, story_id: story_id.clone(), units, advice });
        Ok((advice, vec![entry]))
    }

    pub fn set_status(&mut self, story_id: &StoryId, status: StoryStatus, now: Timestamp) -> CommandResult {
        self.check_now(now)?;
        self.ledger.clone().set_status(story_id, status)?;
        Ok(vec![self.push(SessionEvent::StatusChanged { at: now, story_id: story_id.clone(), status })])
    }

    pub fn define_type(&mut self, name: &str, now: Timestamp) -> CommandResult {
        self.check_now(now)?;
        let canonical = self.ledger.clone().define_type(name)?;
        Ok(vec![self.push(SessionEvent::TypeDefined { at: now, name: canonical.as_str().to_owned() })])
    }

    /// Latest completed pomodoro `member` took part in.
    pub fn last_completed_for(&self, member: &MemberId) -> Option<u64> {
        self.pomodoros
            .iter()
            .rev()
            .find(|(_, p)| p.status == PomodoroStatus::Completed && p.participants.contains(member))
            .map(|(seq, _)| *seq)
    }

    /// Puts a cross on `story` for a completed pomodoro, by default the last
    /// one `member` worked in.
    pub fn track(
        &mut self,
        member: &MemberId,
        story: &StoryId,
        ptype: &str,
        effort: Effort,
        pomodoro_seq: Option<u64>,
        now: Timestamp,
    ) -> CommandResult {
        self.check_now(now)?;
        if self.member(member).is_none() {
            return Err(SessionError::UnknownMember(member.clone()));
        }
        let seq = match pomodoro_seq {
            Some(seq) => seq,
            None => self
                .last_completed_for(member)
                .ok_or_else(|| SessionError::NothingToTrack { member: member.clone() })?,
        };
        let mark = TrackMark {
            story_id: story.clone(),
            pomodoro_seq: seq,
            ptype: self.ledger.pomodoro_type(ptype)?,
            effort,
            member_id: member.clone(),
            at: now,
        };
        self.ledger.check_mark(&mark, &self.pomodoro_outcome(seq))?;
        Ok(vec![self.push(SessionEvent::Tracked { mark })])
    }

    /// Rebuilds a session from its log, driving the clock through the timer's
    /// replay path rather than the live one.
    pub fn replay(log: &[LogEntry]) -> Result<SessionState, SessionReplayError> {
        let first = log.first().ok_or(SessionReplayError { seq: 0, reason: "empty log".into() })?;
        let SessionEvent::Created { at, session_id, config, .. } = &first.event else {
            return Err(SessionReplayError { seq: first.seq, reason: "log must begin with Created".into() });
        };
        let mut state = SessionState::blank(session_id.clone(), *config);
        state.clock.phase_started_at = *at;
        for entry in log {
            state.apply_entry(entry)?;
        }
        Ok(state)
    }

    /// Applies one logged entry as received from the server. Entries must
    /// arrive in sequence; a gap is an error and calls for a fresh snapshot.
    pub fn apply_entry(&mut self, entry: &LogEntry) -> Result<(), SessionReplayError> {
        let fail = |reason: String| SessionReplayError { seq: entry.seq, reason };
        let expected = self.last_seq() + 1;
        if entry.seq != expected {
            return Err(fail(format!("expected sequence number {expected}")));
        }
        if expected > 1 && matches!(entry.event, SessionEvent::Created { .. }) {
            return Err(fail("second Created entry".into()));
        }
        if entry.event.at() < self.last_at() {
            return Err(fail("timestamp goes backwards".into()));
        }
        // the log is moved aside so the rollback copy stays small
        let log = std::mem::take(&mut self.event_log);
        let mut next = self.clone();
        let applied = (|| {
            if let Some(timer) = entry.event.timer_event() {
                next.clock = next.clock.apply(&timer).map_err(&fail)?;
            }
            if let SessionEvent::DayStarted { .. } = entry.event {
                next.clock = next.clock.roll_day();
            }
            next.bookkeep(entry).map_err(fail)
        })();
        match applied {
            Ok(()) => {
                *self = next;
                self.event_log = log;
                self.event_log.push(entry.clone());
                Ok(())
            }
            Err(e) => {
                self.event_log = log;
                Err(e)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::MS_PER_MINUTE as MIN;

    fn six() -> SessionState {
        let mut s = SessionState::create("s1", TimerConfig::default(), Member::developer("m1"), Timestamp(0)).unwrap();
        for i in 2..=6 {
            s.join(Member::developer(format!("m{i}")), Timestamp(0)).unwrap();
        }
        s
    }

    fn all_ready(s: &mut SessionState, now: u64) {
        for id in s.active_members() {
            s.declare_ready(&id, Timestamp(now)).unwrap();
        }
    }

    fn void_by(who: &str, at: u64) -> Interruption {
        Interruption {
            kind: InterruptionKind::External,
            deflected: false,
            at: Timestamp(at),
            note: "phone".into(),
            initiator: who.into(),
        }
    }

    #[test]
    fn create_validates_config() {
        let s = SessionState::create("s", TimerConfig::default(), Member::developer("a"), Timestamp(0)).unwrap();
        assert_eq!(s.clock.phase, Phase::Idle);
        assert_eq!(s.members.len(), 1);
        assert_eq!(s.event_log.len(), 1);
        let bad = TimerConfig { work_minutes: 50, ..TimerConfig::default() };
        assert_eq!(
            SessionState::create("s", bad, Member::developer("a"), Timestamp(0)),
            Err(SessionError::InvalidConfig(ConfigError::WorkOutOfRange(50)))
        );
        let edge = TimerConfig { work_minutes: 20, ..TimerConfig::default() };
        assert!(SessionState::create("s", edge, Member::developer("a"), Timestamp(0)).is_ok());
    }

    #[test]
    fn join_rules() {
        let mut s = six();
        assert_eq!(s.join(Member::developer("m3"), Timestamp(0)), Err(SessionError::DuplicateMember("m3".into())));
        assert!(s.is_active(&"m6".into()));
        all_ready(&mut s, 0);
        s.start_shared(&"m1".into(), Timestamp(0)).unwrap();
        let started_seq = s.running_pomodoro().unwrap();
        let snapshot = s.pomodoros[&started_seq].participants.clone();
        s.join(Member::developer("late"), Timestamp(MIN)).unwrap();
        assert!(!s.is_active(&"late".into()));
        assert_eq!(s.pomodoros[&started_seq].participants, snapshot);
        assert!(!s.pairing.contains(&"late".into()));
        s.tick(Timestamp(30 * MIN));
        assert!(s.is_active(&"late".into()));
        assert!(s.pairing.contains(&"late".into()));
    }

    #[test]
    fn ready_and_start_policy() {
        let mut s = six();
        assert_eq!(s.declare_ready(&"zz".into(), Timestamp(0)), Err(SessionError::UnknownMember("zz".into())));
        for i in 1..=5 {
            s.declare_ready(&format!("m{i}").into(), Timestamp(0)).unwrap();
        }
        assert_eq!(
            s.start_shared(&"m1".into(), Timestamp(0)),
            Err(SessionError::NotAllReady { missing: vec!["m6".into()] })
        );
        s.declare_ready(&"m6".into(), Timestamp(0)).unwrap();
        let out = s.start_shared(&"m1".into(), Timestamp(0)).unwrap();
        assert!(matches!(out[0].event, SessionEvent::Started { coach_override: false, .. }));
        assert!(s.ready.is_empty());
        assert_eq!(s.declare_ready(&"m1".into(), Timestamp(1)), Err(SessionError::NotIdle(Phase::Work)));
        assert_eq!(s.start_shared(&"m1".into(), Timestamp(1)), Err(SessionError::NotIdle(Phase::Work)));
    }

    #[test]
    fn coach_overrides_readiness() {
        let mut s = six();
        s.join(Member::coach("coach"), Timestamp(0)).unwrap();
        for i in 1..=5 {
            s.declare_ready(&format!("m{i}").into(), Timestamp(0)).unwrap();
        }
        let out = s.start_shared(&"coach".into(), Timestamp(0)).unwrap();
        assert!(matches!(out[0].event, SessionEvent::Started { coach_override: true, .. }));
        assert_eq!(s.clock.phase, Phase::Work);
    }

    #[test]
    fn void_is_collective() {
        let mut s = six();
        all_ready(&mut s, 0);
        s.start_shared(&"m1".into(), Timestamp(0)).unwrap();
        let seq = s.running_pomodoro().unwrap();
        s.void_shared(void_by("m4", 12 * MIN)).unwrap();
        assert_eq!(s.clock.phase, Phase::Idle);
        assert_eq!(s.pomodoros[&seq].status, PomodoroStatus::Voided);
        assert_eq!(s.clock.total_completed_today, 0);
        // second racing void finds the clock idle
        assert_eq!(
            s.void_shared(void_by("m2", 12 * MIN)),
            Err(SessionError::Timer(TimerError::InterruptOutsideWork(Phase::Idle)))
        );
        let voids = s
            .event_log
            .iter()
            .filter(|e| matches!(e.event, SessionEvent::Timer { timer: TimerEvent::Voided { .. } }))
            .count();
        assert_eq!(voids, 1);
    }

    #[test]
    fn void_during_break_is_rejected() {
        let mut s = six();
        all_ready(&mut s, 0);
        s.start_shared(&"m1".into(), Timestamp(0)).unwrap();
        s.tick(Timestamp(26 * MIN));
        assert_eq!(s.clock.phase, Phase::ShortBreak);
        assert_eq!(
            s.void_shared(void_by("m1", 26 * MIN)),
            Err(SessionError::Timer(TimerError::InterruptOutsideWork(Phase::ShortBreak)))
        );
    }

    #[test]
    fn rotation_only_outside_work() {
        let mut s = SessionState::create("s", TimerConfig::default(), Member::developer("A"), Timestamp(0)).unwrap();
        for id in ["B", "C", "D"] {
            s.join(Member::developer(id), Timestamp(0)).unwrap();
        }
        assert_eq!(s.pairing.pairs, vec![("A".into(), "B".into()), ("C".into(), "D".into())]);
        s.rotate_pairs(Timestamp(0)).unwrap();
        assert_eq!(s.pairing.pairs, vec![("A".into(), "C".into()), ("D".into(), "B".into())]);
        all_ready(&mut s, 0);
        s.start_shared(&"A".into(), Timestamp(0)).unwrap();
        assert_eq!(s.rotate_pairs(Timestamp(MIN)), Err(SessionError::RotateDuringWork));
        s.tick(Timestamp(25 * MIN));
        assert!(s.rotate_pairs(Timestamp(25 * MIN)).is_ok());
    }

    #[test]
    fn leave_during_work_is_deflected() {
        let mut s = six();
        all_ready(&mut s, 0);
        s.start_shared(&"m1".into(), Timestamp(0)).unwrap();
        let out = s.leave(&"m3".into(), Timestamp(5 * MIN)).unwrap();
        assert_eq!(out.len(), 2);
        assert!(matches!(out[0].event, SessionEvent::Timer { timer: TimerEvent::InterruptionLogged { .. } }));
        assert_eq!(s.clock.phase, Phase::Work);
        assert_eq!(s.members.len(), 5);
        assert!(s.pomodoros.values().next().unwrap().participants.contains(&"m3".into()));
    }

    #[test]
    fn tracking_follows_pomodoro_outcome() {
        let mut s = six();
        s.add_iteration(
            Iteration {
                id: "IT-1".into(),
                start: NaiveDate::from_ymd_opt(2026, 3, 2).unwrap(),
                end: NaiveDate::from_ymd_opt(2026, 3, 6).unwrap(),
            },
            Timestamp(0),
        )
        .unwrap();
        s.add_story(Story::new("S-1", "Login", "IT-1"), Timestamp(0)).unwrap();
        assert_eq!(
            s.track(&"m1".into(), &"S-1".into(), "Coding", Effort(2), None, Timestamp(0)),
            Err(SessionError::NothingToTrack { member: "m1".into() })
        );
        all_ready(&mut s, 0);
        s.start_shared(&"m1".into(), Timestamp(0)).unwrap();
        let first = s.running_pomodoro().unwrap();
        assert_eq!(
            s.track(&"m1".into(), &"S-1".into(), "Coding", Effort(2), Some(first), Timestamp(MIN)),
            Err(SessionError::Ledger(LedgerError::PomodoroNotCompleted(first)))
        );
        s.tick(Timestamp(30 * MIN));
        s.track(&"m1".into(), &"S-1".into(), "coding", Effort(2), None, Timestamp(30 * MIN)).unwrap();
        assert_eq!(s.ledger.actual(&"S-1".into()), Effort(2));

        all_ready(&mut s, 30 * MIN);
        s.start_shared(&"m1".into(), Timestamp(30 * MIN)).unwrap();
        let second = s.running_pomodoro().unwrap();
        s.void_shared(void_by("m1", 40 * MIN)).unwrap();
        assert_eq!(
            s.track(&"m1".into(), &"S-1".into(), "Coding", Effort(2), Some(second), Timestamp(40 * MIN)),
            Err(SessionError::Ledger(LedgerError::VoidedPomodoro(second)))
        );
    }

    #[test]
    fn refused_estimate_logs_nothing() {
        let mut s = six();
        s.add_iteration(
            Iteration {
                id: "IT-1".into(),
                start: NaiveDate::from_ymd_opt(2026, 3, 2).unwrap(),
                end: NaiveDate::from_ymd_opt(2026, 3, 6).unwrap(),
            },
            Timestamp(0),
        )
        .unwrap();
        s.add_story(Story::new("S-12", "Big one", "IT-1"), Timestamp(0)).unwrap();
        let before = s.last_seq();
        let (advice, entries) = s.estimate(&"S-12".into(), 16, Timestamp(0)).unwrap();
        assert_eq!(advice, EstimateAdvice::SplitRequired);
        assert!(entries.is_empty());
        assert_eq!(s.last_seq(), before);
    }

    #[test]
    fn time_cannot_go_backwards() {
        let mut s = six();
        s.rotate_pairs(Timestamp(10)).unwrap();
        assert!(matches!(s.rotate_pairs(Timestamp(5)), Err(SessionError::TimeWentBackwards { .. })));
    }

    #[test]
    fn replay_matches_live() {
        let mut s = six();
        all_ready(&mut s, 0);
        s.start_shared(&"m1".into(), Timestamp(0)).unwrap();
        s.join(Member::developer("late"), Timestamp(MIN)).unwrap();
        s.tick(Timestamp(31 * MIN));
        s.roll_day(NaiveDate::from_ymd_opt(2026, 3, 3).unwrap(), Timestamp(32 * MIN)).unwrap();
        s.rotate_pairs(Timestamp(32 * MIN)).unwrap();
        let replayed = SessionState::replay(&s.event_log).unwrap();
        assert_eq!(replayed, s);
    }

    #[test]
    fn replay_rejects_gaps() {
        let mut s = six();
        s.event_log.remove(2);
        let err = SessionState::replay(&s.event_log).unwrap_err();
        assert_eq!(err.seq, 4);
        assert!(SessionState::replay(&[]).is_err());
    }
}
