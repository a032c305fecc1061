//! The pomodoro clock: a pure state machine driven by `(state, event, timestamp)`.
//!
//! Transitions:
//!
//! ```text
//! Idle --start--> Work --deadline--> ShortBreak | LongBreak --deadline--> Idle
//!                  |
//!                  +--non-deflected interruption (void)--> Idle
//! ```
//!
//! A voided pomodoro never commenced: neither counter moves and no effort is
//! credited. Timed transitions are stamped with the deadline that caused them,
//! never with the time at which someone happened to poll.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::MemberId;
use crate::time::{Timestamp, MS_PER_MINUTE};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("work duration must be between 20 and 45 minutes, got {0}")]
    WorkOutOfRange(u32),
    #[error("short break must be at least 1 minute, got {0}")]
    ShortBreakTooShort(u32),
    #[error("long break ({long}m) must not be shorter than the short break ({short}m)")]
    LongBreakShorterThanShort { short: u32, long: u32 },
    #[error("a long break must come every 2 or more pomodoros, got {0}")]
    LongBreakEveryTooSmall(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimerConfig {
    pub work_minutes: u32,
    pub short_break_minutes: u32,
    pub long_break_minutes: u32,
    pub long_break_every: u32,
}

impl Default for TimerConfig {
    fn default() -> Self {
        TimerConfig { work_minutes: 25, short_break_minutes: 5, long_break_minutes: 15, long_break_every: 4 }
    }
}

impl TimerConfig {
    pub const MIN_WORK_MINUTES: u32 = 20;
    pub const MAX_WORK_MINUTES: u32 = 45;

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(Self::MIN_WORK_MINUTES..=Self::MAX_WORK_MINUTES).contains(&self.work_minutes) {
            return Err(ConfigError::WorkOutOfRange(self.work_minutes));
        }
        if self.short_break_minutes < 1 {
            return Err(ConfigError::ShortBreakTooShort(self.short_break_minutes));
        }
        if self.long_break_minutes < self.short_break_minutes {
            return Err(ConfigError::LongBreakShorterThanShort {
                short: self.short_break_minutes,
                long: self.long_break_minutes,
            });
        }
        if self.long_break_every < 2 {
            return Err(ConfigError::LongBreakEveryTooSmall(self.long_break_every));
        }
        Ok(())
    }

    /// Length of `phase` in milliseconds; `None` for [`Phase::Idle`].
    pub fn phase_duration_ms(&self, phase: Phase) -> Option<u64> {
        let minutes = match phase {
            Phase::Idle => return None,
            Phase::Work => self.work_minutes,
            Phase::ShortBreak => self.short_break_minutes,
            Phase::LongBreak => self.long_break_minutes,
        };
        Some(u64::from(minutes) * MS_PER_MINUTE)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    #[default]
    Idle,
    Work,
    ShortBreak,
    LongBreak,
}

impl Phase {
    pub fn is_break(self) -> bool {
        matches!(self, Phase::ShortBreak | Phase::LongBreak)
    }

    pub fn is_active(self) -> bool {
        self != Phase::Idle
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BreakKind {
    Short,
    Long,
}

impl BreakKind {
    pub fn phase(self) -> Phase {
        match self {
            BreakKind::Short => Phase::ShortBreak,
            BreakKind::Long => Phase::LongBreak,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterruptionKind {
    /// Triggered by the participant.
    Internal,
    /// Triggered by someone or something else.
    External,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interruption {
    pub kind: InterruptionKind,
    pub deflected: bool,
    pub at: Timestamp,
    pub note: String,
    pub initiator: MemberId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TimerEvent {
    Started { at: Timestamp },
    WorkCompleted { at: Timestamp },
    BreakStarted { at: Timestamp, kind: BreakKind },
    BreakEnded { at: Timestamp },
    Voided { interruption: Interruption },
    InterruptionLogged { interruption: Interruption },
}

impl TimerEvent {
    pub fn at(&self) -> Timestamp {
        match self {
            TimerEvent::Started { at }
            | TimerEvent::WorkCompleted { at }
            | TimerEvent::BreakStarted { at, .. }
            | TimerEvent::BreakEnded { at } => *at,
            TimerEvent::Voided { interruption } | TimerEvent::InterruptionLogged { interruption } => interruption.at,
        }
    }

    /// True for events that move the clock to a different phase.
    pub fn is_phase_transition(&self) -> bool {
        !matches!(self, TimerEvent::InterruptionLogged { .. })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TimerError {
    #[error("a pomodoro cannot start while the clock is in {0:?}")]
    StartWhileActive(Phase),
    #[error("interruptions can only be logged during work, clock is in {0:?}")]
    InterruptOutsideWork(Phase),
    #[error("the clock is idle")]
    NoActivePhase,
    #[error("time went backwards: {now} is before {last}")]
    TimeWentBackwards { now: Timestamp, last: Timestamp },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("event #{index} ({event:?}) cannot be applied: {reason}")]
pub struct InvalidHistory {
    pub index: usize,
    pub event: TimerEvent,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PomodoroClock {
    pub config: TimerConfig,
    pub phase: Phase,
    /// When the current phase began; for `Idle`, when the clock went idle.
    pub phase_started_at: Timestamp,
    /// Absent exactly when the clock is idle.
    pub phase_deadline: Option<Timestamp>,
    /// Pomodoros completed since the last long break.
    pub consecutive_completed: u32,
    pub total_completed_today: u32,
}

impl PomodoroClock {
    pub fn new(config: TimerConfig) -> Self {
        PomodoroClock {
            config,
            phase: Phase::Idle,
            phase_started_at: Timestamp::ZERO,
            phase_deadline: None,
            consecutive_completed: 0,
            total_completed_today: 0,
        }
    }

    fn enter(&mut self, phase: Phase, at: Timestamp) {
        self.phase = phase;
        self.phase_started_at = at;
        self.phase_deadline = self.config.phase_duration_ms(phase).map(|d| at + d);
    }

    fn check_monotonic(&self, now: Timestamp) -> Result<(), TimerError> {
        if now < self.phase_started_at {
            return Err(TimerError::TimeWentBackwards { now, last: self.phase_started_at });
        }
        Ok(())
    }

    pub fn start(&self, now: Timestamp) -> Result<(PomodoroClock, TimerEvent), TimerError> {
        if self.phase != Phase::Idle {
            return Err(TimerError::StartWhileActive(self.phase));
        }
        self.check_monotonic(now)?;
        let mut next = self.clone();
        next.enter(Phase::Work, now);
        Ok((next, TimerEvent::Started { at: now }))
    }

    /// Applies every transition whose deadline is at or before `now`.
    pub fn advance(&self, now: Timestamp) -> (PomodoroClock, Vec<TimerEvent>) {
        let mut next = self.clone();
        let mut events = Vec::new();
        while let Some(deadline) = next.phase_deadline.filter(|d| *d <= now) {
            match next.phase {
                Phase::Work => {
                    next.consecutive_completed += 1;
                    next.total_completed_today += 1;
                    let kind = if next.consecutive_completed >= next.config.long_break_every {
                        next.consecutive_completed = 0;
                        BreakKind::Long
                    } else {
                        BreakKind::Short
                    };
                    next.enter(kind.phase(), deadline);
                    events.push(TimerEvent::WorkCompleted { at: deadline });
                    events.push(TimerEvent::BreakStarted { at: deadline, kind });
                }
                Phase::ShortBreak | Phase::LongBreak => {
                    next.enter(Phase::Idle, deadline);
                    events.push(TimerEvent::BreakEnded { at: deadline });
                }
                Phase::Idle => unreachable!("idle clock has no deadline"),
            }
        }
        (next, events)
    }

    /// Logs an interruption against the running pomodoro. A deflected one is
    /// recorded and work goes on; anything else voids the pomodoro.
    pub fn interrupt(&self, interruption: Interruption) -> Result<(PomodoroClock, TimerEvent), TimerError> {
        self.check_interruption(&interruption)?;
        if interruption.deflected {
            return Ok((self.clone(), TimerEvent::InterruptionLogged { interruption }));
        }
        let mut next = self.clone();
        next.enter(Phase::Idle, interruption.at);
        Ok((next, TimerEvent::Voided { interruption }))
    }

    fn check_interruption(&self, interruption: &Interruption) -> Result<(), TimerError> {
        match (self.phase, self.phase_deadline) {
            (Phase::Work, Some(deadline)) if interruption.at < deadline => self.check_monotonic(interruption.at),
            _ => Err(TimerError::InterruptOutsideWork(self.phase)),
        }
    }

    /// Milliseconds left in the current phase, clamped at zero.
    pub fn remaining(&self, now: Timestamp) -> Result<u64, TimerError> {
        self.phase_deadline.map(|d| now.until(d)).ok_or(TimerError::NoActivePhase)
    }

    /// Zeroes the daily counter; the cadence counter is untouched.
    pub fn roll_day(&self) -> PomodoroClock {
        PomodoroClock { total_completed_today: 0, ..self.clone() }
    }

    /// Applies one recorded event, checking that it could have been produced
    /// by the live machine from this state.
    pub fn apply(&self, event: &TimerEvent) -> Result<PomodoroClock, String> {
        let at = event.at();
        if at < self.phase_started_at {
            return Err(format!("timestamp {at} precedes phase start {}", self.phase_started_at));
        }
        let mut next = self.clone();
        match event {
            TimerEvent::Started { .. } => {
                if self.phase != Phase::Idle {
                    return Err(format!("start while in {:?}", self.phase));
                }
                next.enter(Phase::Work, at);
            }
            TimerEvent::WorkCompleted { .. } => {
                if self.phase != Phase::Work || self.phase_deadline != Some(at) {
                    return Err(format!(
                        "work completion at {at} does not match {:?} deadline {:?}",
                        self.phase, self.phase_deadline
                    ));
                }
                next.consecutive_completed += 1;
                next.total_completed_today += 1;
                let kind = if next.consecutive_completed >= next.config.long_break_every {
                    next.consecutive_completed = 0;
                    BreakKind::Long
                } else {
                    BreakKind::Short
                };
                next.enter(kind.phase(), at);
            }
            TimerEvent::BreakStarted { kind, .. } => {
                if self.phase != kind.phase() || self.phase_started_at != at {
                    return Err(format!("{kind:?} break does not follow a completion at {at}"));
                }
            }
            TimerEvent::BreakEnded { .. } => {
                if !self.phase.is_break() || self.phase_deadline != Some(at) {
                    return Err(format!(
                        "break end at {at} does not match {:?} deadline {:?}",
                        self.phase, self.phase_deadline
                    ));
                }
                next.enter(Phase::Idle, at);
            }
            TimerEvent::Voided { interruption } | TimerEvent::InterruptionLogged { interruption } => {
                let voids = matches!(event, TimerEvent::Voided { .. });
                if interruption.deflected == voids {
                    return Err("deflection flag disagrees with the event kind".into());
                }
                self.check_interruption(interruption).map_err(|e| e.to_string())?;
                if voids {
                    next.enter(Phase::Idle, at);
                }
            }
        }
        Ok(next)
    }
}

/// Rebuilds a clock from its recorded history.
pub fn replay(events: &[TimerEvent], config: TimerConfig) -> Result<PomodoroClock, InvalidHistory> {
    events.iter().enumerate().try_fold(PomodoroClock::new(config), |clock, (index, event)| {
        clock.apply(event).map_err(|reason| InvalidHistory { index, event: event.clone(), reason })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIN: u64 = MS_PER_MINUTE;

    fn who() -> MemberId {
        MemberId::new("m1")
    }

    fn interruption(at: u64, deflected: bool) -> Interruption {
        Interruption {
            kind: InterruptionKind::External,
            deflected,
            at: Timestamp(at),
            note: String::new(),
            initiator: who(),
        }
    }

    fn clock() -> PomodoroClock {
        PomodoroClock::new(TimerConfig::default())
    }

    #[test]
    fn config_bounds() {
        assert!(TimerConfig::default().validate().is_ok());
        let with_work = |w| TimerConfig { work_minutes: w, ..TimerConfig::default() };
        assert!(with_work(20).validate().is_ok());
        assert!(with_work(45).validate().is_ok());
        assert_eq!(with_work(19).validate(), Err(ConfigError::WorkOutOfRange(19)));
        assert_eq!(with_work(50).validate(), Err(ConfigError::WorkOutOfRange(50)));
        let bad_long = TimerConfig { long_break_minutes: 4, ..TimerConfig::default() };
        assert!(matches!(bad_long.validate(), Err(ConfigError::LongBreakShorterThanShort { .. })));
        let bad_every = TimerConfig { long_break_every: 1, ..TimerConfig::default() };
        assert_eq!(bad_every.validate(), Err(ConfigError::LongBreakEveryTooSmall(1)));
        let bad_short = TimerConfig { short_break_minutes: 0, ..TimerConfig::default() };
        assert_eq!(bad_short.validate(), Err(ConfigError::ShortBreakTooShort(0)));
    }

    #[test]
    fn start_sets_deadline() {
        let (c, ev) = clock().start(Timestamp(0)).unwrap();
        assert_eq!(c.phase, Phase::Work);
        assert_eq!(c.phase_deadline, Some(Timestamp(1_500_000)));
        assert_eq!(ev, TimerEvent::Started { at: Timestamp(0) });
    }

    #[test]
    fn start_during_work_is_rejected() {
        let (c, _) = clock().start(Timestamp(0)).unwrap();
        assert_eq!(c.start(Timestamp(10)), Err(TimerError::StartWhileActive(Phase::Work)));
    }

    #[test]
    fn start_after_void_keeps_cadence() {
        let (c, _) = clock().start(Timestamp(0)).unwrap();
        let (c, _) = c.advance(Timestamp(30 * MIN));
        let (c, _) = c.start(Timestamp(30 * MIN)).unwrap();
        let (c, ev) = c.interrupt(interruption(40 * MIN, false)).unwrap();
        assert!(matches!(ev, TimerEvent::Voided { .. }));
        let (c, _) = c.start(Timestamp(41 * MIN)).unwrap();
        assert_eq!(c.phase, Phase::Work);
        assert_eq!(c.consecutive_completed, 1);
        assert_eq!(c.total_completed_today, 1);
    }

    #[test]
    fn completion_enters_short_break() {
        let (c, _) = clock().start(Timestamp(0)).unwrap();
        let (c, events) = c.advance(Timestamp(25 * MIN));
        assert_eq!(
            events,
            vec![
                TimerEvent::WorkCompleted { at: Timestamp(25 * MIN) },
                TimerEvent::BreakStarted { at: Timestamp(25 * MIN), kind: BreakKind::Short },
            ]
        );
        assert_eq!(c.phase, Phase::ShortBreak);
        assert_eq!(c.phase_deadline, Some(Timestamp(30 * MIN)));
        assert_eq!(c.consecutive_completed, 1);
    }

    #[test]
    fn fourth_completion_enters_long_break() {
        let mut c = PomodoroClock { consecutive_completed: 3, ..clock() };
        c = c.start(Timestamp(0)).unwrap().0;
        let (c, events) = c.advance(Timestamp(25 * MIN));
        assert_eq!(c.phase, Phase::LongBreak);
        assert_eq!(c.phase_deadline, Some(Timestamp(40 * MIN)));
        assert_eq!(c.consecutive_completed, 0);
        assert!(events.contains(&TimerEvent::BreakStarted { at: Timestamp(25 * MIN), kind: BreakKind::Long }));
    }

    #[test]
    fn advance_before_deadline_is_noop() {
        let (c, _) = clock().start(Timestamp(0)).unwrap();
        let (same, events) = c.advance(Timestamp(25 * MIN - 1));
        assert!(events.is_empty());
        assert_eq!(same, c);
    }

    #[test]
    fn late_poll_runs_through_break_to_idle() {
        let (c, _) = clock().start(Timestamp(0)).unwrap();
        let (c, events) = c.advance(Timestamp(2 * 60 * MIN));
        assert_eq!(events.len(), 3);
        assert_eq!(events[2], TimerEvent::BreakEnded { at: Timestamp(30 * MIN) });
        assert_eq!(c.phase, Phase::Idle);
        assert_eq!(c.phase_started_at, Timestamp(30 * MIN));
        assert_eq!(c.phase_deadline, None);
    }

    #[test]
    fn advance_is_idempotent_at_same_instant() {
        let (c, _) = clock().start(Timestamp(0)).unwrap();
        let (once, _) = c.advance(Timestamp(26 * MIN));
        let (twice, events) = once.advance(Timestamp(26 * MIN));
        assert!(events.is_empty());
        assert_eq!(once, twice);
    }

    #[test]
    fn deflected_interruption_keeps_working() {
        let (c, _) = clock().start(Timestamp(0)).unwrap();
        let (after, ev) = c.interrupt(interruption(10 * MIN, true)).unwrap();
        assert!(matches!(ev, TimerEvent::InterruptionLogged { .. }));
        assert_eq!(after, c);
        // several deflected interruptions are fine
        let (after, _) = after.interrupt(interruption(11 * MIN, true)).unwrap();
        assert_eq!(after.phase_deadline, Some(Timestamp(25 * MIN)));
    }

    #[test]
    fn void_at_minute_24_credits_nothing() {
        let (c, _) = clock().start(Timestamp(0)).unwrap();
        let (c, _) = c.interrupt(interruption(24 * MIN, false)).unwrap();
        assert_eq!(c.phase, Phase::Idle);
        assert_eq!(c.total_completed_today, 0);
        assert_eq!(c.consecutive_completed, 0);
        let (c, events) = c.advance(Timestamp(60 * MIN));
        assert!(events.is_empty());
        assert_eq!(c.total_completed_today, 0);
    }

    #[test]
    fn interruption_outside_work() {
        assert_eq!(clock().interrupt(interruption(0, false)), Err(TimerError::InterruptOutsideWork(Phase::Idle)));
        let (c, _) = clock().start(Timestamp(0)).unwrap();
        // at the deadline the pomodoro is already complete
        assert_eq!(c.interrupt(interruption(25 * MIN, false)), Err(TimerError::InterruptOutsideWork(Phase::Work)));
    }

    #[test]
    fn remaining_clamps() {
        assert_eq!(clock().remaining(Timestamp(0)), Err(TimerError::NoActivePhase));
        let (c, _) = clock().start(Timestamp(0)).unwrap();
        assert_eq!(c.remaining(Timestamp(10 * MIN)), Ok(15 * MIN));
        assert_eq!(c.remaining(Timestamp(25 * MIN)), Ok(0));
        assert_eq!(c.remaining(Timestamp(90 * MIN)), Ok(0));
    }

    #[test]
    fn replay_empty_and_single_cycle() {
        assert_eq!(replay(&[], TimerConfig::default()).unwrap(), clock());
        let (c, start) = clock().start(Timestamp(0)).unwrap();
        let (live, mut events) = c.advance(Timestamp(25 * MIN));
        events.insert(0, start);
        let replayed = replay(&events, TimerConfig::default()).unwrap();
        assert_eq!(replayed, live);
        assert_eq!(replayed.consecutive_completed, 1);
    }

    #[test]
    fn replay_names_first_bad_event() {
        let events = vec![TimerEvent::Started { at: Timestamp(0) }, TimerEvent::Started { at: Timestamp(5) }];
        let err = replay(&events, TimerConfig::default()).unwrap_err();
        assert_eq!(err.index, 1);
        let early = vec![TimerEvent::Started { at: Timestamp(0) }, TimerEvent::WorkCompleted { at: Timestamp(10) }];
        assert_eq!(replay(&early, TimerConfig::default()).unwrap_err().index, 1);
    }
}
