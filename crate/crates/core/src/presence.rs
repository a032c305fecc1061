//! Presence derived from the shared clock.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::ids::MemberId;
use crate::session::SessionState;
use crate::time::{ceil_minutes, Timestamp, MS_PER_MINUTE};
use crate::timer::{Phase, PomodoroClock};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresenceState {
    DoNotDisturb,
    OnBreak,
    Idle,
    Offline,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresenceStatus {
    pub member_id: MemberId,
    pub state: PresenceState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minutes_remaining: Option<u64>,
    pub message: String,
}

/// Presence for every member of a session at one instant.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresenceBoard {
    pub phase: Phase,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadline: Option<Timestamp>,
    pub statuses: Vec<PresenceStatus>,
}

pub fn render_message(state: PresenceState, minutes: Option<u64>) -> String {
    match (state, minutes) {
        (PresenceState::DoNotDisturb, Some(m)) => format!("do not disturb — {m}m left"),
        (PresenceState::OnBreak, Some(m)) => format!("on break — {m}m left"),
        (PresenceState::Offline, _) => "offline".to_owned(),
        _ => "idle".to_owned(),
    }
}

/// The clock-derived part of presence; identical for everyone in the session.
pub fn clock_presence(clock: &PomodoroClock, now: Timestamp) -> (PresenceState, Option<u64>) {
    let state = match clock.phase {
        Phase::Work => PresenceState::DoNotDisturb,
        Phase::ShortBreak | Phase::LongBreak => PresenceState::OnBreak,
        Phase::Idle => PresenceState::Idle,
    };
    let minutes = clock.remaining(now).ok().map(ceil_minutes);
    (state, minutes)
}

pub fn status_for(member: &MemberId, clock: &PomodoroClock, now: Timestamp, online: bool) -> PresenceStatus {
    let (state, minutes) = if online { clock_presence(clock, now) } else { (PresenceState::Offline, None) };
    PresenceStatus {
        member_id: member.clone(),
        state,
        minutes_remaining: minutes,
        message: render_message(state, minutes),
    }
}

/// Presence for all members. `online` lists members with a live connection;
/// `None` treats everyone as online.
pub fn board(state: &SessionState, now: Timestamp, online: Option<&BTreeSet<MemberId>>) -> PresenceBoard {
    let statuses = state
        .members
        .iter()
        .map(|m| status_for(&m.id, &state.clock, now, online.is_none_or(|o| o.contains(&m.id))))
        .collect();
    PresenceBoard { phase: state.clock.phase, deadline: state.clock.phase_deadline, statuses }
}

/// When the displayed minute count next changes, if a phase is running.
/// The count steps down as the remaining time crosses each whole minute.
pub fn next_minute_change(clock: &PomodoroClock, now: Timestamp) -> Option<Timestamp> {
    let deadline = clock.phase_deadline?;
    let left = now.until(deadline);
    if left == 0 {
        return None;
    }
    let minutes = ceil_minutes(left);
    Some(deadline - (minutes - 1) * MS_PER_MINUTE)
}

/// Decides when a new presence message is due: on every phase change and
/// whenever the minute count moves, at most once per minute.
#[derive(Clone, Debug, Default)]
pub struct PresenceFeed {
    last: Option<PresenceBoard>,
}

impl PresenceFeed {
    pub fn poll(
        &mut self,
        state: &SessionState,
        now: Timestamp,
        online: Option<&BTreeSet<MemberId>>,
    ) -> Option<PresenceBoard> {
        let current = board(state, now, online);
        if self.last.as_ref() == Some(&current) {
            return None;
        }
        self.last = Some(current.clone());
        Some(current)
    }

    pub fn latest(&self) -> Option<&PresenceBoard> {
        self.last.as_ref()
    }
}
