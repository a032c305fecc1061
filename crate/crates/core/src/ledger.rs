//! Pomodoros as the unit of effort.
//!
//! All effort is an integer count of half-pomodoros ([`Effort`]): a pair
//! working one pomodoro is 2 units, one person on solo work for one slot is 1.
//! Division by two only happens when rendering.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{IterationId, MemberId, StoryId};
use crate::pairing::Pairing;
use crate::time::Timestamp;

/// Effort in half-pomodoro units.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Effort(pub u64);

impl Effort {
    pub const HALF: Effort = Effort(1);
    pub const PAIR_POMODORO: Effort = Effort(2);

    pub fn units(self) -> u64 {
        self.0
    }

    pub fn from_pomodoros(pomodoros: u64) -> Effort {
        Effort(pomodoros * 2)
    }

    pub fn saturating_sub(self, other: Effort) -> Effort {
        Effort(self.0.saturating_sub(other.0))
    }

    pub fn as_pomodoros(self) -> f64 {
        self.0 as f64 / 2.0
    }
}

/// Renders as pomodoros with one fractional digit: 5 units is `2.5`.
impl fmt::Display for Effort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.0 / 2, if self.0 % 2 == 1 { 5 } else { 0 })
    }
}

impl Add for Effort {
    type Output = Effort;

    fn add(self, rhs: Effort) -> Effort {
        Effort(self.0 + rhs.0)
    }
}

impl AddAssign for Effort {
    fn add_assign(&mut self, rhs: Effort) {
        self.0 += rhs.0;
    }
}

impl std::iter::Sum for Effort {
    fn sum<I: Iterator<Item = Effort>>(iter: I) -> Effort {
        iter.fold(Effort::default(), Add::add)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TeamCapacity {
    pub pairs: u64,
    pub pomodoros_per_pair_per_day: u64,
    /// Pair-pomodoros per day.
    pub total: u64,
}

pub fn capacity(pairs: u64, per_pair_per_day: u64) -> TeamCapacity {
    TeamCapacity { pairs, pomodoros_per_pair_per_day: per_pair_per_day, total: pairs * per_pair_per_day }
}

/// Work that is not done in pairs is priced at half a pomodoro per person per slot.
pub fn meeting_effort(people: u64, slots: u64) -> Effort {
    Effort(people * slots)
}

/// Activity category of a tracked pomodoro. Names compare case-insensitively
/// through [`PomodoroTypes`]; the stored spelling is the registered one.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PomodoroType(String);

impl PomodoroType {
    /// An unresolved name; [`Ledger::track`] canonicalizes it against the registry.
    pub fn named(name: impl Into<String>) -> Self {
        PomodoroType(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PomodoroType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub const SEEDED_TYPES: [&str; 6] = ["Analyzing", "Coding", "Refactoring", "Testing", "Meeting", "Spike"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PomodoroTypes(Vec<PomodoroType>);

impl Default for PomodoroTypes {
    fn default() -> Self {
        PomodoroTypes(SEEDED_TYPES.iter().map(|s| PomodoroType(s.to_string())).collect())
    }
}

impl PomodoroTypes {
    pub fn resolve(&self, name: &str) -> Option<&PomodoroType> {
        self.0.iter().find(|t| t.0.eq_ignore_ascii_case(name.trim()))
    }

    pub fn define(&mut self, name: &str) -> Result<PomodoroType, LedgerError> {
        let name = name.trim();
        if name.is_empty() {
            return Err(LedgerError::UnknownPomodoroType(String::new()));
        }
        if let Some(existing) = self.resolve(name) {
            return Err(LedgerError::DuplicateType(existing.0.clone()));
        }
        let t = PomodoroType(name.to_owned());
        self.0.push(t.clone());
        Ok(t)
    }

    pub fn iter(&self) -> impl Iterator<Item = &PomodoroType> {
        self.0.iter()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoryStatus {
    #[default]
    Planned,
    InProgress,
    Done,
}

impl StoryStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            StoryStatus::Planned => "Planned",
            StoryStatus::InProgress => "InProgress",
            StoryStatus::Done => "Done",
        }
    }
}

impl std::str::FromStr for StoryStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['_', '-', ' '], "").as_str() {
            "planned" => Ok(StoryStatus::Planned),
            "inprogress" => Ok(StoryStatus::InProgress),
            "done" => Ok(StoryStatus::Done),
            _ => Err(format!("unknown story status `{s}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Story {
    pub id: StoryId,
    pub title: String,
    pub estimate: Effort,
    /// False for exploration done without time pressure; such stories carry
    /// no estimate and accept no marks.
    pub tracked: bool,
    pub status: StoryStatus,
    pub iteration_id: IterationId,
    /// Free text only; never used in arithmetic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub legacy_points: Option<String>,
}

impl Story {
    pub fn new(id: impl Into<StoryId>, title: impl Into<String>, iteration: impl Into<IterationId>) -> Self {
        Story {
            id: id.into(),
            title: title.into(),
            estimate: Effort::default(),
            tracked: true,
            status: StoryStatus::Planned,
            iteration_id: iteration.into(),
            legacy_points: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Iteration {
    pub id: IterationId,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

/// One cross on the back of a story card.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackMark {
    pub story_id: StoryId,
    /// Session log sequence number of the pomodoro's `Started` entry.
    pub pomodoro_seq: u64,
    pub ptype: PomodoroType,
    pub effort: Effort,
    /// Who recorded it; identifies the pair (or solo member) the mark is for.
    pub member_id: MemberId,
    pub at: Timestamp,
}

/// What the session log says about the pomodoro a mark points at.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PomodoroOutcome {
    Completed { participants: Pairing },
    Voided,
    Running,
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimationRules {
    /// Estimates above this many half-units get a split suggestion.
    pub split_suggested_above: u64,
    /// Estimates above this many half-units are refused.
    pub split_required_above: u64,
}

impl Default for EstimationRules {
    fn default() -> Self {
        // 5 and 7 pomodoros
        EstimationRules { split_suggested_above: 10, split_required_above: 14 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateAdvice {
    Ok,
    CombineSuggested,
    SplitSuggested,
    /// The estimate was refused and not stored.
    SplitRequired,
}

impl EstimateAdvice {
    pub fn is_rejection(self) -> bool {
        self == EstimateAdvice::SplitRequired
    }
}

impl EstimationRules {
    pub fn advise(&self, units: u64) -> EstimateAdvice {
        if units > self.split_required_above {
            EstimateAdvice::SplitRequired
        } else if units > self.split_suggested_above {
            EstimateAdvice::SplitSuggested
        } else if units > 0 && units < 2 {
            EstimateAdvice::CombineSuggested
        } else {
            EstimateAdvice::Ok
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error("unknown story {0}")]
    UnknownStory(StoryId),
    #[error("story {0} is untracked exploration")]
    UntrackedStory(StoryId),
    #[error("estimate must not be negative, got {0}")]
    NegativeEstimate(i64),
    #[error("pomodoro #{0} was voided and earns no credit")]
    VoidedPomodoro(u64),
    #[error("pomodoro #{0} has not completed yet")]
    PomodoroNotCompleted(u64),
    #[error("no pomodoro started at log entry #{0}")]
    UnknownPomodoro(u64),
    #[error("{member} did not take part in pomodoro #{seq}")]
    NotAParticipant { member: MemberId, seq: u64 },
    #[error("pomodoro #{seq} is already tracked for {member}'s pair, on story {story}")]
    AlreadyTracked { seq: u64, member: MemberId, story: StoryId },
    #[error("mark effort must be 1 (half) or 2 (pair) units, got {0}")]
    InvalidEffort(u64),
    #[error("unknown pomodoro type `{0}`")]
    UnknownPomodoroType(String),
    #[error("pomodoro type `{0}` already exists")]
    DuplicateType(String),
    #[error("unknown iteration {0}")]
    UnknownIteration(IterationId),
    #[error("iteration {0} already exists")]
    DuplicateIteration(IterationId),
    #[error("iteration {id} ends ({end}) before it starts ({start})")]
    InvalidIterationDates { id: IterationId, start: NaiveDate, end: NaiveDate },
    #[error("story {0} already exists")]
    DuplicateStory(StoryId),
    #[error("untracked story {0} cannot carry an estimate")]
    EstimateOnUntracked(StoryId),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationBalance {
    pub total_estimate: Effort,
    pub total_actual: Effort,
    pub remaining: Effort,
}

/// Half-open time window `[from, to)`; an absent bound is unbounded.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Period {
    pub from: Option<Timestamp>,
    pub to: Option<Timestamp>,
}

impl Period {
    pub fn all() -> Period {
        Period::default()
    }

    pub fn between(from: Timestamp, to: Timestamp) -> Period {
        Period { from: Some(from), to: Some(to) }
    }

    pub fn contains(&self, t: Timestamp) -> bool {
        self.from.is_none_or(|f| t >= f) && self.to.is_none_or(|e| t < e)
    }
}

/// `numerator / denominator` between two types of a breakdown, e.g. coding
/// over refactoring. `None` when the denominator type has no effort.
pub fn type_ratio(breakdown: &BTreeMap<PomodoroType, Effort>, numerator: &str, denominator: &str) -> Option<f64> {
    let get = |name: &str| {
        breakdown.iter().find(|(t, _)| t.as_str().eq_ignore_ascii_case(name)).map_or(0, |(_, e)| e.units())
    };
    let den = get(denominator);
    (den > 0).then(|| get(numerator) as f64 / den as f64)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ledger {
    pub rules: EstimationRules,
    pub types: PomodoroTypes,
    pub iterations: Vec<Iteration>,
    pub stories: Vec<Story>,
    pub marks: Vec<TrackMark>,
}

impl Ledger {
    pub fn iteration(&self, id: &IterationId) -> Option<&Iteration> {
        self.iterations.iter().find(|i| &i.id == id)
    }

    pub fn story(&self, id: &StoryId) -> Option<&Story> {
        self.stories.iter().find(|s| &s.id == id)
    }

    fn story_mut(&mut self, id: &StoryId) -> Result<&mut Story, LedgerError> {
        self.stories.iter_mut().find(|s| &s.id == id).ok_or_else(|| LedgerError::UnknownStory(id.clone()))
    }

    pub fn add_iteration(&mut self, iteration: Iteration) -> Result<(), LedgerError> {
        if self.iteration(&iteration.id).is_some() {
            return Err(LedgerError::DuplicateIteration(iteration.id));
        }
        if iteration.end < iteration.start {
            return Err(LedgerError::InvalidIterationDates {
                id: iteration.id,
                start: iteration.start,
                end: iteration.end,
            });
        }
        self.iterations.push(iteration);
        Ok(())
    }

    pub fn add_story(&mut self, story: Story) -> Result<(), LedgerError> {
        if self.story(&story.id).is_some() {
            return Err(LedgerError::DuplicateStory(story.id));
        }
        if self.iteration(&story.iteration_id).is_none() {
            return Err(LedgerError::UnknownIteration(story.iteration_id));
        }
        if !story.tracked && story.estimate != Effort::default() {
            return Err(LedgerError::EstimateOnUntracked(story.id));
        }
        self.stories.push(story);
        Ok(())
    }

    /// Stores an estimate unless it is too large to be a single task.
    pub fn estimate_story(&mut self, id: &StoryId, units: i64) -> Result<EstimateAdvice, LedgerError> {
        let rules = self.rules;
        let story = self.story_mut(id)?;
        if !story.tracked {
            return Err(LedgerError::UntrackedStory(id.clone()));
        }
        let units = u64::try_from(units).map_err(|_| LedgerError::NegativeEstimate(units))?;
        let advice = rules.advise(units);
        if !advice.is_rejection() {
            story.estimate = Effort(units);
        }
        Ok(advice)
    }

    pub fn set_status(&mut self, id: &StoryId, status: StoryStatus) -> Result<(), LedgerError> {
        self.story_mut(id)?.status = status;
        Ok(())
    }

    pub fn define_type(&mut self, name: &str) -> Result<PomodoroType, LedgerError> {
        self.types.define(name)
    }

    /// Resolves `name` against the registered types, case-insensitively.
    pub fn pomodoro_type(&self, name: &str) -> Result<PomodoroType, LedgerError> {
        self.types.resolve(name).cloned().ok_or_else(|| LedgerError::UnknownPomodoroType(name.to_owned()))
    }

    /// Validates a mark against the story and the pomodoro it references,
    /// without recording it.
    pub fn check_mark(&self, mark: &TrackMark, outcome: &PomodoroOutcome) -> Result<(), LedgerError> {
        let story = self.story(&mark.story_id).ok_or_else(|| LedgerError::UnknownStory(mark.story_id.clone()))?;
        if !story.tracked {
            return Err(LedgerError::UntrackedStory(story.id.clone()));
        }
        if !(1..=2).contains(&mark.effort.units()) {
            return Err(LedgerError::InvalidEffort(mark.effort.units()));
        }
        if self.types.resolve(mark.ptype.as_str()).is_none() {
            return Err(LedgerError::UnknownPomodoroType(mark.ptype.0.clone()));
        }
        let seq = mark.pomodoro_seq;
        let participants = match outcome {
            PomodoroOutcome::Completed { participants } => participants,
            PomodoroOutcome::Voided => return Err(LedgerError::VoidedPomodoro(seq)),
            PomodoroOutcome::Running => return Err(LedgerError::PomodoroNotCompleted(seq)),
            PomodoroOutcome::Unknown => return Err(LedgerError::UnknownPomodoro(seq)),
        };
        let unit = participants
            .unit_of(&mark.member_id)
            .ok_or_else(|| LedgerError::NotAParticipant { member: mark.member_id.clone(), seq })?;
        if let Some(prior) =
            self.marks.iter().find(|m| m.pomodoro_seq == seq && participants.unit_of(&m.member_id) == Some(unit))
        {
            return Err(LedgerError::AlreadyTracked {
                seq,
                member: mark.member_id.clone(),
                story: prior.story_id.clone(),
            });
        }
        Ok(())
    }

    pub fn track(&mut self, mut mark: TrackMark, outcome: &PomodoroOutcome) -> Result<(), LedgerError> {
        self.check_mark(&mark, outcome)?;
        mark.ptype = self.pomodoro_type(mark.ptype.as_str())?;
        let story = self.story_mut(&mark.story_id)?;
        if story.status == StoryStatus::Planned {
            story.status = StoryStatus::InProgress;
        }
        self.marks.push(mark);
        Ok(())
    }

    pub fn actual(&self, story: &StoryId) -> Effort {
        self.marks.iter().filter(|m| &m.story_id == story).map(|m| m.effort).sum()
    }

    pub fn stories_in<'a>(&'a self, iteration: &'a IterationId) -> impl Iterator<Item = &'a Story> + 'a {
        self.stories.iter().filter(move |s| &s.iteration_id == iteration)
    }

    pub fn iteration_balance(&self, iteration: &IterationId) -> Result<IterationBalance, LedgerError> {
        if self.iteration(iteration).is_none() {
            return Err(LedgerError::UnknownIteration(iteration.clone()));
        }
        let mut balance = IterationBalance::default();
        for story in self.stories_in(iteration).filter(|s| s.tracked) {
            let actual = self.actual(&story.id);
            balance.total_estimate += story.estimate;
            balance.total_actual += actual;
            if story.status != StoryStatus::Done {
                balance.remaining += story.estimate.saturating_sub(actual);
            }
        }
        Ok(balance)
    }

    /// Tracked effort per pomodoro type over marks recorded in `period`.
    pub fn type_breakdown(&self, period: Period) -> BTreeMap<PomodoroType, Effort> {
        let mut out = BTreeMap::new();
        for mark in self.marks.iter().filter(|m| period.contains(m.at)) {
            *out.entry(mark.ptype.clone()).or_default() += mark.effort;
        }
        out
    }

    pub fn tracked_total(&self, period: Period) -> Effort {
        self.marks.iter().filter(|m| period.contains(m.at)).map(|m| m.effort).sum()
    }
}
