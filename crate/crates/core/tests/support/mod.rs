#![allow(dead_code)]

use chrono::NaiveDate;
use pomoshare_core::ledger::{Iteration, Story};
use pomoshare_core::session::SessionError;
use pomoshare_core::time::MS_PER_MINUTE;
use pomoshare_core::timer::BreakKind;
use pomoshare_core::{
    Effort, Interruption, InterruptionKind, Member, Phase, PomodoroClock, SessionState, StoryStatus, TimerConfig,
    TimerEvent, Timestamp,
};

const MIN: u64 = MS_PER_MINUTE;
use proptest::prelude::*;

pub const MEMBERS: [&str; 6] = ["ana", "bo", "cy", "di", "ed", "fay"];
pub const STORIES: [&str; 3] = ["S-1", "S-2", "S-3"];
pub const TYPES: [&str; 4] = ["Coding", "refactoring", "TESTING", "Spike"];

#[derive(Clone, Debug)]
pub enum Op {
    Join(usize),
    Leave(usize),
    ReadyAll,
    Ready(usize),
    Start(usize),
    CoachStart,
    Void(usize, bool),
    Deflect(usize, bool),
    Wait(u64),
    Rotate,
    Track(usize, usize, usize, bool),
    Estimate(usize, i64),
    Done(usize),
    RollDay,
}

pub fn op() -> impl Strategy<Value = Op> {
    let m = 0..MEMBERS.len();
    prop_oneof![
        1 => m.clone().prop_map(Op::Join),
        1 => m.clone().prop_map(Op::Leave),
        4 => Just(Op::ReadyAll),
        2 => m.clone().prop_map(Op::Ready),
        4 => m.clone().prop_map(Op::Start),
        1 => Just(Op::CoachStart),
        3 => (m.clone(), any::<bool>()).prop_map(|(i, k)| Op::Void(i, k)),
        2 => (m.clone(), any::<bool>()).prop_map(|(i, k)| Op::Deflect(i, k)),
        6 => (0u64..40 * MS_PER_MINUTE).prop_map(Op::Wait),
        1 => Just(Op::Rotate),
        4 => (m.clone(), 0..STORIES.len(), 0..TYPES.len(), any::<bool>()).prop_map(|(i, s, t, h)| Op::Track(i, s, t, h)),
        1 => (0..STORIES.len(), -2i64..20).prop_map(|(s, u)| Op::Estimate(s, u)),
        1 => (0..STORIES.len()).prop_map(Op::Done),
        1 => Just(Op::RollDay),
    ]
}

pub fn ops(max: usize) -> impl Strategy<Value = Vec<Op>> {
    prop::collection::vec(op(), 1..max)
}

pub fn date(day: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(2026, 3, day).unwrap()
}

/// Session with a coach, four developers, one iteration and three stories
/// (the third untracked).
pub fn fresh() -> SessionState {
    let mut s = SessionState::create("sess", TimerConfig::default(), Member::coach("coach"), Timestamp(0)).unwrap();
    for name in &MEMBERS[..4] {
        s.join(Member::developer(*name), Timestamp(0)).unwrap();
    }
    s.add_iteration(Iteration { id: "IT-1".into(), start: date(2), end: date(6) }, Timestamp(0)).unwrap();
    for (i, id) in STORIES.iter().enumerate() {
        let mut story = Story::new(*id, format!("story {id}"), "IT-1");
        story.tracked = i != 2;
        s.add_story(story, Timestamp(0)).unwrap();
    }
    s
}

pub struct Driver {
    pub state: SessionState,
    pub now: Timestamp,
    pub day: u32,
}

/// Outcome of one applied op, for property checks.
pub struct Step {
    pub before: SessionState,
    pub result: Result<(), SessionError>,
}

impl Driver {
    pub fn new() -> Self {
        Driver { state: fresh(), now: Timestamp(0), day: 2 }
    }

    fn interruption(&self, who: usize, external: bool, deflected: bool) -> Interruption {
        Interruption {
            kind: if external { InterruptionKind::External } else { InterruptionKind::Internal },
            deflected,
            at: self.now,
            note: String::new(),
            initiator: MEMBERS[who].into(),
        }
    }

    pub fn apply(&mut self, op: &Op) -> Step {
        self.state.tick(self.now);
        let before = self.state.clone();
        let now = self.now;
        let s = &mut self.state;
        let result = match op {
            Op::Join(i) => s.join(Member::developer(MEMBERS[*i]), now).map(drop),
            Op::Leave(i) => s.leave(&MEMBERS[*i].into(), now).map(drop),
            Op::ReadyAll => {
                let mut r = Ok(());
                for id in s.active_members() {
                    if let Err(e) = s.declare_ready(&id, now) {
                        r = Err(e);
                    }
                }
                r
            }
            Op::Ready(i) => s.declare_ready(&MEMBERS[*i].into(), now).map(drop),
            Op::Start(i) => s.start_shared(&MEMBERS[*i].into(), now).map(drop),
            Op::CoachStart => s.start_shared(&"coach".into(), now).map(drop),
            Op::Void(i, ext) => {
                let intr = self.interruption(*i, *ext, false);
                self.state.void_shared(intr).map(drop)
            }
            Op::Deflect(i, ext) => {
                let intr = self.interruption(*i, *ext, true);
                self.state.interrupt(intr).map(drop)
            }
            Op::Wait(ms) => {
                self.now = self.now + *ms;
                Ok(())
            }
            Op::Rotate => s.rotate_pairs(now).map(drop),
            Op::Track(i, story, t, half) => {
                let effort = if *half { Effort::HALF } else { Effort::PAIR_POMODORO };
                s.track(&MEMBERS[*i].into(), &STORIES[*story].into(), TYPES[*t], effort, None, now).map(drop)
            }
            Op::Estimate(story, units) => s.estimate(&STORIES[*story].into(), *units, now).map(drop),
            Op::Done(story) => s.set_status(&STORIES[*story].into(), StoryStatus::Done, now).map(drop),
            Op::RollDay => {
                self.day += 1;
                let day = date(self.day.min(28));
                self.state.roll_day(day, now).map(drop)
            }
        };
        Step { before, result }
    }

    pub fn run(ops: &[Op]) -> Driver {
        let mut d = Driver::new();
        for op in ops {
            d.apply(op);
        }
        d.state.tick(d.now);
        d
    }
}

/// Minimal RFC 4180 reader, enough for the export format.
pub fn read_csv(text: &str) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for line in text.lines() {
        let mut fields = Vec::new();
        let mut field = String::new();
        let mut chars = line.chars().peekable();
        let mut quoted = false;
        while let Some(c) = chars.next() {
            match (quoted, c) {
                (false, '"') if field.is_empty() => quoted = true,
                (true, '"') if chars.peek() == Some(&'"') => {
                    chars.next();
                    field.push('"');
                }
                (true, '"') => quoted = false,
                (false, ',') => fields.push(std::mem::take(&mut field)),
                (_, c) => field.push(c),
            }
        }
        fields.push(field);
        rows.push(fields);
    }
    rows
}

pub fn units_of(text: &str) -> u64 {
    let (whole, frac) = text.split_once('.').unwrap();
    whole.parse::<u64>().unwrap() * 2 + if frac == "5" { 1 } else { 0 }
}

/// Four developers, iteration IT-7 with two estimated stories, two
/// completed pomodoros with marks and one voided.
pub fn fixture_iteration() -> SessionState {
    let t = |m: u64| Timestamp(m * MIN);
    let mut s = SessionState::create("team", TimerConfig::default(), Member::developer("ana"), t(0)).unwrap();
    for m in ["bo", "cy", "di"] {
        s.join(Member::developer(m), t(0)).unwrap();
    }
    let start = NaiveDate::from_ymd_opt(2026, 5, 4).unwrap();
    let end = NaiveDate::from_ymd_opt(2026, 5, 8).unwrap();
    s.add_iteration(Iteration { id: "IT-7".into(), start, end }, t(0)).unwrap();
    for (id, title, tracked) in [
        ("S-1", "Login page", true),
        ("S-2", "Export, with \"quotes\"", true),
        ("S-3", "Spike: caching", true),
        ("S-4", "Untracked chore", false),
    ] {
        let mut story = Story::new(id, title, "IT-7");
        story.tracked = tracked;
        s.add_story(story, t(0)).unwrap();
    }
    s.estimate(&"S-1".into(), 6, t(0)).unwrap();
    s.estimate(&"S-2".into(), 4, t(0)).unwrap();

    let start_all = |s: &mut SessionState, at| {
        s.tick(at);
        for m in s.active_members() {
            s.declare_ready(&m, at).unwrap();
        }
        s.start_shared(&"ana".into(), at).unwrap();
    };
    start_all(&mut s, t(1));
    s.tick(t(26));
    s.track(&"ana".into(), &"S-1".into(), "Coding", Effort::PAIR_POMODORO, None, t(26)).unwrap();
    s.track(&"cy".into(), &"S-2".into(), "testing", Effort::HALF, None, t(26)).unwrap();
    start_all(&mut s, t(31));
    s.tick(t(56));
    s.track(&"bo".into(), &"S-1".into(), "Refactoring", Effort::PAIR_POMODORO, None, t(56)).unwrap();
    s.track(&"di".into(), &"S-2".into(), "Coding", Effort::PAIR_POMODORO, None, t(56)).unwrap();
    s.set_status(&"S-1".into(), StoryStatus::Done, t(57)).unwrap();
    start_all(&mut s, t(61));
    let void = Interruption {
        kind: InterruptionKind::External,
        deflected: false,
        at: t(70),
        note: "outage".into(),
        initiator: "bo".into(),
    };
    s.tick(t(70));
    s.void_shared(void).unwrap();
    s
}

/// What the schedule oracle reports for a run of back-to-back pomodoros.
#[derive(Debug, PartialEq)]
pub struct Schedule {
    /// Minute at which the last pomodoro completed.
    pub end_minute: u64,
    /// Minute at which the break after it ended.
    pub rest_end_minute: u64,
    /// Pomodoro numbers (1-based) followed by a long break.
    pub long_after: Vec<u32>,
}

/// Steps one simulated minute at a time through the work/break table:
/// 25 minutes of work, then 5 minutes of rest, 15 after every fourth
/// pomodoro; the next pomodoro starts the minute the break ends.
pub fn minute_oracle(pomodoros: u32, cfg: TimerConfig) -> Schedule {
    #[derive(PartialEq)]
    enum P {
        Work,
        Rest,
    }
    let mut phase = P::Work;
    let mut left = cfg.work_minutes;
    let mut done = 0;
    let mut streak = 0;
    let mut long_after = Vec::new();
    let mut minute = 0u64;
    let mut end_minute = 0;
    loop {
        minute += 1;
        left -= 1;
        if left > 0 {
            continue;
        }
        match phase {
            P::Work => {
                done += 1;
                streak += 1;
                end_minute = minute;
                phase = P::Rest;
                if streak == cfg.long_break_every {
                    streak = 0;
                    long_after.push(done);
                    left = cfg.long_break_minutes;
                } else {
                    left = cfg.short_break_minutes;
                }
            }
            P::Rest => {
                if done == pomodoros {
                    return Schedule { end_minute, rest_end_minute: minute, long_after };
                }
                phase = P::Work;
                left = cfg.work_minutes;
            }
        }
    }
}

/// Runs the real clock with a scripted time source that jumps from deadline
/// to deadline.
pub fn clock_schedule(pomodoros: u32, cfg: TimerConfig) -> Schedule {
    let mut clock = PomodoroClock::new(cfg);
    let mut now = Timestamp(0);
    let mut long_after = Vec::new();
    let mut last_end = Timestamp(0);
    let mut last_done = Timestamp(0);
    for n in 1..=pomodoros {
        clock = clock.start(now).unwrap().0;
        while clock.phase != Phase::Idle {
            now = clock.phase_deadline.unwrap();
            let (next, events) = clock.advance(now);
            for e in &events {
                match e {
                    TimerEvent::BreakStarted { kind: BreakKind::Long, .. } => long_after.push(n),
                    TimerEvent::WorkCompleted { at } => last_done = *at,
                    TimerEvent::BreakEnded { at } => last_end = *at,
                    _ => {}
                }
            }
            clock = next;
        }
    }
    assert_eq!(last_end.as_millis() % MIN, 0);
    assert_eq!(last_done.as_millis() % MIN, 0);
    Schedule { end_minute: last_done.as_millis() / MIN, rest_end_minute: last_end.as_millis() / MIN, long_after }
}
