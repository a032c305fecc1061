mod support;

use std::collections::BTreeMap;

use pomoshare_core::ledger::Period;
use pomoshare_core::session::PomodoroStatus;
use pomoshare_core::{Effort, SessionEvent, SessionState, TimerEvent};
use proptest::prelude::*;
use support::{ops, Driver, Op};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn log_replay_reproduces_state(ops in ops(80)) {
        let d = Driver::run(&ops);
        let replayed = SessionState::replay(&d.state.event_log).unwrap();
        prop_assert_eq!(replayed, d.state);
    }

    #[test]
    fn sequence_numbers_are_contiguous(ops in ops(60)) {
        let d = Driver::run(&ops);
        for (i, e) in d.state.event_log.iter().enumerate() {
            prop_assert_eq!(e.seq, i as u64 + 1);
        }
    }

    #[test]
    fn at_most_one_pomodoro_running(ops in ops(80)) {
        let d = Driver::run(&ops);
        let mut open = false;
        for e in &d.state.event_log {
            match &e.event {
                SessionEvent::Started { .. } => {
                    prop_assert!(!open, "two Started without completion or void");
                    open = true;
                }
                SessionEvent::Timer { timer: TimerEvent::WorkCompleted { .. } | TimerEvent::Voided { .. } } => open = false,
                _ => {}
            }
        }
    }

    #[test]
    fn ready_set_clears_on_every_transition(ops in ops(80)) {
        let mut d = Driver::new();
        for op in &ops {
            d.apply(op);
            let last = d.state.event_log.last().unwrap();
            let transition = match &last.event {
                SessionEvent::Started { .. } => true,
                SessionEvent::Timer { timer } => timer.is_phase_transition(),
                _ => false,
            };
            if transition {
                prop_assert!(d.state.ready.is_empty());
            }
            prop_assert!(d.state.ready.iter().all(|m| d.state.is_active(m)));
        }
    }

    #[test]
    fn participant_snapshots_never_change(ops in ops(80)) {
        let mut d = Driver::new();
        let mut seen = BTreeMap::new();
        for op in &ops {
            d.apply(op);
            for (seq, p) in &d.state.pomodoros {
                let first = seen.entry(*seq).or_insert_with(|| p.participants.clone());
                prop_assert_eq!(&*first, &p.participants);
            }
        }
    }

    #[test]
    fn pairing_covers_active_members(ops in ops(60)) {
        let d = Driver::run(&ops);
        let mut placed: Vec<_> = d.state.pairing.members().cloned().collect();
        placed.sort();
        let mut active = d.state.active_members();
        active.sort();
        prop_assert_eq!(placed, active);
    }

    #[test]
    fn voided_pomodoros_earn_nothing(ops in ops(80)) {
        let mut d = Driver::new();
        for op in &ops {
            let step = d.apply(op);
            if matches!(op, Op::Void(..)) && step.result.is_ok() {
                let (b, a) = (&step.before.clock, &d.state.clock);
                prop_assert_eq!(a.consecutive_completed, b.consecutive_completed);
                prop_assert_eq!(a.total_completed_today, b.total_completed_today);
            }
        }
        let state = &d.state;
        for mark in &state.ledger.marks {
            prop_assert_eq!(state.pomodoros[&mark.pomodoro_seq].status, PomodoroStatus::Completed);
        }
        let breakdown: Effort = state.ledger.type_breakdown(Period::all()).values().copied().sum();
        prop_assert_eq!(breakdown, state.ledger.tracked_total(Period::all()));
    }
}

#[test]
fn replay_rejects_tampered_logs() {
    let ops = vec![Op::ReadyAll, Op::Start(0), Op::Wait(26 * 60_000), Op::Track(0, 0, 0, false)];
    let d = Driver::run(&ops);
    let mut log = d.state.event_log.clone();
    // drop the WorkCompleted entry and renumber: the mark now points at a running pomodoro
    let idx = log
        .iter()
        .position(|e| matches!(e.event, SessionEvent::Timer { timer: TimerEvent::WorkCompleted { .. } }))
        .unwrap();
    log.remove(idx);
    for (i, e) in log.iter_mut().enumerate() {
        e.seq = i as u64 + 1;
    }
    assert!(SessionState::replay(&log).is_err());
}
