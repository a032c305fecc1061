//! Recording, processing and visualizing: daily records, derived metrics,
//! the iteration spreadsheet and the end-of-day journal.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use chrono::{DateTime, FixedOffset, NaiveDate, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::archive::{
    Archive, ArchiveError, ArchiveRecord, ArchiveStore, AuditLine, DailyRecord, InterruptionCounts, IterationRecord,
    IterationTotals, JournalEntry, JournalSummary, StoryRow,
};
use crate::ids::{IterationId, MemberId, SessionId, StoryId};
use crate::ledger::{Effort, Ledger, LedgerError, Period, PomodoroType, StoryStatus};
use crate::session::{LogEntry, SessionEvent};
use crate::time::Timestamp;
use crate::timer::{InterruptionKind, TimerEvent};

pub const CSV_HEADER: &str = "story_id,title,estimate_pomodoros,actual_pomodoros,status";

/// Maps server timestamps (Unix epoch milliseconds) to civil dates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayBoundary {
    pub utc_offset_minutes: i32,
}

impl Default for DayBoundary {
    fn default() -> Self {
        DayBoundary::local()
    }
}

impl DayBoundary {
    pub const UTC: DayBoundary = DayBoundary { utc_offset_minutes: 0 };

    pub fn local() -> DayBoundary {
        let offset = chrono::Local::now().offset().local_minus_utc() / 60;
        DayBoundary { utc_offset_minutes: offset }
    }

    fn offset(&self) -> FixedOffset {
        FixedOffset::east_opt(self.utc_offset_minutes * 60).unwrap_or(FixedOffset::east_opt(0).unwrap())
    }

    pub fn date_of(&self, t: Timestamp) -> NaiveDate {
        let ms = i64::try_from(t.as_millis()).unwrap_or(i64::MAX);
        let utc = DateTime::<Utc>::from_timestamp_millis(ms).unwrap_or_default();
        utc.with_timezone(&self.offset()).date_naive()
    }

    /// `[start of date, start of next date)` in server milliseconds.
    pub fn period_of(&self, date: NaiveDate) -> Period {
        let start = |d: NaiveDate| {
            let local = d.and_hms_opt(0, 0, 0).expect("midnight exists");
            let ms = self.offset().from_local_datetime(&local).single().map_or(0, |dt| dt.timestamp_millis());
            Timestamp(u64::try_from(ms).unwrap_or(0))
        };
        Period::between(start(date), start(date.succ_opt().unwrap_or(date)))
    }

    pub fn slice(&self, log: &[LogEntry], date: NaiveDate) -> Vec<LogEntry> {
        let period = self.period_of(date);
        log.iter().filter(|e| period.contains(e.event.at())).cloned().collect()
    }
}

/// Counts a day's events. Pure; the store is not touched.
pub fn summarize_day(session_id: &SessionId, date: NaiveDate, events: &[LogEntry]) -> DailyRecord {
    let mut record = DailyRecord {
        date,
        session_id: session_id.clone(),
        events: events.to_vec(),
        completed: 0,
        voided: 0,
        interruptions: InterruptionCounts::default(),
        marks: Vec::new(),
    };
    for entry in events {
        match &entry.event {
            SessionEvent::Timer { timer: TimerEvent::WorkCompleted { .. } } => record.completed += 1,
            SessionEvent::Timer { timer: TimerEvent::Voided { interruption } } => {
                record.voided += 1;
                match interruption.kind {
                    InterruptionKind::Internal => record.interruptions.internal_voiding += 1,
                    InterruptionKind::External => record.interruptions.external_voiding += 1,
                }
            }
            SessionEvent::Timer { timer: TimerEvent::InterruptionLogged { interruption } } => match interruption.kind {
                InterruptionKind::Internal => record.interruptions.internal_deflected += 1,
                InterruptionKind::External => record.interruptions.external_deflected += 1,
            },
            SessionEvent::Tracked { mark } => record.marks.push(mark.clone()),
            _ => {}
        }
    }
    record
}

/// Appends the day's record. Recording a date again supersedes the earlier
/// record and leaves an audit line behind.
pub fn record_day(
    store: &ArchiveStore,
    session_id: &SessionId,
    events: &[LogEntry],
    date: NaiveDate,
    wall_clock: DateTime<Utc>,
) -> Result<DailyRecord, ArchiveError> {
    let existing = store.load()?.day(date).is_some();
    let record = summarize_day(session_id, date, events);
    store.append(&ArchiveRecord::Day(record.clone()))?;
    if existing {
        store.append(&ArchiveRecord::Audit(AuditLine {
            at: wall_clock,
            note: format!("day {date} re-recorded; the earlier record is superseded"),
        }))?;
    }
    Ok(record)
}

/// Snapshot of one iteration from the ledger. Untracked stories are left out.
pub fn iteration_record(ledger: &Ledger, id: &IterationId, closed: bool) -> Result<IterationRecord, LedgerError> {
    let iteration = ledger.iteration(id).ok_or_else(|| LedgerError::UnknownIteration(id.clone()))?;
    let stories: Vec<StoryRow> = ledger
        .stories_in(id)
        .filter(|s| s.tracked)
        .map(|s| StoryRow {
            story_id: s.id.clone(),
            title: s.title.clone(),
            estimate: s.estimate,
            actual: ledger.actual(&s.id),
            status: s.status,
        })
        .collect();
    let balance = ledger.iteration_balance(id)?;
    let mut breakdown: BTreeMap<PomodoroType, Effort> = BTreeMap::new();
    let ids: BTreeSet<&StoryId> = stories.iter().map(|s| &s.story_id).collect();
    for mark in ledger.marks.iter().filter(|m| ids.contains(&m.story_id)) {
        *breakdown.entry(mark.ptype.clone()).or_default() += mark.effort;
    }
    Ok(IterationRecord {
        iteration_id: id.clone(),
        start: iteration.start,
        end: iteration.end,
        stories,
        totals: IterationTotals {
            estimate: balance.total_estimate,
            actual: balance.total_actual,
            remaining: balance.remaining,
        },
        breakdown,
        closed,
    })
}

/// Writes an iteration record after checking its totals. Closed iterations are frozen.
pub fn archive_iteration(store: &ArchiveStore, record: &IterationRecord) -> Result<(), ArchiveError> {
    record
        .check_totals()
        .map_err(|reason| ArchiveError::InconsistentIteration { id: record.iteration_id.clone(), reason })?;
    if store.load()?.iteration(&record.iteration_id).is_some_and(|r| r.closed) {
        return Err(ArchiveError::IterationFrozen(record.iteration_id.clone()));
    }
    store.append(&ArchiveRecord::Iteration(record.clone()))
}

pub fn render_iteration_csv(record: &IterationRecord) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .quote_style(csv::QuoteStyle::Necessary)
        .from_writer(Vec::new());
    w.write_record(CSV_HEADER.split(',')).expect("in-memory write");
    for s in &record.stories {
        w.write_record([
            s.story_id.as_str(),
            &s.title,
            &s.estimate.to_string(),
            &s.actual.to_string(),
            s.status.as_str(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv of UTF-8 fields is UTF-8")
}

pub fn export_iteration_csv(archive: &Archive, id: &IterationId) -> Result<String, ArchiveError> {
    let record = archive.iteration(id).ok_or_else(|| ArchiveError::UnknownIteration(id.clone()))?;
    Ok(render_iteration_csv(record))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub from: NaiveDate,
    pub to: NaiveDate,
}

impl DateRange {
    pub fn day(date: NaiveDate) -> DateRange {
        DateRange { from: date, to: date }
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        self.from <= d && d <= self.to
    }

    fn overlaps(&self, start: NaiveDate, end: NaiveDate) -> bool {
        start <= self.to && self.from <= end
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayMetrics {
    /// Uninterrupted pomodoros the team completed.
    pub completed: u64,
    pub voided: u64,
    pub interruptions: u64,
    pub tracked: Effort,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// actual / estimate for finished stories of iterations overlapping the range.
    pub estimation_accuracy: BTreeMap<StoryId, f64>,
    pub daily: BTreeMap<NaiveDate, DayMetrics>,
    /// voided / (voided + completed); absent when nothing ran.
    pub void_rate: Option<f64>,
    pub type_effort: BTreeMap<PomodoroType, Effort>,
    /// Each type's share of tracked effort.
    pub type_share: BTreeMap<PomodoroType, f64>,
}

fn check_record(line: usize, record: &ArchiveRecord) -> Result<(), ArchiveError> {
    let corrupt = |reason: String| ArchiveError::CorruptArchive { line, reason };
    match record {
        ArchiveRecord::Day(d) => {
            let recount = summarize_day(&d.session_id, d.date, &d.events);
            if recount.completed != d.completed || recount.voided != d.voided {
                return Err(corrupt(format!(
                    "day {} claims {} completed / {} voided, its events show {} / {}",
                    d.date, d.completed, d.voided, recount.completed, recount.voided
                )));
            }
            if recount.interruptions != d.interruptions || recount.marks != d.marks {
                return Err(corrupt(format!("day {} interruption or mark list disagrees with its events", d.date)));
            }
            Ok(())
        }
        ArchiveRecord::Iteration(it) => it.check_totals().map_err(corrupt),
        ArchiveRecord::Journal(_) | ArchiveRecord::Audit(_) => Ok(()),
    }
}

/// Derives metrics for `range`. Deterministic in the archive contents.
pub fn process(archive: &Archive, range: DateRange) -> Result<Metrics, ArchiveError> {
    for (line, record) in &archive.records {
        check_record(*line, record)?;
    }
    let mut metrics = Metrics::default();
    let (mut completed, mut voided) = (0u64, 0u64);
    for (date, (_, day)) in archive.days().into_iter().filter(|(d, _)| range.contains(*d)) {
        let tracked = day.marks.iter().map(|m| m.effort).sum();
        metrics.daily.insert(
            date,
            DayMetrics {
                completed: day.completed,
                voided: day.voided,
                interruptions: day.interruptions.total(),
                tracked,
            },
        );
        completed += day.completed;
        voided += day.voided;
        for mark in &day.marks {
            *metrics.type_effort.entry(mark.ptype.clone()).or_default() += mark.effort;
        }
    }
    if completed + voided > 0 {
        metrics.void_rate = Some(voided as f64 / (voided + completed) as f64);
    }
    let total: u64 = metrics.type_effort.values().map(|e| e.units()).sum();
    if total > 0 {
        for (t, e) in &metrics.type_effort {
            metrics.type_share.insert(t.clone(), e.units() as f64 / total as f64);
        }
    }
    for (_, (_, it)) in archive.iterations() {
        if !range.overlaps(it.start, it.end) {
            continue;
        }
        for s in it.stories.iter().filter(|s| s.status == StoryStatus::Done && s.estimate.units() > 0) {
            metrics.estimation_accuracy.insert(s.story_id.clone(), s.actual.units() as f64 / s.estimate.units() as f64);
        }
    }
    Ok(metrics)
}

pub fn render_metrics(metrics: &Metrics) -> String {
    let mut out = String::new();
    for (date, d) in &metrics.daily {
        let _ = writeln!(
            out,
            "{date}: {} completed, {} voided, {} interruptions, {} pomodoros tracked",
            d.completed, d.voided, d.interruptions, d.tracked
        );
    }
    match metrics.void_rate {
        Some(r) => {
            let _ = writeln!(out, "void rate: {r:.2}");
        }
        None => out.push_str("void rate: n/a\n"),
    }
    for (t, e) in &metrics.type_effort {
        let share = metrics.type_share.get(t).copied().unwrap_or(0.0);
        let _ = writeln!(out, "{t}: {e} pomodoros ({:.0}%)", share * 100.0);
    }
    for (story, acc) in &metrics.estimation_accuracy {
        let _ = writeln!(out, "{story}: estimation accuracy {acc:.2}");
    }
    out
}

pub fn journal_summary(day: Option<&DailyRecord>) -> JournalSummary {
    let Some(day) = day else { return JournalSummary::default() };
    let mut stories: Vec<StoryId> = Vec::new();
    for mark in &day.marks {
        if !stories.contains(&mark.story_id) {
            stories.push(mark.story_id.clone());
        }
    }
    JournalSummary { stories, completed: day.completed, voided: day.voided, interruptions: day.interruptions.total() }
}

/// Builds a member's end-of-day entry: their own lines first, then the
/// summary of the day's recorded activity.
pub fn generate_journal(
    archive: &Archive,
    member: &MemberId,
    date: NaiveDate,
    manual_lines: &[String],
) -> JournalEntry {
    JournalEntry {
        date,
        member_id: member.clone(),
        lines: manual_lines.iter().map(|l| l.trim_end().to_owned()).filter(|l| !l.is_empty()).collect(),
        auto_summary: journal_summary(archive.day(date)),
    }
}

pub fn render_journal(entry: &JournalEntry) -> String {
    let mut out = format!("Journal of {} for {}\n", entry.member_id, entry.date);
    for line in &entry.lines {
        let _ = writeln!(out, "- {line}");
    }
    let s = &entry.auto_summary;
    let _ = writeln!(
        out,
        "Team: {} pomodoros completed, {} voided, {} interruptions",
        s.completed, s.voided, s.interruptions
    );
    if s.stories.is_empty() {
        out.push_str("Stories: none tracked\n");
    } else {
        let names: Vec<&str> = s.stories.iter().map(StoryId::as_str).collect();
        let _ = writeln!(out, "Stories: {}", names.join(", "));
    }
    out
}

/// Writes `<dir>/<date>/<member>.txt`, replacing any earlier text for that day.
pub fn write_journal_file(dir: &Path, entry: &JournalEntry) -> io::Result<PathBuf> {
    let day_dir = dir.join(entry.date.to_string());
    std::fs::create_dir_all(&day_dir)?;
    let safe: String = entry
        .member_id
        .as_str()
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    let path = day_dir.join(format!("{safe}.txt"));
    std::fs::write(&path, render_journal(entry))?;
    Ok(path)
}
