//! Append-only JSON-lines archive.
//!
//! Each line is one self-describing object:
//!
//! ```text
//! {"schema":1,"type":"day","date":"2026-03-02","session_id":"s1","events":[...],"completed":10,...}
//! {"schema":1,"type":"iteration","iteration_id":"IT-3",...}
//! {"schema":1,"type":"journal","date":"2026-03-02","member_id":"ana",...}
//! {"schema":1,"type":"audit","at":"2026-03-02T18:00:00Z","note":"day 2026-03-02 re-recorded"}
//! ```
//!
//! Nothing is rewritten in place. A later `day` line for the same date
//! replaces the earlier one for readers; a later `journal` line for the same
//! member and date does the same.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{IterationId, MemberId, SessionId, StoryId};
use crate::ledger::{Effort, PomodoroType, StoryStatus, TrackMark};
use crate::session::LogEntry;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("archive I/O: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt archive at line {line}: {reason}")]
    CorruptArchive { line: usize, reason: String },
    #[error("unsupported archive schema {found} at line {line}")]
    UnsupportedSchema { line: usize, found: u32 },
    #[error("iteration {0} is closed and cannot be amended")]
    IterationFrozen(IterationId),
    #[error("unknown iteration {0}")]
    UnknownIteration(IterationId),
    #[error("iteration record {id} is inconsistent: {reason}")]
    InconsistentIteration { id: IterationId, reason: String },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterruptionCounts {
    pub internal_deflected: u64,
    pub internal_voiding: u64,
    pub external_deflected: u64,
    pub external_voiding: u64,
}

impl InterruptionCounts {
    pub fn total(&self) -> u64 {
        self.internal_deflected + self.internal_voiding + self.external_deflected + self.external_voiding
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DailyRecord {
    pub date: NaiveDate,
    pub session_id: SessionId,
    pub events: Vec<LogEntry>,
    pub completed: u64,
    pub voided: u64,
    pub interruptions: InterruptionCounts,
    pub marks: Vec<TrackMark>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoryRow {
    pub story_id: StoryId,
    pub title: String,
    pub estimate: Effort,
    pub actual: Effort,
    pub status: StoryStatus,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationTotals {
    pub estimate: Effort,
    pub actual: Effort,
    pub remaining: Effort,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration_id: IterationId,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub stories: Vec<StoryRow>,
    pub totals: IterationTotals,
    pub breakdown: BTreeMap<PomodoroType, Effort>,
    /// A closed iteration is frozen; later records for it are refused.
    pub closed: bool,
}

impl IterationRecord {
    /// Totals must be the sums of the per-story fields.
    pub fn check_totals(&self) -> Result<(), String> {
        let estimate: Effort = self.stories.iter().map(|s| s.estimate).sum();
        let actual: Effort = self.stories.iter().map(|s| s.actual).sum();
        let remaining: Effort = self
            .stories
            .iter()
            .filter(|s| s.status != StoryStatus::Done)
            .map(|s| s.estimate.saturating_sub(s.actual))
            .sum();
        let expected = IterationTotals { estimate, actual, remaining };
        if expected != self.totals {
            return Err(format!("totals {:?} do not match story sums {:?}", self.totals, expected));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalSummary {
    /// Distinct stories marked that day, in first-marked order.
    pub stories: Vec<StoryId>,
    pub completed: u64,
    pub voided: u64,
    pub interruptions: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub date: NaiveDate,
    pub member_id: MemberId,
    pub lines: Vec<String>,
    pub auto_summary: JournalSummary,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditLine {
    pub at: DateTime<Utc>,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ArchiveRecord {
    Day(DailyRecord),
    Iteration(IterationRecord),
    Journal(JournalEntry),
    Audit(AuditLine),
}

#[derive(Serialize, Deserialize)]
struct Line {
    schema: u32,
    #[serde(flatten)]
    record: ArchiveRecord,
}

#[derive(Deserialize)]
struct SchemaProbe {
    schema: u32,
}

pub fn encode_line(record: &ArchiveRecord) -> String {
    let mut s = serde_json::to_string(&Line { schema: SCHEMA_VERSION, record: record.clone() })
        .expect("archive records always serialize");
    s.push('\n');
    s
}

/// A parsed archive. Records keep the 1-based line they came from.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Archive {
    pub records: Vec<(usize, ArchiveRecord)>,
}

impl Archive {
    pub fn parse(reader: impl BufRead) -> Result<Archive, ArchiveError> {
        let mut records = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let corrupt = |e: serde_json::Error| ArchiveError::CorruptArchive { line: line_no, reason: e.to_string() };
            let probe: SchemaProbe = serde_json::from_str(&line).map_err(corrupt)?;
            if probe.schema != SCHEMA_VERSION {
                return Err(ArchiveError::UnsupportedSchema { line: line_no, found: probe.schema });
            }
            let parsed: Line = serde_json::from_str(&line).map_err(corrupt)?;
            records.push((line_no, parsed.record));
        }
        Ok(Archive { records })
    }

    pub fn push(&mut self, record: ArchiveRecord) {
        let line = self.records.last().map_or(1, |(l, _)| l + 1);
        self.records.push((line, record));
    }

    /// Latest day record per date.
    pub fn days(&self) -> BTreeMap<NaiveDate, (usize, &DailyRecord)> {
        let mut out = BTreeMap::new();
        for (line, record) in &self.records {
            if let ArchiveRecord::Day(d) = record {
                out.insert(d.date, (*line, d));
            }
        }
        out
    }

    pub fn day(&self, date: NaiveDate) -> Option<&DailyRecord> {
        self.days().get(&date).map(|(_, d)| *d)
    }

    /// Latest record per iteration.
    pub fn iterations(&self) -> BTreeMap<&IterationId, (usize, &IterationRecord)> {
        let mut out = BTreeMap::new();
        for (line, record) in &self.records {
            if let ArchiveRecord::Iteration(it) = record {
                out.insert(&it.iteration_id, (*line, it));
            }
        }
        out
    }

    pub fn iteration(&self, id: &IterationId) -> Option<&IterationRecord> {
        self.iterations().get(id).map(|(_, r)| *r)
    }

    /// Latest journal entry per (member, date).
    pub fn journal(&self, member: &MemberId, date: NaiveDate) -> Option<&JournalEntry> {
        self.records.iter().rev().find_map(|(_, r)| match r {
            ArchiveRecord::Journal(j) if &j.member_id == member && j.date == date => Some(j),
            _ => None,
        })
    }

    pub fn audits(&self) -> impl Iterator<Item = &AuditLine> {
        self.records.iter().filter_map(|(_, r)| match r {
            ArchiveRecord::Audit(a) => Some(a),
            _ => None,
        })
    }
}

/// The archive file. One writer appends; any number of readers load snapshots.
#[derive(Clone, Debug)]
pub struct ArchiveStore {
    path: PathBuf,
}

impl ArchiveStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        ArchiveStore { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn load(&self) -> Result<Archive, ArchiveError> {
        match File::open(&self.path) {
            Ok(f) => Archive::parse(BufReader::new(f)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Archive::default()),
            Err(e) => Err(e.into()),
        }
    }

    /// Appends one record as a single write.
    pub fn append(&self, record: &ArchiveRecord) -> Result<(), ArchiveError> {
        if let Some(dir) = self.path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut f = OpenOptions::new().create(true).append(true).open(&self.path)?;
        f.write_all(encode_line(record).as_bytes())?;
        f.sync_data()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn audit() -> ArchiveRecord {
        ArchiveRecord::Audit(AuditLine { at: DateTime::from_timestamp(0, 0).unwrap(), note: "x".into() })
    }

    #[test]
    fn line_carries_schema_and_type() {
        let line = encode_line(&audit());
        assert_eq!(line, "{\"schema\":1,\"type\":\"audit\",\"at\":\"1970-01-01T00:00:00Z\",\"note\":\"x\"}\n");
        let parsed = Archive::parse(line.as_bytes()).unwrap();
        assert_eq!(parsed.records, vec![(1, audit())]);
    }

    #[test]
    fn corrupt_line_is_named() {
        let text = format!("{}not json\n", encode_line(&audit()));
        match Archive::parse(text.as_bytes()) {
            Err(ArchiveError::CorruptArchive { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected corruption, got {other:?}"),
        }
    }

    #[test]
    fn unknown_schema_is_rejected() {
        let text = "{\"schema\":9,\"type\":\"audit\",\"at\":\"1970-01-01T00:00:00Z\",\"note\":\"x\"}\n";
        assert!(matches!(Archive::parse(text.as_bytes()), Err(ArchiveError::UnsupportedSchema { found: 9, .. })));
    }

    #[test]
    fn store_appends() {
        let dir = tempfile::tempdir().unwrap();
        let store = ArchiveStore::new(dir.path().join("nested/archive.jsonl"));
        assert!(store.load().unwrap().records.is_empty());
        store.append(&audit()).unwrap();
        store.append(&audit()).unwrap();
        let a = store.load().unwrap();
        assert_eq!(a.records.len(), 2);
        assert_eq!(a.records[1].0, 2);
    }
}
