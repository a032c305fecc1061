//! On-disk layout of one session:
//!
//! ```text
//! <data_dir>/<session>/meta.json      token
//! <data_dir>/<session>/log.jsonl      one LogEntry per line
//! <data_dir>/<session>/archive.jsonl  daily and iteration records
//! <data_dir>/<session>/journal/<date>/<member>.txt
//! ```

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use pomoshare_core::{ArchiveStore, LogEntry, SessionId, SessionState};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("session log line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
    #[error("session log does not replay: {0}")]
    Replay(String),
    #[error("invalid session id `{0}`")]
    InvalidId(String),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token: Option<String>,
}

#[derive(Debug)]
pub struct SessionStore {
    dir: PathBuf,
    log: Option<File>,
}

/// Session ids become directory names, so keep them boring.
pub fn valid_session_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

impl SessionStore {
    pub fn open(data_dir: &Path, id: &SessionId) -> Result<Self, StoreError> {
        if !valid_session_id(id.as_str()) {
            return Err(StoreError::InvalidId(id.to_string()));
        }
        Ok(SessionStore { dir: data_dir.join(id.as_str()), log: None })
    }

    pub fn exists(&self) -> bool {
        self.dir.join("log.jsonl").exists()
    }

    pub fn archive(&self) -> ArchiveStore {
        ArchiveStore::new(self.dir.join("archive.jsonl"))
    }

    pub fn journal_dir(&self) -> PathBuf {
        self.dir.join("journal")
    }

    pub fn meta(&self) -> Result<Meta, StoreError> {
        match std::fs::read_to_string(self.dir.join("meta.json")) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| StoreError::Corrupt { line: 1, reason: e.to_string() }),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Meta::default()),
            Err(e) => Err(e.into()),
        }
    }

    pub fn write_meta(&self, meta: &Meta) -> Result<(), StoreError> {
        std::fs::create_dir_all(&self.dir)?;
        let tmp = self.dir.join("meta.json.tmp");
        std::fs::write(&tmp, serde_json::to_vec(meta).expect("meta serializes"))?;
        std::fs::rename(tmp, self.dir.join("meta.json"))?;
        Ok(())
    }

    /// Reads the log back. A torn last line from a crash mid-write is dropped.
    pub fn load_log(&self) -> Result<Vec<LogEntry>, StoreError> {
        let file = match File::open(self.dir.join("log.jsonl")) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let lines: Vec<String> = BufReader::new(file).lines().collect::<Result<_, _>>()?;
        let mut entries = Vec::with_capacity(lines.len());
        for (i, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(line) {
                Ok(e) => entries.push(e),
                Err(_) if i + 1 == lines.len() => {
                    tracing::warn!(dir = %self.dir.display(), "dropping torn final log line");
                }
                Err(e) => return Err(StoreError::Corrupt { line: i + 1, reason: e.to_string() }),
            }
        }
        Ok(entries)
    }

    pub fn load_state(&self) -> Result<Option<SessionState>, StoreError> {
        let log = self.load_log()?;
        if log.is_empty() {
            return Ok(None);
        }
        SessionState::replay(&log).map(Some).map_err(|e| StoreError::Replay(e.to_string()))
    }

    /// Appends entries and syncs before returning, so an acknowledged
    /// command survives a crash.
    pub fn append(&mut self, entries: &[LogEntry]) -> Result<(), StoreError> {
        if entries.is_empty() {
            return Ok(());
        }
        if self.log.is_none() {
            std::fs::create_dir_all(&self.dir)?;
            let path = self.dir.join("log.jsonl");
            // cut off a torn last line so the next entry starts cleanly
            if let Ok(bytes) = std::fs::read(&path) {
                if bytes.last().is_some_and(|c| *c != b'\n') {
                    let keep = bytes.iter().rposition(|c| *c == b'\n').map_or(0, |i| i + 1);
                    OpenOptions::new().write(true).open(&path)?.set_len(keep as u64)?;
                }
            }
            self.log = Some(OpenOptions::new().create(true).append(true).open(path)?);
        }
        let mut buf = String::new();
        for e in entries {
            buf.push_str(&serde_json::to_string(e).expect("log entries serialize"));
            buf.push('\n');
        }
        let f = self.log.as_mut().expect("opened above");
        f.write_all(buf.as_bytes())?;
        f.sync_data()?;
        Ok(())
    }
}
