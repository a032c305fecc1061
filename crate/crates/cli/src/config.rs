//! The client's config file: one `key=value` per line, `#` starts a comment.
//!
//! ```text
//! server=127.0.0.1:7420
//! token=team-secret
//! member=ana
//! session=team
//! archive=/path/to/archive.jsonl
//! ```
//!
//! `POMOSHARE_SERVER` and `POMOSHARE_TOKEN` override the file; flags override both.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const KEYS: [&str; 7] = ["server", "token", "member", "session", "archive", "name", "role"];

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Config {
    pub values: BTreeMap<String, String>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}:{line}: expected key=value")]
    Syntax { path: String, line: usize },
    #[error("{path}:{line}: unknown key `{key}`")]
    UnknownKey { path: String, line: usize, key: String },
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl Config {
    pub fn parse(text: &str, path: &Path) -> Result<Config, ConfigError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = || ConfigError::Syntax { path: path.display().to_string(), line: i + 1 };
            let (k, v) = line.split_once('=').ok_or_else(err)?;
            let key = k.trim();
            if !KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey { path: path.display().to_string(), line: i + 1, key: key.into() });
            }
            values.insert(key.to_owned(), v.trim().to_owned());
        }
        Ok(Config { values })
    }

    /// A missing file is an empty config.
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        match std::fs::read_to_string(path) {
            Ok(text) => Config::parse(&text, path),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Config::default()),
            Err(e) => Err(e.into()),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let text: String = self.values.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str).filter(|v| !v.is_empty())
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_owned(), value.into());
    }

    /// Applies environment overrides from `lookup` (normally `std::env::var`).
    pub fn with_env(mut self, lookup: impl Fn(&str) -> Option<String>) -> Config {
        for (var, key) in [("POMOSHARE_SERVER", "server"), ("POMOSHARE_TOKEN", "token")] {
            if let Some(v) = lookup(var).filter(|v| !v.is_empty()) {
                self.set(key, v);
            }
        }
        self
    }
}

pub fn default_path() -> PathBuf {
    if let Some(p) = std::env::var_os("POMOSHARE_CONFIG") {
        return p.into();
    }
    let base = std::env::var_os("XDG_CONFIG_HOME")
        .map(PathBuf::from)
        .or_else(|| std::env::var_os("HOME").map(|h| PathBuf::from(h).join(".config")))
        .unwrap_or_else(|| PathBuf::from("."));
    base.join("pomoshare").join("config")
}
