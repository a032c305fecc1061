use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

pub const MS_PER_MINUTE: u64 = 60_000;

/// Milliseconds on the server's monotonic epoch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub fn from_minutes(minutes: u64) -> Self {
        Timestamp(minutes * MS_PER_MINUTE)
    }

    pub fn as_millis(self) -> u64 {
        self.0
    }

    /// Milliseconds from `self` until `later`, zero if `later` is not after `self`.
    pub fn until(self, later: Timestamp) -> u64 {
        later.0.saturating_sub(self.0)
    }
}

impl Add<u64> for Timestamp {
    type Output = Timestamp;

    fn add(self, ms: u64) -> Timestamp {
        Timestamp(self.0 + ms)
    }
}

impl Sub<u64> for Timestamp {
    type Output = Timestamp;

    fn sub(self, ms: u64) -> Timestamp {
        Timestamp(self.0.saturating_sub(ms))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ms", self.0)
    }
}

/// Whole minutes left, rounded up: 61 s is reported as 2 minutes.
pub fn ceil_minutes(ms: u64) -> u64 {
    ms.div_ceil(MS_PER_MINUTE)
}
