//! Where the server gets "now" from.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use futures::future::BoxFuture;
use pomoshare_core::Timestamp;
use tokio::sync::watch;

/// Milliseconds since the Unix epoch, plus a way to wait for a given instant.
pub trait TimeSource: Send + Sync + 'static {
    fn now(&self) -> Timestamp;
    fn sleep_until(&self, at: Timestamp) -> BoxFuture<'static, ()>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SystemClock;

impl TimeSource for SystemClock {
    fn now(&self) -> Timestamp {
        let ms = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default().as_millis();
        Timestamp(u64::try_from(ms).unwrap_or(u64::MAX))
    }

    fn sleep_until(&self, at: Timestamp) -> BoxFuture<'static, ()> {
        let wait = Duration::from_millis(self.now().until(at));
        Box::pin(tokio::time::sleep(wait))
    }
}

/// A clock that only moves when told to. Sleepers wake as soon as the
/// clock reaches their instant.
#[derive(Clone, Debug)]
pub struct ManualClock {
    now: Arc<AtomicU64>,
    tick: watch::Sender<u64>,
}

impl ManualClock {
    pub fn new(start: Timestamp) -> Self {
        let (tick, _) = watch::channel(start.as_millis());
        ManualClock { now: Arc::new(AtomicU64::new(start.as_millis())), tick }
    }

    pub fn set(&self, at: Timestamp) {
        let prev = self.now.fetch_max(at.as_millis(), Ordering::SeqCst);
        if at.as_millis() > prev {
            self.tick.send_replace(at.as_millis());
        }
    }

    pub fn advance(&self, ms: u64) {
        self.set(self.now() + ms);
    }
}

impl TimeSource for ManualClock {
    fn now(&self) -> Timestamp {
        Timestamp(self.now.load(Ordering::SeqCst))
    }

    fn sleep_until(&self, at: Timestamp) -> BoxFuture<'static, ()> {
        let mut rx = self.tick.subscribe();
        Box::pin(async move {
            // the sender lives as long as the clock; if it is gone, never wake
            if rx.wait_for(|now| *now >= at.as_millis()).await.is_err() {
                futures::future::pending::<()>().await;
            }
        })
    }
}
