use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, OnceLock};
use std::time::Duration;

/// How often blocking operations re-check the stop signal.
pub const CANCEL_CHECK_INTERVAL: Duration = Duration::from_millis(20);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StopReason {
    External,
    NodeRequested(String),
    NodeFailed { node: String, description: String },
    Deadlock(Vec<String>),
    Timeout,
}

/// Global, write-once stop flag shared by the supervisor and every node.
/// The first reason recorded wins; later calls only keep the flag set.
#[derive(Debug, Clone, Default)]
pub struct StopSignal {
    inner: Arc<Inner>,
}

#[derive(Debug, Default)]
struct Inner {
    flag: AtomicBool,
    reason: OnceLock<StopReason>,
}

impl StopSignal {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stop(&self, reason: StopReason) {
        let _ = self.inner.reason.set(reason);
        self.inner.flag.store(true, Ordering::SeqCst);
    }

    pub fn is_set(&self) -> bool {
        self.inner.flag.load(Ordering::SeqCst)
    }

    pub fn reason(&self) -> Option<&StopReason> {
        self.inner.reason.get()
    }
}
