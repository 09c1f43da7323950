use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Instant, SystemTime};

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum NodeStatus {
    NotStarted,
    Running,
    WaitingForInput,
    WaitingForOutput,
    Completed,
    Failed,
    Stopped,
}

impl NodeStatus {
    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            NodeStatus::Completed | NodeStatus::Failed | NodeStatus::Stopped
        )
    }

    pub fn is_waiting(self) -> bool {
        matches!(
            self,
            NodeStatus::WaitingForInput | NodeStatus::WaitingForOutput
        )
    }

    /// Allowed transitions of the node state machine.
    pub fn can_move_to(self, next: NodeStatus) -> bool {
        use NodeStatus::*;
        match (self, next) {
            (from, _) if from.is_terminal() => false,
            (_, NotStarted) => false,
            (WaitingForInput | WaitingForOutput, WaitingForInput | WaitingForOutput) => false,
            (NotStarted, WaitingForInput | WaitingForOutput) => false,
            _ => true,
        }
    }

    fn code(self) -> u64 {
        self as u64
    }

    fn from_code(code: u64) -> NodeStatus {
        use NodeStatus::*;
        [
            NotStarted,
            Running,
            WaitingForInput,
            WaitingForOutput,
            Completed,
            Failed,
            Stopped,
        ][code as usize]
    }
}

impl fmt::Display for NodeStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Lock-free status slot shared between a node and the supervisor. The low
/// byte holds the status, the rest is an epoch bumped on every change so a
/// poller can tell "still waiting" from "woke up and blocked again".
#[derive(Debug, Default)]
pub struct StatusCell(AtomicU64);

impl StatusCell {
    pub fn set(&self, status: NodeStatus) {
        let prev = self.0.load(Ordering::SeqCst);
        let epoch = (prev >> 8) + 1;
        self.0.store((epoch << 8) | status.code(), Ordering::SeqCst);
    }

    pub fn get(&self) -> NodeStatus {
        NodeStatus::from_code(self.0.load(Ordering::SeqCst) & 0xff)
    }

    /// Status together with its epoch.
    pub fn snapshot(&self) -> (NodeStatus, u64) {
        let raw = self.0.load(Ordering::SeqCst);
        (NodeStatus::from_code(raw & 0xff), raw >> 8)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LogLevel {
    Debug,
    Info,
    Warn,
    Error,
}

impl LogLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            LogLevel::Debug => "DEBUG",
            LogLevel::Info => "INFO",
            LogLevel::Warn => "WARN",
            LogLevel::Error => "ERROR",
        }
    }
}

impl fmt::Display for LogLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LogLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "debug" => Ok(LogLevel::Debug),
            "info" => Ok(LogLevel::Info),
            "warn" | "warning" => Ok(LogLevel::Warn),
            "error" => Ok(LogLevel::Error),
            other => Err(format!("unknown log level {other:?}")),
        }
    }
}

#[derive(Debug, Clone)]
pub enum MessageKind {
    Status(NodeStatus),
    Log(LogLevel, String),
    Error { description: String, retryable: bool },
}

/// Record sent from a node context to the supervisor.
#[derive(Debug, Clone)]
pub struct RuntimeMessage {
    pub sender: String,
    pub timestamp: Instant,
    pub wall_clock: SystemTime,
    pub kind: MessageKind,
}

impl RuntimeMessage {
    pub fn new(sender: &str, kind: MessageKind) -> Self {
        RuntimeMessage {
            sender: sender.to_string(),
            timestamp: Instant::now(),
            wall_clock: SystemTime::now(),
            kind,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_round_trips_and_bumps_epoch() {
        let cell = StatusCell::default();
        assert_eq!(cell.get(), NodeStatus::NotStarted);
        cell.set(NodeStatus::Running);
        let (s1, e1) = cell.snapshot();
        cell.set(NodeStatus::Running);
        let (s2, e2) = cell.snapshot();
        assert_eq!((s1, s2), (NodeStatus::Running, NodeStatus::Running));
        assert!(e2 > e1);
        cell.set(NodeStatus::Stopped);
        assert_eq!(cell.get(), NodeStatus::Stopped);
    }

    #[test]
    fn transitions() {
        use NodeStatus::*;
        assert!(NotStarted.can_move_to(Running));
        assert!(!NotStarted.can_move_to(WaitingForInput));
        assert!(Running.can_move_to(WaitingForOutput));
        assert!(WaitingForOutput.can_move_to(Running));
        assert!(!Completed.can_move_to(Running));
        assert!(!Failed.can_move_to(Stopped));
    }

    #[test]
    fn log_level_parse() {
        assert_eq!("INFO".parse::<LogLevel>().unwrap(), LogLevel::Info);
        assert!("loud".parse::<LogLevel>().is_err());
        assert!(LogLevel::Debug < LogLevel::Error);
    }
}
