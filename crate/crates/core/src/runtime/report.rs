use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::Serialize;

use super::status::{LogLevel, NodeStatus};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Outcome {
    Success,
    Failed { node: String, description: String },
    Deadlock { nodes: Vec<String> },
    ExternallyStopped { reason: String },
}

impl Outcome {
    /// Process exit status used by the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::Failed { .. } => 1,
            Outcome::Deadlock { .. } => 2,
            Outcome::ExternallyStopped { .. } => 130,
        }
    }

    pub fn is_success(&self) -> bool {
        matches!(self, Outcome::Success)
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Success => write!(f, "success"),
            Outcome::Failed { node, description } => write!(f, "failed ({node}: {description})"),
            Outcome::Deadlock { nodes } => write!(f, "deadlock ({})", nodes.join(", ")),
            Outcome::ExternallyStopped { reason } => write!(f, "externally stopped ({reason})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeReport {
    pub kind: String,
    pub status: NodeStatus,
    pub retries: u32,
    /// Body invocations that returned cleanly.
    pub invocations: u64,
    pub calls: u64,
    pub received: BTreeMap<String, u64>,
    pub sent: BTreeMap<String, u64>,
    pub wall_time_ms: f64,
    pub metrics: BTreeMap<String, Vec<f64>>,
    pub error: Option<String>,
    pub status_history: Vec<NodeStatus>,
}

impl NodeReport {
    pub fn total_received(&self) -> u64 {
        self.received.values().sum()
    }

    pub fn total_sent(&self) -> u64 {
        self.sent.values().sum()
    }

    pub fn metric(&self, name: &str) -> &[f64] {
        self.metrics.get(name).map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelReport {
    pub id: String,
    pub source: String,
    pub target: String,
    pub capacity: usize,
    pub sent: u64,
    pub received: u64,
    pub queued: usize,
    pub max_queued: usize,
    pub closed: bool,
}

impl ChannelReport {
    pub fn conserved(&self) -> bool {
        self.sent == self.received + self.queued as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogRecord {
    pub time: String,
    pub level: LogLevel,
    pub node: String,
    pub message: String,
}

impl fmt::Display for LogRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} {}", self.time, self.level, self.node, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExecutionReport {
    pub workflow: String,
    pub outcome: Outcome,
    pub nodes: BTreeMap<String, NodeReport>,
    pub channels: Vec<ChannelReport>,
    pub logs: Vec<LogRecord>,
    pub wall_time_ms: f64,
    /// Node contexts still alive when the report was produced.
    pub live_contexts: usize,
}

impl ExecutionReport {
    pub fn node(&self, path: &str) -> Option<&NodeReport> {
        self.nodes.get(path)
    }

    pub fn logs_for<'a>(&'a self, node: &'a str) -> impl Iterator<Item = &'a LogRecord> + 'a {
        self.logs.iter().filter(move |l| l.node == node)
    }

    /// Every channel satisfies sent == received + still queued.
    pub fn conservation_holds(&self) -> bool {
        self.channels.iter().all(ChannelReport::conserved)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is always serializable")
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }
}
