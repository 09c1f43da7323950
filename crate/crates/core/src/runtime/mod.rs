//! Execution of a validated workflow.
//!
//! Every leaf node runs on its own thread with a private [`NodeContext`].
//! The supervisor (the calling thread) launches nodes, collects their
//! status and log messages, polls for deadlock and enforces the optional
//! global timeout. A node that terminates closes all of its ports, which
//! lets its neighbours observe the closure and shut down in turn.

mod context;
mod error;
mod lifecycle;
mod report;
mod status;

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fs::{self, File};
use std::io::{self, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

pub use context::{AnyEvent, NodeContext, Received, ShutdownCause};
pub use error::NodeError;
pub use lifecycle::NodeBody;
pub use report::{ChannelReport, ExecutionReport, LogRecord, NodeReport, Outcome};
pub use status::{LogLevel, MessageKind, NodeStatus, RuntimeMessage, StatusCell};

use crate::channel::{Channel, Wakeup};
use crate::graph::{GraphError, ValidationReport, Workflow};
use crate::io::SystemConfig;
use crate::nodes::{MockQueue, QueueBackend};
use crate::registry::NodeRegistry;
use crate::signal::{StopReason, StopSignal};
use context::{ContextParts, InputPort, OutputPort};
use lifecycle::{run_node, LifecycleResult};

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub workdir: PathBuf,
    pub log_level: LogLevel,
    /// Soft cap on simultaneously launched nodes; 0 means unbounded.
    pub max_concurrent: usize,
    pub poll_interval: Duration,
    pub timeout: Option<Duration>,
    pub system: SystemConfig,
    /// Handle for stopping the run from outside.
    pub stop: StopSignal,
    /// Also print log lines to stderr.
    pub echo_logs: bool,
}

impl RunConfig {
    pub fn new(workdir: impl Into<PathBuf>) -> Self {
        RunConfig {
            workdir: workdir.into(),
            log_level: LogLevel::Info,
            max_concurrent: 0,
            poll_interval: Duration::from_millis(250),
            timeout: None,
            system: SystemConfig::default(),
            stop: StopSignal::new(),
            echo_logs: false,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = Some(timeout);
        self
    }

    pub fn with_poll_interval(mut self, interval: Duration) -> Self {
        self.poll_interval = interval;
        self
    }

    pub fn with_log_level(mut self, level: LogLevel) -> Self {
        self.log_level = level;
        self
    }

    pub fn with_system(mut self, system: SystemConfig) -> Self {
        self.system = system;
        self
    }

    pub fn with_max_concurrent(mut self, n: usize) -> Self {
        self.max_concurrent = n;
        self
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("workflow failed validation:\n{0}")]
    Validation(ValidationReport),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("cannot build node {node}: {source}")]
    Build {
        node: String,
        #[source]
        source: NodeError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("invalid run configuration: {0}")]
    Config(String),
}

struct NodeFinal {
    result: LifecycleResult,
    received: BTreeMap<String, u64>,
    sent: BTreeMap<String, u64>,
    metrics: BTreeMap<String, Vec<f64>>,
}

struct Prepared {
    path: String,
    body: Box<dyn NodeBody>,
    ctx: NodeContext,
}

struct Launched {
    path: String,
    kind: String,
    status: Arc<StatusCell>,
    handle: Option<JoinHandle<NodeFinal>>,
}

/// Runs `workflow` to completion and reports what happened. Returns only
/// after every node context has terminated.
pub fn execute(
    workflow: &Workflow,
    registry: &NodeRegistry,
    config: &RunConfig,
) -> Result<ExecutionReport, RunError> {
    if config.poll_interval.is_zero() {
        return Err(RunError::Config("poll interval must be positive".into()));
    }
    let validation = workflow.validate(registry);
    if !validation.ok {
        return Err(RunError::Validation(validation));
    }
    let io_err = |path: &PathBuf| {
        let path = path.clone();
        move |source| RunError::Io { path, source }
    };
    fs::create_dir_all(&config.workdir).map_err(io_err(&config.workdir))?;
    let log_path = config.workdir.join("run.log");
    let log_file = File::create(&log_path).map_err(io_err(&log_path))?;

    let flat = workflow.flatten()?;
    let stop = config.stop.clone();
    let wakeups: HashMap<&str, Arc<Wakeup>> = flat
        .nodes
        .iter()
        .map(|(path, _)| (path.as_str(), Wakeup::new()))
        .collect();
    let mut port_channels: HashMap<(String, String), Arc<Channel>> = HashMap::new();
    let mut channels = Vec::new();
    for edge in &flat.edges {
        let channel = Arc::new(
            Channel::new(edge.id.clone(), edge.capacity, edge.port_type.clone())
                .with_staging(&config.workdir)
                .with_cancel(stop.clone())
                .with_receiver_wakeup(wakeups[edge.target_node.as_str()].clone()),
        );
        port_channels.insert(
            (edge.source_node.clone(), edge.source_port.clone()),
            channel.clone(),
        );
        port_channels.insert(
            (edge.target_node.clone(), edge.target_port.clone()),
            channel.clone(),
        );
        channels.push((edge.clone(), channel));
    }

    let queue: Option<Arc<dyn QueueBackend>> = config
        .system
        .queue
        .as_ref()
        .map(|settings| MockQueue::start(settings.clone()) as Arc<dyn QueueBackend>);
    let system = Arc::new(config.system.clone());
    let (tx, rx) = mpsc::channel();

    let mut pending = VecDeque::new();
    let mut launched = Vec::new();
    for (path, spec) in &flat.nodes {
        let body = registry.build(spec).map_err(|source| RunError::Build {
            node: path.clone(),
            source,
        })?;
        let channel_of = |port: &str| port_channels.get(&(path.clone(), port.to_string())).cloned();
        let inputs = spec
            .inputs()
            .map(|p| InputPort {
                name: p.name.clone(),
                channel: channel_of(&p.name),
                pending: VecDeque::new(),
                received: 0,
                exhausted_reported: false,
            })
            .collect();
        let outputs = spec
            .outputs()
            .map(|p| OutputPort {
                name: p.name.clone(),
                port_type: p.port_type.clone(),
                channel: channel_of(&p.name),
                sent: 0,
            })
            .collect();
        let status = Arc::new(StatusCell::default());
        let ctx = NodeContext::new(ContextParts {
            path: path.clone(),
            spec: (*spec).clone(),
            inputs,
            outputs,
            stop: stop.clone(),
            status: status.clone(),
            bus: tx.clone(),
            wakeup: wakeups[path.as_str()].clone(),
            node_dir: config.workdir.join(path),
            log_level: config.log_level,
            system: system.clone(),
            queue: queue.clone(),
        });
        pending.push_back(Prepared {
            path: path.clone(),
            body,
            ctx,
        });
        launched.push(Launched {
            path: path.clone(),
            kind: spec.kind.clone(),
            status,
            handle: None,
        });
    }
    drop(tx);
    drop(queue);

    let mut supervisor = Supervisor {
        config,
        stop: stop.clone(),
        started: Instant::now(),
        rx,
        log: io::BufWriter::new(log_file),
        logs: Vec::new(),
        histories: BTreeMap::new(),
        live: Arc::new(AtomicUsize::new(0)),
        pending,
        launched,
        channels,
        previous: None,
    };
    let outcome = catch_unwind(AssertUnwindSafe(|| supervisor.supervise()));
    if outcome.is_err() {
        stop.stop(StopReason::NodeFailed {
            node: "supervisor".into(),
            description: "supervisor panicked".into(),
        });
        // nodes unwind on their own once the stop signal is visible
        supervisor.pending.clear();
    }
    Ok(supervisor.finish(workflow))
}

type Snapshot = (Vec<(NodeStatus, u64)>, Vec<u64>);

struct Supervisor<'a> {
    config: &'a RunConfig,
    stop: StopSignal,
    started: Instant,
    rx: Receiver<RuntimeMessage>,
    log: io::BufWriter<File>,
    logs: Vec<LogRecord>,
    histories: BTreeMap<String, Vec<NodeStatus>>,
    live: Arc<AtomicUsize>,
    pending: VecDeque<Prepared>,
    launched: Vec<Launched>,
    channels: Vec<(crate::graph::FlatEdge, Arc<Channel>)>,
    previous: Option<Snapshot>,
}

// Upper bound on how long the supervisor sleeps between checks for
// finished nodes; keeps short runs from paying a whole poll interval.
const IDLE_WAIT: Duration = Duration::from_millis(5);

impl Supervisor<'_> {
    fn supervise(&mut self) {
        let mut next_poll = self.started + self.config.poll_interval;
        loop {
            self.admit(false);
            if self.pending.is_empty() && self.all_finished() {
                break;
            }
            let now = Instant::now();
            if now >= next_poll {
                next_poll += self.config.poll_interval;
                self.poll();
                continue;
            }
            let wait = (next_poll - now).min(IDLE_WAIT);
            match self.rx.recv_timeout(wait) {
                Ok(msg) => self.handle(msg),
                Err(RecvTimeoutError::Timeout) | Err(RecvTimeoutError::Disconnected) => {}
            }
            while let Ok(msg) = self.rx.try_recv() {
                self.handle(msg);
            }
        }
    }

    fn all_finished(&self) -> bool {
        self.launched
            .iter()
            .all(|l| l.handle.as_ref().is_none_or(JoinHandle::is_finished))
            && self.launched.iter().all(|l| l.handle.is_some())
    }

    fn running(&self) -> usize {
        self.launched
            .iter()
            .filter(|l| l.handle.as_ref().is_some_and(|h| !h.is_finished()))
            .count()
    }

    /// Launches pending nodes up to the concurrency cap; `force` admits one
    /// more regardless, used when every admitted node is blocked.
    fn admit(&mut self, force: bool) {
        let cap = self.config.max_concurrent;
        let mut forced = force;
        while !self.pending.is_empty() {
            if cap != 0 && self.running() >= cap && !forced {
                break;
            }
            forced = false;
            let Prepared {
                path,
                mut body,
                mut ctx,
            } = self.pending.pop_front().expect("checked non-empty");
            let live = self.live.clone();
            live.fetch_add(1, Ordering::SeqCst);
            let handle = thread::Builder::new()
                .name(path.clone())
                .spawn(move || {
                    let result = run_node(body.as_mut(), &mut ctx);
                    let (received, sent) = ctx.port_counts();
                    let metrics = ctx.take_metrics();
                    drop(ctx);
                    drop(body);
                    live.fetch_sub(1, Ordering::SeqCst);
                    NodeFinal {
                        result,
                        received,
                        sent,
                        metrics,
                    }
                })
                .expect("failed to spawn node thread");
            if let Some(l) = self.launched.iter_mut().find(|l| l.path == path) {
                l.handle = Some(handle);
            }
        }
    }

    fn poll(&mut self) {
        if let Some(limit) = self.config.timeout {
            if self.started.elapsed() >= limit && !self.stop.is_set() {
                self.runtime_log(LogLevel::Error, format!("timeout after {limit:?}"));
                self.stop.stop(StopReason::Timeout);
            }
        }
        if self.stop.is_set() {
            self.previous = None;
            return;
        }
        let active: Vec<(&str, (NodeStatus, u64))> = self
            .launched
            .iter()
            .filter(|l| l.handle.is_some())
            .map(|l| (l.path.as_str(), l.status.snapshot()))
            .filter(|(_, (s, _))| !s.is_terminal())
            .collect();
        if active.is_empty() || !active.iter().all(|(_, (s, _))| s.is_waiting()) {
            self.previous = None;
            return;
        }
        if !self.pending.is_empty() {
            self.previous = None;
            self.admit(true);
            return;
        }
        let snapshot: Snapshot = (
            active.iter().map(|(_, s)| *s).collect(),
            self.channels.iter().map(|(_, c)| c.activity()).collect(),
        );
        if self.previous.as_ref() == Some(&snapshot) {
            let mut nodes: Vec<String> = active.iter().map(|(p, _)| p.to_string()).collect();
            nodes.sort();
            self.runtime_log(
                LogLevel::Error,
                format!("deadlock: {} blocked with no channel activity", nodes.join(", ")),
            );
            self.stop.stop(StopReason::Deadlock(nodes));
            self.previous = None;
        } else {
            self.previous = Some(snapshot);
        }
    }

    fn handle(&mut self, msg: RuntimeMessage) {
        match msg.kind {
            MessageKind::Status(status) => {
                self.histories.entry(msg.sender.clone()).or_default().push(status);
                if status.is_terminal() {
                    self.record(msg.wall_clock, LogLevel::Debug, &msg.sender, format!("{status}"));
                }
            }
            MessageKind::Log(level, text) => self.record(msg.wall_clock, level, &msg.sender, text),
            MessageKind::Error {
                description,
                retryable,
            } => {
                let level = if retryable { LogLevel::Warn } else { LogLevel::Error };
                let tag = if retryable { "retryable error" } else { "error" };
                self.record(msg.wall_clock, level, &msg.sender, format!("{tag}: {description}"));
            }
        }
    }

    fn record(&mut self, at: std::time::SystemTime, level: LogLevel, node: &str, message: String) {
        if level < self.config.log_level {
            return;
        }
        let time: chrono::DateTime<chrono::Utc> = at.into();
        let record = LogRecord {
            time: time.to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            level,
            node: node.to_string(),
            message,
        };
        let _ = writeln!(self.log, "{record}");
        if self.config.echo_logs {
            eprintln!("{record}");
        }
        self.logs.push(record);
    }

    fn runtime_log(&mut self, level: LogLevel, message: String) {
        self.record(std::time::SystemTime::now(), level, "runtime", message);
    }

    fn finish(mut self, workflow: &Workflow) -> ExecutionReport {
        let mut finals: BTreeMap<String, (String, Option<NodeFinal>)> = BTreeMap::new();
        for l in &mut self.launched {
            let fin = l.handle.take().and_then(|h| h.join().ok());
            finals.insert(l.path.clone(), (l.kind.clone(), fin));
        }
        while let Ok(msg) = self.rx.try_recv() {
            self.handle(msg);
        }

        let mut nodes = BTreeMap::new();
        for (path, (kind, fin)) in finals {
            let history = self.histories.remove(&path).unwrap_or_default();
            let report = match fin {
                Some(f) => NodeReport {
                    kind,
                    status: f.result.status,
                    retries: f.result.retries,
                    invocations: f.result.invocations,
                    calls: f.result.calls,
                    received: f.received,
                    sent: f.sent,
                    wall_time_ms: f.result.wall_time.as_secs_f64() * 1e3,
                    metrics: f.metrics,
                    error: f.result.error,
                    status_history: history,
                },
                None => NodeReport {
                    kind,
                    status: if history.is_empty() {
                        NodeStatus::NotStarted
                    } else {
                        NodeStatus::Failed
                    },
                    retries: 0,
                    invocations: 0,
                    calls: 0,
                    received: BTreeMap::new(),
                    sent: BTreeMap::new(),
                    wall_time_ms: 0.0,
                    metrics: BTreeMap::new(),
                    error: Some("node context did not terminate cleanly".into()),
                    status_history: history,
                },
            };
            nodes.insert(path, report);
        }

        let outcome = self.outcome(&nodes);
        self.runtime_log(LogLevel::Info, format!("outcome: {outcome}"));
        let _ = self.log.flush();

        let channels = self
            .channels
            .iter()
            .map(|(edge, ch)| {
                let stats = ch.stats();
                ChannelReport {
                    id: edge.id.clone(),
                    source: format!("{}.{}", edge.source_node, edge.source_port),
                    target: format!("{}.{}", edge.target_node, edge.target_port),
                    capacity: edge.capacity,
                    sent: stats.sent,
                    received: stats.received,
                    queued: stats.queued,
                    max_queued: stats.max_queued,
                    closed: stats.closed,
                }
            })
            .collect();

        ExecutionReport {
            workflow: workflow.name.clone(),
            outcome,
            nodes,
            channels,
            logs: self.logs,
            wall_time_ms: self.started.elapsed().as_secs_f64() * 1e3,
            live_contexts: self.live.load(Ordering::SeqCst),
        }
    }

    // failed > deadlock > externally stopped > success
    fn outcome(&self, nodes: &BTreeMap<String, NodeReport>) -> Outcome {
        let reason = self.stop.reason().cloned();
        if let Some(StopReason::NodeFailed { node, description }) = &reason {
            return Outcome::Failed {
                node: node.clone(),
                description: description.clone(),
            };
        }
        if let Some((node, report)) = nodes.iter().find(|(_, r)| r.status == NodeStatus::Failed) {
            return Outcome::Failed {
                node: node.clone(),
                description: report.error.clone().unwrap_or_default(),
            };
        }
        match reason {
            Some(StopReason::Deadlock(nodes)) => Outcome::Deadlock { nodes },
            Some(StopReason::External) => Outcome::ExternallyStopped {
                reason: "stop requested".into(),
            },
            Some(StopReason::Timeout) => Outcome::ExternallyStopped {
                reason: "timeout".into(),
            },
            Some(StopReason::NodeRequested(node)) => Outcome::ExternallyStopped {
                reason: format!("stop requested by {node}"),
            },
            Some(StopReason::NodeFailed { .. }) => unreachable!("handled above"),
            None => {
                let clean = nodes
                    .values()
                    .all(|r| matches!(r.status, NodeStatus::Completed | NodeStatus::Stopped));
                if clean {
                    Outcome::Success
                } else {
                    let (node, r) = nodes
                        .iter()
                        .find(|(_, r)| !matches!(r.status, NodeStatus::Completed | NodeStatus::Stopped))
                        .expect("some node is not clean");
                    Outcome::Failed {
                        node: node.clone(),
                        description: format!("ended in status {}", r.status),
                    }
                }
            }
        }
    }
}
