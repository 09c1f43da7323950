use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::mpsc::Sender;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::error::NodeError;
use super::status::{LogLevel, MessageKind, NodeStatus, RuntimeMessage, StatusCell};
use crate::channel::{Channel, ChannelError, Item, Payload, Wakeup};
use crate::graph::{NodeSpec, ParamValue, PortType};
use crate::io::SystemConfig;
use crate::nodes::QueueBackend;
use crate::signal::{StopReason, StopSignal, CANCEL_CHECK_INTERVAL};

/// A payload as seen by a node: decoded bytes of a value, or file paths
/// already moved into the node's own directory.
#[derive(Debug, Clone, PartialEq)]
pub enum Received {
    Value(Vec<u8>),
    Files(Vec<PathBuf>),
}

impl Received {
    pub fn value<T: Serialize>(value: &T) -> Result<Self, NodeError> {
        serde_json::to_vec(value)
            .map(Received::Value)
            .map_err(|e| NodeError::fatal(format!("cannot serialize value: {e}")))
    }

    pub fn decode<T: DeserializeOwned>(&self, port: &str) -> Result<T, NodeError> {
        match self {
            Received::Value(bytes) => {
                serde_json::from_slice(bytes).map_err(|e| NodeError::Decode {
                    port: port.to_string(),
                    message: e.to_string(),
                })
            }
            Received::Files(_) => Err(NodeError::Decode {
                port: port.to_string(),
                message: "expected a value, got a file set".to_string(),
            }),
        }
    }

    /// Short human-readable rendering for log lines.
    pub fn describe(&self) -> String {
        match self {
            Received::Value(bytes) => String::from_utf8_lossy(bytes).into_owned(),
            Received::Files(paths) => {
                let shown: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
                format!("files [{}]", shown.join(", "))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnyEvent {
    Item { port: String, data: Received },
    /// Emitted once per input when it becomes closed and drained.
    Exhausted { port: String },
}

/// Which shutdown heuristic fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShutdownCause {
    InputsExhausted,
    OutputsClosed,
    StopSignal,
}

pub(crate) struct InputPort {
    pub name: String,
    pub channel: Option<Arc<Channel>>,
    pub pending: VecDeque<Received>,
    pub received: u64,
    pub exhausted_reported: bool,
}

pub(crate) struct OutputPort {
    pub name: String,
    pub port_type: PortType,
    pub channel: Option<Arc<Channel>>,
    pub sent: u64,
}

pub(crate) struct ContextParts {
    pub path: String,
    pub spec: NodeSpec,
    pub inputs: Vec<InputPort>,
    pub outputs: Vec<OutputPort>,
    pub stop: StopSignal,
    pub status: Arc<StatusCell>,
    pub bus: Sender<RuntimeMessage>,
    pub wakeup: Arc<Wakeup>,
    pub node_dir: PathBuf,
    pub log_level: LogLevel,
    pub system: Arc<SystemConfig>,
    pub queue: Option<Arc<dyn QueueBackend>>,
}

/// Everything a node body may touch: its own ports, frozen parameters,
/// working directory and logger.
pub struct NodeContext {
    path: String,
    spec: NodeSpec,
    inputs: Vec<InputPort>,
    outputs: Vec<OutputPort>,
    stop: StopSignal,
    status: Arc<StatusCell>,
    bus: Sender<RuntimeMessage>,
    wakeup: Arc<Wakeup>,
    node_dir: PathBuf,
    log_level: LogLevel,
    system: Arc<SystemConfig>,
    queue: Option<Arc<dyn QueueBackend>>,
    attempt: u32,
    attempt_ready: bool,
    attempt_log: Vec<(usize, Received)>,
    complete_requested: bool,
    metrics: BTreeMap<String, Vec<f64>>,
    next_any: usize,
}

impl NodeContext {
    pub(crate) fn new(parts: ContextParts) -> Self {
        NodeContext {
            path: parts.path,
            spec: parts.spec,
            inputs: parts.inputs,
            outputs: parts.outputs,
            stop: parts.stop,
            status: parts.status,
            bus: parts.bus,
            wakeup: parts.wakeup,
            node_dir: parts.node_dir,
            log_level: parts.log_level,
            system: parts.system,
            queue: parts.queue,
            attempt: 0,
            attempt_ready: false,
            attempt_log: Vec::new(),
            complete_requested: false,
            metrics: BTreeMap::new(),
            next_any: 0,
        }
    }

    /// Slash-delimited path of this node in the workflow tree.
    pub fn path(&self) -> &str {
        &self.path
    }

    pub fn spec(&self) -> &NodeSpec {
        &self.spec
    }

    pub fn param(&self, name: &str) -> Option<&ParamValue> {
        self.spec.parameter(name)?.effective()
    }

    pub fn system(&self) -> &SystemConfig {
        &self.system
    }

    pub fn queue(&self) -> Option<Arc<dyn QueueBackend>> {
        self.queue.clone()
    }

    /// Retry index within the current unit of work (0 on first try).
    pub fn attempt(&self) -> u32 {
        self.attempt
    }

    pub fn node_dir(&self) -> &Path {
        &self.node_dir
    }

    /// Clean per-attempt working directory, created on first use.
    pub fn workdir(&mut self) -> Result<PathBuf, NodeError> {
        let dir = self.node_dir.join(format!("attempt-{}", self.attempt));
        if !self.attempt_ready {
            if dir.exists() {
                fs::remove_dir_all(&dir).map_err(|e| {
                    NodeError::retryable(format!("cannot reset {}: {e}", dir.display()))
                })?;
            }
            fs::create_dir_all(&dir).map_err(|e| {
                NodeError::retryable(format!("cannot create {}: {e}", dir.display()))
            })?;
            self.attempt_ready = true;
        }
        Ok(dir)
    }

    fn input_index(&self, port: &str) -> Result<usize, NodeError> {
        self.inputs
            .iter()
            .position(|p| p.name == port)
            .ok_or_else(|| NodeError::UnknownPort(port.to_string()))
    }

    fn output_index(&self, port: &str) -> Result<usize, NodeError> {
        self.outputs
            .iter()
            .position(|p| p.name == port)
            .ok_or_else(|| NodeError::UnknownPort(port.to_string()))
    }

    pub fn is_connected(&self, port: &str) -> bool {
        self.inputs
            .iter()
            .find(|p| p.name == port)
            .map(|p| p.channel.is_some())
            .or_else(|| {
                self.outputs
                    .iter()
                    .find(|p| p.name == port)
                    .map(|p| p.channel.is_some())
            })
            .unwrap_or(false)
    }

    /// True when the input can never yield another item.
    pub fn is_exhausted(&self, port: &str) -> bool {
        self.inputs
            .iter()
            .find(|p| p.name == port)
            .is_none_or(|p| p.pending.is_empty() && p.channel.as_ref().is_none_or(|c| c.is_drained()))
    }

    fn unpack(&self, channel: &Channel, item: Item) -> Result<Received, NodeError> {
        match item.payload {
            Payload::Bytes(bytes) => Ok(Received::Value(bytes)),
            Payload::Files(set) => Ok(Received::Files(
                channel.claim_files(set, &self.node_dir.join("inbox"))?,
            )),
        }
    }

    fn accept(&mut self, index: usize, data: Received, fresh: bool) -> Received {
        if fresh {
            self.inputs[index].received += 1;
        }
        self.attempt_log.push((index, data.clone()));
        data
    }

    /// Blocking receive of the next payload on `port`.
    pub fn receive_raw(&mut self, port: &str) -> Result<Received, NodeError> {
        let i = self.input_index(port)?;
        if let Some(data) = self.inputs[i].pending.pop_front() {
            return Ok(self.accept(i, data, false));
        }
        let Some(channel) = self.inputs[i].channel.clone() else {
            return Err(ChannelError::ClosedAndEmpty.into());
        };
        let status = self.status.clone();
        let mut waited = false;
        let item = channel.receive_observed(&mut || {
            waited = true;
            status.set(NodeStatus::WaitingForInput);
        });
        if waited {
            self.status.set(NodeStatus::Running);
        }
        let data = self.unpack(&channel, item?)?;
        Ok(self.accept(i, data, true))
    }

    pub fn receive<T: DeserializeOwned>(&mut self, port: &str) -> Result<T, NodeError> {
        self.receive_raw(port)?.decode(port)
    }

    /// Non-blocking receive: `Ok(None)` while the input is open and empty.
    pub fn try_receive_raw(&mut self, port: &str) -> Result<Option<Received>, NodeError> {
        let i = self.input_index(port)?;
        if let Some(data) = self.inputs[i].pending.pop_front() {
            return Ok(Some(self.accept(i, data, false)));
        }
        let Some(channel) = self.inputs[i].channel.clone() else {
            return Err(ChannelError::ClosedAndEmpty.into());
        };
        match channel.try_receive()? {
            Some(item) => {
                let data = self.unpack(&channel, item)?;
                Ok(Some(self.accept(i, data, true)))
            }
            None => Ok(None),
        }
    }

    pub fn try_receive<T: DeserializeOwned>(&mut self, port: &str) -> Result<Option<T>, NodeError> {
        self.try_receive_raw(port)?
            .map(|r| r.decode(port))
            .transpose()
    }

    /// Receives a file set and returns the paths now owned by this node.
    pub fn receive_files(&mut self, port: &str) -> Result<Vec<PathBuf>, NodeError> {
        match self.receive_raw(port)? {
            Received::Files(paths) => Ok(paths),
            Received::Value(_) => Err(NodeError::Decode {
                port: port.to_string(),
                message: "expected a file set, got a value".to_string(),
            }),
        }
    }

    /// First-come receive over every input.
    pub fn receive_any(&mut self) -> Result<AnyEvent, NodeError> {
        let all: Vec<usize> = (0..self.inputs.len()).collect();
        self.receive_any_indexed(&all)
    }

    /// First-come receive over the named inputs.
    pub fn receive_any_of(&mut self, ports: &[&str]) -> Result<AnyEvent, NodeError> {
        let idx = ports
            .iter()
            .map(|p| self.input_index(p))
            .collect::<Result<Vec<_>, _>>()?;
        self.receive_any_indexed(&idx)
    }

    fn receive_any_indexed(&mut self, ports: &[usize]) -> Result<AnyEvent, NodeError> {
        if ports.is_empty() {
            return Err(ChannelError::ClosedAndEmpty.into());
        }
        let mut waited = false;
        let result = loop {
            let generation = self.wakeup.generation();
            let start = self.next_any;
            let mut all_done = true;
            let mut event = None;
            for k in 0..ports.len() {
                let i = ports[(start + k) % ports.len()];
                if let Some(data) = self.inputs[i].pending.pop_front() {
                    event = Some(Ok((i, Some(self.accept(i, data, false)))));
                    break;
                }
                let polled = match self.inputs[i].channel.clone() {
                    None => Err(ChannelError::ClosedAndEmpty),
                    Some(ch) => ch.try_receive().map(|item| item.map(|it| (ch, it))),
                };
                match polled {
                    Ok(Some((ch, item))) => {
                        event = Some(self.unpack(&ch, item).map(|d| (i, Some(self.accept(i, d, true)))));
                        break;
                    }
                    Ok(None) => all_done = false,
                    Err(ChannelError::ClosedAndEmpty) => {
                        if !self.inputs[i].exhausted_reported {
                            self.inputs[i].exhausted_reported = true;
                            event = Some(Ok((i, None)));
                            break;
                        }
                    }
                    Err(e) => {
                        event = Some(Err(e.into()));
                        break;
                    }
                }
            }
            if let Some(ev) = event {
                break ev;
            }
            if all_done {
                break Err(ChannelError::ClosedAndEmpty.into());
            }
            if self.stop.is_set() {
                break Err(ChannelError::Cancelled.into());
            }
            if !waited {
                waited = true;
                self.status.set(NodeStatus::WaitingForInput);
            }
            self.wakeup.wait_past(generation, CANCEL_CHECK_INTERVAL);
        };
        if waited {
            self.status.set(NodeStatus::Running);
        }
        self.next_any = self.next_any.wrapping_add(1);
        let (i, data) = result?;
        let port = self.inputs[i].name.clone();
        Ok(match data {
            Some(data) => AnyEvent::Item { port, data },
            None => AnyEvent::Exhausted { port },
        })
    }

    /// Sends a payload. Items sent to an unconnected output are dropped.
    pub fn send_raw(&mut self, port: &str, data: Received) -> Result<(), NodeError> {
        let i = self.output_index(port)?;
        let Some(channel) = self.outputs[i].channel.clone() else {
            return Ok(());
        };
        let status = self.status.clone();
        let mut waited = false;
        let mut on_block = || {
            waited = true;
            status.set(NodeStatus::WaitingForOutput);
        };
        let sent = match data {
            Received::Value(bytes) => channel.send_observed(
                Item::bytes(self.outputs[i].port_type.clone(), bytes),
                &mut on_block,
            ),
            Received::Files(paths) => channel.send_files_observed(&paths, &mut on_block),
        };
        if waited {
            self.status.set(NodeStatus::Running);
        }
        sent?;
        self.outputs[i].sent += 1;
        Ok(())
    }

    pub fn send<T: Serialize + ?Sized>(&mut self, port: &str, value: &T) -> Result<(), NodeError> {
        let bytes = serde_json::to_vec(value)
            .map_err(|e| NodeError::fatal(format!("cannot serialize value for {port}: {e}")))?;
        self.send_raw(port, Received::Value(bytes))
    }

    /// Copies `files` into the channel's staging area and sends them.
    pub fn send_files(&mut self, port: &str, files: &[PathBuf]) -> Result<(), NodeError> {
        self.send_raw(port, Received::Files(files.to_vec()))
    }

    pub fn close_port(&mut self, port: &str) -> Result<(), NodeError> {
        if let Ok(i) = self.output_index(port) {
            if let Some(c) = &self.outputs[i].channel {
                c.close();
            }
            return Ok(());
        }
        let i = self.input_index(port)?;
        if let Some(c) = &self.inputs[i].channel {
            c.close();
        }
        Ok(())
    }

    pub fn log(&self, level: LogLevel, message: impl Into<String>) {
        if level >= self.log_level {
            let _ = self.bus.send(RuntimeMessage::new(
                &self.path,
                MessageKind::Log(level, message.into()),
            ));
        }
    }

    pub fn debug(&self, message: impl Into<String>) {
        self.log(LogLevel::Debug, message)
    }

    pub fn info(&self, message: impl Into<String>) {
        self.log(LogLevel::Info, message)
    }

    pub fn warn(&self, message: impl Into<String>) {
        self.log(LogLevel::Warn, message)
    }

    /// Appends a numeric observation to this node's report.
    pub fn record(&mut self, metric: &str, value: f64) {
        self.metrics.entry(metric.to_string()).or_default().push(value);
    }

    /// Ends a looped node after the current invocation returns.
    pub fn complete(&mut self) {
        self.complete_requested = true;
    }

    /// Raises the global stop signal for the whole workflow.
    pub fn stop_workflow(&self) {
        self.stop.stop(StopReason::NodeRequested(self.path.clone()));
    }

    pub fn stop_requested(&self) -> bool {
        self.stop.is_set()
    }

    /// Sleeps in small slices, giving up early with `Cancelled` on stop.
    pub fn sleep(&self, duration: Duration) -> Result<(), NodeError> {
        let deadline = Instant::now() + duration;
        loop {
            if self.stop.is_set() {
                return Err(ChannelError::Cancelled.into());
            }
            let now = Instant::now();
            if now >= deadline {
                return Ok(());
            }
            std::thread::sleep((deadline - now).min(CANCEL_CHECK_INTERVAL));
        }
    }

    pub(crate) fn set_status(&self, status: NodeStatus) {
        self.status.set(status);
        if !status.is_waiting() {
            let _ = self
                .bus
                .send(RuntimeMessage::new(&self.path, MessageKind::Status(status)));
        }
    }

    pub(crate) fn report_error(&self, description: String, retryable: bool) {
        let _ = self.bus.send(RuntimeMessage::new(
            &self.path,
            MessageKind::Error {
                description,
                retryable,
            },
        ));
    }

    pub(crate) fn stop_signal(&self) -> &StopSignal {
        &self.stop
    }

    pub(crate) fn completion_requested(&self) -> bool {
        self.complete_requested
    }

    pub(crate) fn begin_invocation(&mut self, attempt: u32) {
        self.attempt = attempt;
        self.attempt_ready = false;
    }

    /// The invocation finished; its inputs are consumed for good.
    pub(crate) fn commit(&mut self) {
        self.attempt_log.clear();
    }

    /// The invocation failed; re-offer what it received to the next try.
    pub(crate) fn rollback(&mut self) {
        for (i, data) in self.attempt_log.drain(..).rev() {
            self.inputs[i].pending.push_front(data);
        }
        self.complete_requested = false;
    }

    pub(crate) fn should_shutdown(&self) -> Option<ShutdownCause> {
        if self.stop.is_set() {
            return Some(ShutdownCause::StopSignal);
        }
        let inputs_done = !self.inputs.is_empty()
            && self.inputs.iter().all(|p| {
                p.pending.is_empty() && p.channel.as_ref().is_none_or(|c| c.is_drained())
            });
        if inputs_done {
            return Some(ShutdownCause::InputsExhausted);
        }
        let mut connected = self.outputs.iter().filter_map(|p| p.channel.as_ref()).peekable();
        if connected.peek().is_some() && connected.all(|c| c.is_closed()) {
            return Some(ShutdownCause::OutputsClosed);
        }
        None
    }

    pub(crate) fn close_all(&self) {
        for c in self.inputs.iter().filter_map(|p| p.channel.as_ref()) {
            c.close();
        }
        for c in self.outputs.iter().filter_map(|p| p.channel.as_ref()) {
            c.close();
        }
    }

    pub(crate) fn port_counts(&self) -> (BTreeMap<String, u64>, BTreeMap<String, u64>) {
        let received = self.inputs.iter().map(|p| (p.name.clone(), p.received)).collect();
        let sent = self.outputs.iter().map(|p| (p.name.clone(), p.sent)).collect();
        (received, sent)
    }

    pub(crate) fn take_metrics(&mut self) -> BTreeMap<String, Vec<f64>> {
        std::mem::take(&mut self.metrics)
    }
}
