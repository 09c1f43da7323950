//! Batch-queue submission with an in-memory mock scheduler.
//!
//! The scheduler runs on its own thread and owns all job state; clients
//! talk to it through request/response messages. Jobs start in submission
//! order whenever a slot is free.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::path::PathBuf;
use std::sync::mpsc::{self, Sender};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::command::{command_args, command_parameters, run_command, CommandResult, CommandSpec};
use super::param;
use crate::channel::ChannelError;
use crate::graph::{NodeSpec, ParamValue, Parameter};
use crate::io::QueueSettings;
use crate::registry::NodeRegistry;
use crate::runtime::{NodeBody, NodeContext, NodeError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QueueError {
    #[error("job submission failed: {0}")]
    SubmitFailed(String),
    #[error("job {id} failed: {message}")]
    JobFailed { id: u64, message: String },
    #[error("unknown job {0}")]
    UnknownJob(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Pending,
    Running,
    Done,
    Failed,
}

impl fmt::Display for JobState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            JobState::Pending => "pending",
            JobState::Running => "running",
            JobState::Done => "done",
            JobState::Failed => "failed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resources {
    pub cpus: u32,
    pub memory_mb: u64,
    pub time_limit: Duration,
}

impl Default for Resources {
    fn default() -> Self {
        Resources {
            cpus: 1,
            memory_mb: 1024,
            time_limit: Duration::from_secs(3600),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobRequest {
    pub name: String,
    /// Without a command the job only occupies a slot for the configured
    /// latency.
    pub command: Option<CommandSpec>,
    pub workdir: PathBuf,
    pub resources: Resources,
}

/// Snapshot of a job. Times are milliseconds since the queue started.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobInfo {
    pub id: u64,
    pub name: String,
    pub state: JobState,
    pub submitted_ms: f64,
    pub started_ms: Option<f64>,
    pub finished_ms: Option<f64>,
    pub result: Option<CommandResult>,
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Transition {
    pub id: u64,
    pub from: JobState,
    pub to: JobState,
    pub at_ms: f64,
}

/// Interface to a batch system: the extension point for real schedulers.
pub trait QueueBackend: Send + Sync + fmt::Debug {
    fn submit(&self, job: JobRequest) -> Result<u64, QueueError>;
    fn poll(&self, id: u64) -> Result<JobInfo, QueueError>;
    fn cancel(&self, id: u64) -> Result<(), QueueError>;
}

enum Request {
    Submit(JobRequest, Sender<Result<u64, QueueError>>),
    Poll(u64, Sender<Result<JobInfo, QueueError>>),
    Cancel(u64, Sender<Result<(), QueueError>>),
    Transitions(Sender<Vec<Transition>>),
    Finished(u64, Result<CommandResult, String>),
    Shutdown,
}

#[derive(Debug)]
pub struct MockQueue {
    requests: Mutex<Sender<Request>>,
}

struct Job {
    info: JobInfo,
    request: JobRequest,
    inject_failure: bool,
}

struct Scheduler {
    settings: QueueSettings,
    epoch: Instant,
    jobs: BTreeMap<u64, Job>,
    waiting: VecDeque<u64>,
    running: usize,
    next_id: u64,
    transitions: Vec<Transition>,
    loopback: Sender<Request>,
}

impl Scheduler {
    fn now_ms(&self) -> f64 {
        self.epoch.elapsed().as_secs_f64() * 1e3
    }

    fn transition(&mut self, id: u64, to: JobState) {
        let at_ms = self.now_ms();
        let job = self.jobs.get_mut(&id).expect("job exists");
        let from = job.info.state;
        job.info.state = to;
        match to {
            JobState::Running => job.info.started_ms = Some(at_ms),
            JobState::Done | JobState::Failed => job.info.finished_ms = Some(at_ms),
            JobState::Pending => {}
        }
        self.transitions.push(Transition { id, from, to, at_ms });
    }

    fn submit(&mut self, request: JobRequest) -> u64 {
        self.next_id += 1;
        let id = self.next_id;
        let inject_failure = (id as usize) <= self.settings.fail_first
            || self.settings.fail_jobs.contains(&request.name);
        let info = JobInfo {
            id,
            name: request.name.clone(),
            state: JobState::Pending,
            submitted_ms: self.now_ms(),
            started_ms: None,
            finished_ms: None,
            result: None,
            message: None,
        };
        self.jobs.insert(
            id,
            Job {
                info,
                request,
                inject_failure,
            },
        );
        self.waiting.push_back(id);
        id
    }

    fn schedule(&mut self) {
        while self.running < self.settings.slots.max(1) {
            let Some(id) = self.waiting.pop_front() else {
                break;
            };
            self.transition(id, JobState::Running);
            self.running += 1;
            let job = &self.jobs[&id];
            let latency = Duration::from_millis(self.settings.latency_ms);
            let command = job.request.command.clone().map(|mut c| {
                c.timeout = c.timeout.min(job.request.resources.time_limit);
                c
            });
            let workdir = job.request.workdir.clone();
            let fail = job.inject_failure;
            let back = self.loopback.clone();
            thread::spawn(move || {
                thread::sleep(latency);
                let outcome = if fail {
                    Err("injected failure".to_string())
                } else if let Some(cmd) = command {
                    run_command(&cmd, &workdir, &|| false).map_err(|e| e.to_string())
                } else {
                    Ok(CommandResult {
                        exit_code: 0,
                        stdout: String::new(),
                        stdout_path: PathBuf::new(),
                        files: Vec::new(),
                    })
                };
                let _ = back.send(Request::Finished(id, outcome));
            });
        }
    }

    fn finish(&mut self, id: u64, outcome: Result<CommandResult, String>) {
        let Some(job) = self.jobs.get(&id) else {
            return;
        };
        self.running = self.running.saturating_sub(1);
        if job.info.state != JobState::Running {
            // cancelled while running; the slot is free again
            return;
        }
        match outcome {
            Ok(result) => {
                self.jobs.get_mut(&id).unwrap().info.result = Some(result);
                self.transition(id, JobState::Done);
            }
            Err(message) => {
                self.jobs.get_mut(&id).unwrap().info.message = Some(message);
                self.transition(id, JobState::Failed);
            }
        }
    }

    fn cancel(&mut self, id: u64) -> Result<(), QueueError> {
        let job = self.jobs.get_mut(&id).ok_or(QueueError::UnknownJob(id))?;
        if matches!(job.info.state, JobState::Pending | JobState::Running) {
            job.info.message = Some("cancelled".into());
            if job.info.state == JobState::Pending {
                self.waiting.retain(|w| *w != id);
            }
            self.transition(id, JobState::Failed);
        }
        Ok(())
    }
}

impl MockQueue {
    pub fn start(settings: QueueSettings) -> Arc<MockQueue> {
        let (tx, rx) = mpsc::channel::<Request>();
        let mut scheduler = Scheduler {
            settings,
            epoch: Instant::now(),
            jobs: BTreeMap::new(),
            waiting: VecDeque::new(),
            running: 0,
            next_id: 0,
            transitions: Vec::new(),
            loopback: tx.clone(),
        };
        thread::Builder::new()
            .name("mock-queue".into())
            .spawn(move || {
                while let Ok(request) = rx.recv() {
                    match request {
                        Request::Submit(job, reply) => {
                            let id = scheduler.submit(job);
                            let _ = reply.send(Ok(id));
                        }
                        Request::Poll(id, reply) => {
                            let info = scheduler
                                .jobs
                                .get(&id)
                                .map(|j| j.info.clone())
                                .ok_or(QueueError::UnknownJob(id));
                            let _ = reply.send(info);
                        }
                        Request::Cancel(id, reply) => {
                            let _ = reply.send(scheduler.cancel(id));
                        }
                        Request::Transitions(reply) => {
                            let _ = reply.send(scheduler.transitions.clone());
                        }
                        Request::Finished(id, outcome) => scheduler.finish(id, outcome),
                        Request::Shutdown => break,
                    }
                    scheduler.schedule();
                }
            })
            .expect("failed to spawn queue scheduler");
        Arc::new(MockQueue {
            requests: Mutex::new(tx),
        })
    }

    fn call<T>(&self, make: impl FnOnce(Sender<T>) -> Request) -> Option<T> {
        let (tx, rx) = mpsc::channel();
        self.requests.lock().unwrap().send(make(tx)).ok()?;
        rx.recv().ok()
    }

    /// Every state change so far, in order.
    pub fn transitions(&self) -> Vec<Transition> {
        self.call(Request::Transitions).unwrap_or_default()
    }
}

impl Drop for MockQueue {
    fn drop(&mut self) {
        if let Ok(tx) = self.requests.lock() {
            let _ = tx.send(Request::Shutdown);
        }
    }
}

impl QueueBackend for MockQueue {
    fn submit(&self, job: JobRequest) -> Result<u64, QueueError> {
        self.call(|tx| Request::Submit(job, tx))
            .unwrap_or_else(|| Err(QueueError::SubmitFailed("scheduler unavailable".into())))
    }

    fn poll(&self, id: u64) -> Result<JobInfo, QueueError> {
        self.call(|tx| Request::Poll(id, tx))
            .unwrap_or(Err(QueueError::UnknownJob(id)))
    }

    fn cancel(&self, id: u64) -> Result<(), QueueError> {
        self.call(|tx| Request::Cancel(id, tx))
            .unwrap_or(Err(QueueError::UnknownJob(id)))
    }
}

fn submit_and_wait(ctx: &mut NodeContext) -> Result<(), NodeError> {
    let queue = ctx
        .queue()
        .ok_or_else(|| NodeError::fatal("no queue backend configured"))?;
    let args = command_args(ctx)?;
    let workdir = ctx.workdir()?;
    let spec = ctx.spec().clone();
    let command = match param::value(&spec, "command") {
        Some(_) => Some(CommandSpec::from_node(&spec, &args, &workdir, ctx.system())?),
        None => None,
    };
    let poll_ms = match param::value(&spec, "poll_interval_ms") {
        Some(v) => v.as_i64().unwrap_or(50).max(1) as u64,
        None => ctx
            .system()
            .queue
            .as_ref()
            .map_or(50, |q| q.poll_interval_ms.max(1)),
    };
    let request = JobRequest {
        name: ctx.path().to_string(),
        command,
        workdir,
        resources: Resources {
            cpus: param::int(&spec, "cpus")?.max(1) as u32,
            memory_mb: param::int(&spec, "memory_mb")?.max(0) as u64,
            time_limit: Duration::from_secs_f64(param::float(&spec, "time_limit")?.max(0.001)),
        },
    };
    let id = queue.submit(request)?;
    let mut last = JobState::Pending;
    ctx.debug(format!("job {id} submitted ({last})"));
    loop {
        let info = queue.poll(id)?;
        if info.state != last {
            ctx.debug(format!("job {id} {last} -> {}", info.state));
            last = info.state;
        }
        match info.state {
            JobState::Done => {
                ctx.send("out", &info)?;
                break;
            }
            JobState::Failed => {
                return Err(QueueError::JobFailed {
                    id,
                    message: info.message.unwrap_or_default(),
                }
                .into())
            }
            JobState::Pending | JobState::Running => {}
        }
        if let Err(e) = ctx.sleep(Duration::from_millis(poll_ms)) {
            let _ = queue.cancel(id);
            return Err(e);
        }
    }
    if !ctx.is_connected("inp") {
        ctx.complete();
    }
    Ok(())
}

pub(super) fn register(r: &mut NodeRegistry) {
    let mut template = NodeSpec::new("submit", "QueueSubmit")
        .optional_input("inp", "*")
        .output("out", "queue-result")
        .looped(true)
        .param(Parameter::with_default("cpus", "int", ParamValue::Int(1)))
        .param(Parameter::with_default("memory_mb", "int", ParamValue::Int(1024)))
        .param(Parameter::with_default("time_limit", "float", 3600.0.into()).help("seconds"))
        .param(Parameter::optional("poll_interval_ms", "int"));
    for mut p in command_parameters() {
        if p.name == "command" {
            p.required = false;
        }
        template = template.param(p);
    }
    r.register_template(template, |_| {
        Ok(Box::new(|ctx: &mut NodeContext| match submit_and_wait(ctx) {
            Err(NodeError::Channel(ChannelError::Cancelled)) => {
                Err(ChannelError::Cancelled.into())
            }
            other => other,
        }) as Box<dyn NodeBody>)
    });
}
