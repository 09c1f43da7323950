use std::any::Any;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use super::context::{NodeContext, ShutdownCause};
use super::error::NodeError;
use super::status::NodeStatus;
use crate::signal::StopReason;

/// The computation performed by a node. Looped nodes call `run` again after
/// each clean return, so state kept in `self` persists across invocations.
pub trait NodeBody: Send {
    fn run(&mut self, ctx: &mut NodeContext) -> Result<(), NodeError>;
}

impl<F> NodeBody for F
where
    F: FnMut(&mut NodeContext) -> Result<(), NodeError> + Send,
{
    fn run(&mut self, ctx: &mut NodeContext) -> Result<(), NodeError> {
        self(ctx)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LifecycleResult {
    pub status: NodeStatus,
    pub retries: u32,
    /// Invocations that returned cleanly.
    pub invocations: u64,
    /// All invocations, including failed ones and the one that observed
    /// the shutdown condition.
    pub calls: u64,
    pub error: Option<String>,
    pub wall_time: Duration,
}

fn panic_message(payload: Box<dyn Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "unknown panic".to_string()
    }
}

// Pause before re-invoking a looped body whose port closed while the node
// as a whole is not ready to shut down.
const CLOSED_PORT_BACKOFF: Duration = Duration::from_millis(5);

/// Drives one node from launch to a terminal status, then closes all of
/// its ports so the shutdown cascades to its neighbours.
pub(crate) fn run_node(body: &mut dyn NodeBody, ctx: &mut NodeContext) -> LifecycleResult {
    let started = Instant::now();
    let looped = ctx.spec().looped;
    let max_retries = ctx.spec().max_retries;
    let mut retries = 0;
    let mut unit_failures = 0;
    let mut invocations = 0;
    let mut calls = 0;
    let mut error = None;
    ctx.set_status(NodeStatus::Running);

    let status = loop {
        if ctx.stop_signal().is_set() {
            break NodeStatus::Stopped;
        }
        ctx.begin_invocation(unit_failures);
        calls += 1;
        let outcome = catch_unwind(AssertUnwindSafe(|| body.run(ctx)))
            .unwrap_or_else(|p| Err(NodeError::fatal(format!("panic: {}", panic_message(p)))));
        match outcome {
            Ok(()) => {
                ctx.commit();
                invocations += 1;
                unit_failures = 0;
                if !looped || ctx.completion_requested() {
                    break NodeStatus::Completed;
                }
                match ctx.should_shutdown() {
                    Some(ShutdownCause::StopSignal) => break NodeStatus::Stopped,
                    Some(_) => break NodeStatus::Completed,
                    None => {}
                }
            }
            Err(e) if e.is_shutdown_signal() => {
                ctx.commit();
                unit_failures = 0;
                if ctx.stop_signal().is_set() {
                    break NodeStatus::Stopped;
                }
                if !looped || ctx.completion_requested() || ctx.should_shutdown().is_some() {
                    break NodeStatus::Completed;
                }
                std::thread::sleep(CLOSED_PORT_BACKOFF);
            }
            Err(e) => {
                let retryable = e.is_retryable();
                let description = e.to_string();
                ctx.report_error(description.clone(), retryable);
                if retryable && unit_failures < max_retries && !ctx.stop_signal().is_set() {
                    ctx.rollback();
                    unit_failures += 1;
                    retries += 1;
                    ctx.warn(format!(
                        "attempt {unit_failures} of {max_retries} retries: {description}"
                    ));
                    continue;
                }
                ctx.stop_signal().stop(StopReason::NodeFailed {
                    node: ctx.path().to_string(),
                    description: description.clone(),
                });
                error = Some(description);
                break NodeStatus::Failed;
            }
        }
    };

    ctx.close_all();
    ctx.set_status(status);
    LifecycleResult {
        status,
        retries,
        invocations,
        calls,
        error,
        wall_time: started.elapsed(),
    }
}
