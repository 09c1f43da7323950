//! Plumbing for iterative subgraphs: `IterationMerge -> body -> IterationRouter`
//! with a feedback edge from the router back to the merge.
//!
//! The merge feeds items into the body and tells the router, on a side
//! channel, how many times each item has passed through the body. The router
//! either releases an item (predicate satisfied or iteration cap reached)
//! and sends an `Exited` notice back, or returns it with its counter. The
//! merge therefore always knows how many items are inside the loop and can
//! complete once its external input is drained and the loop is empty.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{assigned_type, item_type_param, param, Predicate};
use crate::graph::{NodeSpec, ParamValue, Parameter};
use crate::registry::NodeRegistry;
use crate::runtime::{AnyEvent, NodeBody, NodeContext, NodeError};

pub const ENVELOPE_TYPE: &str = "iteration-envelope";

/// Message on the feedback edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Envelope {
    Again { iteration: u64, value: Value },
    Exited,
}

struct MergeState {
    window: usize,
    in_flight: usize,
    external_done: bool,
}

impl MergeState {
    fn step(&mut self, ctx: &mut NodeContext) -> Result<(), NodeError> {
        let event = if self.external_done || self.in_flight >= self.window {
            match ctx.receive_raw("feedback") {
                Ok(data) => AnyEvent::Item {
                    port: "feedback".into(),
                    data,
                },
                Err(e) if e.is_shutdown_signal() && ctx.is_exhausted("feedback") => {
                    AnyEvent::Exhausted {
                        port: "feedback".into(),
                    }
                }
                Err(e) => return Err(e),
            }
        } else {
            ctx.receive_any_of(&["feedback", "inp"])?
        };
        match event {
            AnyEvent::Item { port, data } if port == "inp" => {
                self.in_flight += 1;
                ctx.send("meta", &1u64)?;
                ctx.send_raw("out", data)?;
            }
            AnyEvent::Item { port, data } => match data.decode::<Envelope>(&port)? {
                Envelope::Again { iteration, value } => {
                    ctx.send("meta", &(iteration + 1))?;
                    ctx.send("out", &value)?;
                }
                Envelope::Exited => self.in_flight = self.in_flight.saturating_sub(1),
            },
            AnyEvent::Exhausted { port } if port == "inp" => self.external_done = true,
            AnyEvent::Exhausted { .. } => {
                if self.in_flight > 0 {
                    return Err(NodeError::fatal(format!(
                        "feedback closed with {} items still in the loop",
                        self.in_flight
                    )));
                }
                self.external_done = true;
            }
        }
        if self.external_done && self.in_flight == 0 {
            ctx.complete();
        }
        Ok(())
    }
}

pub(super) fn register(r: &mut NodeRegistry) {
    r.register(
        "IterationMerge",
        |name, assigned| {
            let ty = assigned_type(assigned)?;
            Ok(NodeSpec::new(name, "IterationMerge")
                .input("inp", &ty)
                .input("feedback", ENVELOPE_TYPE)
                .output("out", &ty)
                .output("meta", "int")
                .looped(true)
                .param(
                    Parameter::with_default("window", "int", ParamValue::Int(8))
                        .help("maximum items inside the loop at once"),
                )
                .param(item_type_param()))
        },
        |spec| {
            let window = param::int(spec, "window")?;
            if window < 1 {
                return Err(NodeError::fatal("window must be at least 1"));
            }
            let mut state = MergeState {
                window: window as usize,
                in_flight: 0,
                external_done: false,
            };
            Ok(Box::new(move |ctx: &mut NodeContext| state.step(ctx)) as Box<dyn NodeBody>)
        },
    );

    r.register(
        "IterationRouter",
        |name, assigned| {
            let ty = assigned_type(assigned)?;
            let mut spec = NodeSpec::new(name, "IterationRouter")
                .input("inp", &ty)
                .input("meta", "int")
                .output("out", &ty)
                .output("feedback", ENVELOPE_TYPE)
                .looped(true)
                .param(
                    Parameter::with_default("max_iterations", "int", ParamValue::Int(0))
                        .help("iteration cap per item; 0 for none"),
                )
                .param(item_type_param());
            for p in Predicate::parameters() {
                spec = spec.param(p);
            }
            Ok(spec)
        },
        |spec| {
            let predicate = Predicate::from_spec(spec)?;
            let cap = param::int(spec, "max_iterations")?.max(0) as u64;
            Ok(Box::new(move |ctx: &mut NodeContext| {
                let value: Value = ctx.receive("inp")?;
                let iteration: u64 = ctx.receive("meta")?;
                let done = predicate
                    .evaluate(&value)
                    .map_err(|e| NodeError::retryable(format!("predicate error: {e}")))?;
                let capped = !done && cap > 0 && iteration >= cap;
                if done || capped {
                    ctx.record("iterations", iteration as f64);
                    if capped {
                        ctx.record("cap_reached", iteration as f64);
                        ctx.warn(format!("iteration cap {cap} reached for {value}"));
                    }
                    ctx.send("out", &value)?;
                    ctx.send("feedback", &Envelope::Exited)
                } else {
                    ctx.send("feedback", &Envelope::Again { iteration, value })
                }
            }) as Box<dyn NodeBody>)
        },
    );
}
