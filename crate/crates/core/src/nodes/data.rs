use std::time::Duration;

use serde_json::Value;

use super::{assigned_count, assigned_type, item_type_param, list_type, param};
use crate::graph::{NodeSpec, ParamValue, Parameter};
use crate::registry::NodeRegistry;
use crate::runtime::{AnyEvent, NodeBody, NodeContext, NodeError, Received};

pub(super) fn register(r: &mut NodeRegistry) {
    r.register(
        "LoadData",
        |name, assigned| {
            let ty = assigned_type(assigned)?;
            Ok(NodeSpec::new(name, "LoadData")
                .output("out", &ty)
                .param(Parameter::required("value", &ty).help("value to emit"))
                .param(item_type_param()))
        },
        |spec| {
            let value = param::value(spec, "value")
                .cloned()
                .ok_or_else(|| NodeError::fatal("value is unset"))?;
            Ok(Box::new(move |ctx: &mut NodeContext| {
                ctx.send("out", &value.to_json())
            }) as Box<dyn NodeBody>)
        },
    );

    r.register_template(
        NodeSpec::new("log", "LogResult").input("inp", "*").looped(true),
        |_| {
            Ok(Box::new(|ctx: &mut NodeContext| {
                let data = ctx.receive_raw("inp")?;
                if let Received::Value(bytes) = &data {
                    if let Ok(Value::Number(n)) = serde_json::from_slice(bytes) {
                        ctx.record("value", n.as_f64().unwrap_or(f64::NAN));
                    }
                }
                ctx.info(data.describe());
                Ok(())
            }) as Box<dyn NodeBody>)
        },
    );

    r.register(
        "Copy",
        |name, assigned| {
            let ty = assigned_type(assigned)?;
            let k = assigned_count(assigned, "outputs", 2, 1)?;
            let mut spec = NodeSpec::new(name, "Copy")
                .input("inp", &ty)
                .looped(true)
                .param(Parameter::with_default("outputs", "int", ParamValue::Int(2)))
                .param(item_type_param());
            for i in 1..=k {
                spec = spec.output(&format!("out{i}"), &ty);
            }
            Ok(spec)
        },
        |spec| {
            let outputs: Vec<String> = spec.outputs().map(|p| p.name.clone()).collect();
            Ok(Box::new(move |ctx: &mut NodeContext| {
                let data = ctx.receive_raw("inp")?;
                for out in &outputs {
                    ctx.send_raw(out, data.clone())?;
                }
                Ok(())
            }) as Box<dyn NodeBody>)
        },
    );

    r.register(
        "Merge",
        |name, assigned| {
            let ty = assigned_type(assigned)?;
            let k = assigned_count(assigned, "inputs", 2, 1)?;
            let mut spec = NodeSpec::new(name, "Merge")
                .output("out", &ty)
                .looped(true)
                .param(Parameter::with_default("inputs", "int", ParamValue::Int(2)))
                .param(item_type_param());
            for i in 1..=k {
                spec = spec.input(&format!("inp{i}"), &ty);
            }
            Ok(spec)
        },
        |_| {
            Ok(Box::new(|ctx: &mut NodeContext| match ctx.receive_any()? {
                AnyEvent::Item { data, .. } => ctx.send_raw("out", data),
                AnyEvent::Exhausted { .. } => Ok(()),
            }) as Box<dyn NodeBody>)
        },
    );

    r.register(
        "RoundRobinDistribute",
        |name, assigned| {
            let ty = assigned_type(assigned)?;
            let w = assigned_count(assigned, "outputs", 2, 1)?;
            let mut spec = NodeSpec::new(name, "RoundRobinDistribute")
                .input("inp", &ty)
                .looped(true)
                .param(Parameter::with_default("outputs", "int", ParamValue::Int(2)))
                .param(item_type_param());
            for i in 1..=w {
                spec = spec.output(&format!("out{i}"), &ty);
            }
            Ok(spec)
        },
        |spec| {
            let outputs: Vec<String> = spec.outputs().map(|p| p.name.clone()).collect();
            let mut next = 0;
            Ok(Box::new(move |ctx: &mut NodeContext| {
                let data = ctx.receive_raw("inp")?;
                ctx.send_raw(&outputs[next], data)?;
                next = (next + 1) % outputs.len();
                Ok(())
            }) as Box<dyn NodeBody>)
        },
    );

    r.register(
        "Accumulate",
        |name, assigned| {
            let ty = assigned_type(assigned)?;
            Ok(NodeSpec::new(name, "Accumulate")
                .input("inp", &ty)
                .output("out", &list_type(&ty))
                .looped(true)
                .param(Parameter::required("count", "int").help("items per emitted list"))
                .param(item_type_param()))
        },
        |spec| {
            let n = param::int(spec, "count")?;
            if n < 1 {
                return Err(NodeError::fatal("count must be at least 1"));
            }
            let n = n as usize;
            let mut buffer: Vec<Value> = Vec::with_capacity(n);
            Ok(Box::new(move |ctx: &mut NodeContext| {
                match ctx.receive::<Value>("inp") {
                    Ok(v) => {
                        buffer.push(v);
                        if buffer.len() == n {
                            ctx.send("out", &std::mem::take(&mut buffer))?;
                        }
                        Ok(())
                    }
                    Err(e) if e.is_shutdown_signal() && ctx.is_exhausted("inp") => {
                        if !buffer.is_empty() {
                            ctx.send("out", &std::mem::take(&mut buffer))?;
                        }
                        Err(e)
                    }
                    Err(e) => Err(e),
                }
            }) as Box<dyn NodeBody>)
        },
    );

    r.register(
        "Scatter",
        |name, assigned| {
            let ty = assigned_type(assigned)?;
            Ok(NodeSpec::new(name, "Scatter")
                .input("inp", &list_type(&ty))
                .output("out", &ty)
                .looped(true)
                .param(item_type_param()))
        },
        |_| {
            Ok(Box::new(|ctx: &mut NodeContext| {
                let items: Vec<Value> = ctx.receive("inp")?;
                for item in &items {
                    ctx.send("out", item)?;
                }
                Ok(())
            }) as Box<dyn NodeBody>)
        },
    );

    r.register(
        "Delay",
        |name, assigned| {
            let ty = assigned_type(assigned)?;
            Ok(NodeSpec::new(name, "Delay")
                .input("inp", &ty)
                .output("out", &ty)
                .looped(true)
                .param(Parameter::with_default("delay_ms", "float", 0.0.into()))
                .param(item_type_param()))
        },
        |spec| {
            let delay = Duration::from_secs_f64(param::float(spec, "delay_ms")?.max(0.0) / 1e3);
            Ok(Box::new(move |ctx: &mut NodeContext| {
                let data = ctx.receive_raw("inp")?;
                ctx.sleep(delay)?;
                ctx.send_raw("out", data)
            }) as Box<dyn NodeBody>)
        },
    );

    r.register(
        "Chunk",
        |name, assigned| {
            let ty = list_type(&assigned_type(assigned)?);
            Ok(NodeSpec::new(name, "Chunk")
                .input("inp", &ty)
                .output("out", &ty)
                .output("counts", "int")
                .looped(true)
                .param(Parameter::required("size", "int").help("maximum chunk length"))
                .param(item_type_param()))
        },
        |spec| {
            let size = param::int(spec, "size")?;
            if size < 1 {
                return Err(NodeError::fatal("size must be at least 1"));
            }
            let size = size as usize;
            Ok(Box::new(move |ctx: &mut NodeContext| {
                let items: Vec<Value> = ctx.receive("inp")?;
                let chunks: Vec<&[Value]> = items.chunks(size).collect();
                ctx.send("counts", &chunks.len())?;
                for chunk in chunks {
                    ctx.send("out", chunk)?;
                }
                Ok(())
            }) as Box<dyn NodeBody>)
        },
    );

    r.register(
        "Combine",
        |name, assigned| {
            let ty = list_type(&assigned_type(assigned)?);
            Ok(NodeSpec::new(name, "Combine")
                .input("inp", &ty)
                .input("counts", "int")
                .output("out", &ty)
                .looped(true)
                .param(item_type_param()))
        },
        |_| {
            Ok(Box::new(|ctx: &mut NodeContext| {
                let count: usize = ctx.receive("counts")?;
                let mut joined: Vec<Value> = Vec::new();
                for _ in 0..count {
                    let chunk: Vec<Value> = ctx.receive("inp")?;
                    joined.extend(chunk);
                }
                ctx.send("out", &joined)
            }) as Box<dyn NodeBody>)
        },
    );
}
