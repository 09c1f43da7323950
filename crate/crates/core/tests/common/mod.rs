#![allow(dead_code)]

pub mod gen;

use std::collections::BTreeMap;
use std::time::Duration;

use loopflow::graph::NodeSpec;
use loopflow::nodes::param;
use loopflow::runtime::{LogLevel, NodeBody, NodeContext, NodeError};
use loopflow::{execute, ExecutionReport, NodeRegistry, ParamValue, Parameter, RunConfig, Workflow};
use serde_json::Value;

/// Std library plus small kinds used across the runtime tests.
pub fn registry() -> NodeRegistry {
    let mut r = NodeRegistry::with_std();

    // Emits each entry of `values` as its own item.
    r.register_template(
        NodeSpec::new("t", "Emit")
            .output("out", "int")
            .param(Parameter::required("values", "list<int>"))
            .param(Parameter::with_default("delay_ms", "float", 0.0.into())),
        |spec| {
            let values = param::ints(spec, "values")?;
            let delay = ms(param::float(spec, "delay_ms")?);
            Ok(boxed(move |ctx: &mut NodeContext| {
                for v in &values {
                    ctx.sleep(delay)?;
                    ctx.send("out", v)?;
                }
                Ok(())
            }))
        },
    );

    // Emits `values` as a single list item.
    r.register_template(
        NodeSpec::new("t", "EmitList")
            .output("out", "list<int>")
            .param(Parameter::required("values", "list<int>")),
        |spec| {
            let values = param::ints(spec, "values")?;
            Ok(boxed(move |ctx: &mut NodeContext| ctx.send("out", &values)))
        },
    );

    r.register_template(
        NodeSpec::new("t", "Inc")
            .input("inp", "int")
            .output("out", "int")
            .looped(true)
            .param(Parameter::with_default("delay_ms", "float", 0.0.into())),
        |spec| {
            let delay = ms(param::float(spec, "delay_ms")?);
            Ok(boxed(move |ctx: &mut NodeContext| {
                let x: i64 = ctx.receive("inp")?;
                ctx.sleep(delay)?;
                ctx.send("out", &(x + 1))
            }))
        },
    );

    // Identity over lists with a per-call delay; records chunk lengths.
    r.register_template(
        NodeSpec::new("t", "ListStage")
            .input("inp", "list<int>")
            .output("out", "list<int>")
            .looped(true)
            .param(Parameter::with_default("delay_ms", "float", 0.0.into()))
            .param(Parameter::with_default("scale", "int", ParamValue::Int(1))),
        |spec| {
            let delay = ms(param::float(spec, "delay_ms")?);
            let scale = param::int(spec, "scale")?;
            Ok(boxed(move |ctx: &mut NodeContext| {
                let xs: Vec<i64> = ctx.receive("inp")?;
                ctx.record("chunk", xs.len() as f64);
                ctx.sleep(delay)?;
                let ys: Vec<i64> = xs.iter().map(|x| x * scale).collect();
                ctx.send("out", &ys)
            }))
        },
    );

    // Collects ints; records each as metric "value".
    r.register_template(
        NodeSpec::new("t", "Collect").input("inp", "*").looped(true),
        |_| {
            Ok(boxed(|ctx: &mut NodeContext| {
                let v: Value = ctx.receive("inp")?;
                match v {
                    Value::Array(items) => {
                        for x in items {
                            ctx.record("value", x.as_f64().unwrap_or(f64::NAN));
                        }
                        ctx.record("lists", 1.0);
                    }
                    x => ctx.record("value", x.as_f64().unwrap_or(f64::NAN)),
                }
                Ok(())
            }))
        },
    );

    // Fails its first `failures` calls with a retryable error.
    r.register_template(
        NodeSpec::new("t", "Flaky")
            .input("inp", "int")
            .output("out", "int")
            .looped(true)
            .param(Parameter::required("failures", "int")),
        |spec| {
            let mut left = param::int(spec, "failures")?;
            Ok(boxed(move |ctx: &mut NodeContext| {
                let x: i64 = ctx.receive("inp")?;
                if left > 0 {
                    left -= 1;
                    return Err(NodeError::retryable("flaky failure"));
                }
                ctx.send("out", &x)
            }))
        },
    );

    // Starts a ball bouncing around a cycle and stops after `rounds`.
    r.register_template(
        NodeSpec::new("t", "PingPong")
            .input("back", "int")
            .output("out", "int")
            .param(Parameter::required("rounds", "int")),
        |spec| {
            let rounds = param::int(spec, "rounds")?;
            Ok(boxed(move |ctx: &mut NodeContext| {
                ctx.send("out", &0i64)?;
                loop {
                    let x: i64 = ctx.receive("back")?;
                    ctx.record("seen", x as f64);
                    if x >= rounds {
                        return Ok(());
                    }
                    ctx.send("out", &x)?;
                }
            }))
        },
    );

    r
}

pub fn ms(v: f64) -> Duration {
    Duration::from_secs_f64(v.max(0.0) / 1e3)
}

pub fn boxed<F>(f: F) -> Box<dyn NodeBody>
where
    F: FnMut(&mut NodeContext) -> Result<(), NodeError> + Send + 'static,
{
    Box::new(f)
}

pub fn spec(r: &NodeRegistry, kind: &str, name: &str, params: &[(&str, ParamValue)]) -> NodeSpec {
    let assigned: BTreeMap<String, ParamValue> =
        params.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
    r.declare(kind, name, &assigned).unwrap()
}

pub fn ints(values: impl IntoIterator<Item = i64>) -> ParamValue {
    ParamValue::List(values.into_iter().map(ParamValue::Int).collect())
}

pub fn run(wf: &Workflow, r: &NodeRegistry) -> ExecutionReport {
    let dir = tempfile::tempdir().unwrap();
    run_in(wf, r, RunConfig::new(dir.path()))
}

pub fn run_in(wf: &Workflow, r: &NodeRegistry, config: RunConfig) -> ExecutionReport {
    let config = config.with_log_level(LogLevel::Debug);
    execute(wf, r, &config).unwrap_or_else(|e| panic!("run failed to start: {e}"))
}

pub fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}
