//! File payloads, external commands and the mock queue, run end to end.

mod common;

use std::fs;
use std::path::{Path, PathBuf};

use common::*;
use loopflow::graph::NodeSpec;
use loopflow::io::{QueueSettings, SystemConfig};
use loopflow::nodes::{param, JobInfo, JobState};
use loopflow::runtime::NodeContext;
use loopflow::{NodeRegistry, NodeStatus, Outcome, ParamValue, Parameter, RunConfig, Workflow};
use rand::{RngCore, SeedableRng};
use sha2::{Digest, Sha256};

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn file_registry() -> NodeRegistry {
    let mut r = registry();
    r.register_template(
        NodeSpec::new("t", "WriteFile")
            .output("out", "file-set")
            .param(Parameter::required("size", "int")),
        |spec| {
            let size = param::int(spec, "size")? as usize;
            Ok(boxed(move |ctx: &mut NodeContext| {
                let mut data = vec![0u8; size];
                rand::rngs::StdRng::seed_from_u64(size as u64).fill_bytes(&mut data);
                let path = ctx.workdir()?.join("payload.bin");
                fs::write(&path, &data).map_err(|e| loopflow::NodeError::fatal(e.to_string()))?;
                ctx.info(format!("sha={}", hex(&Sha256::digest(&data))));
                ctx.send_files("out", &[path])
            }))
        },
    );
    r.register_template(
        NodeSpec::new("t", "HashFile").input("inp", "file-set").looped(true),
        |_| {
            Ok(boxed(|ctx: &mut NodeContext| {
                for path in ctx.receive_files("inp")? {
                    let data =
                        fs::read(&path).map_err(|e| loopflow::NodeError::fatal(e.to_string()))?;
                    ctx.info(format!("sha={} path={}", hex(&Sha256::digest(&data)), path.display()));
                }
                Ok(())
            }))
        },
    );
    r
}

fn field<'a>(message: &'a str, key: &str) -> &'a str {
    message
        .split(' ')
        .find_map(|kv| kv.strip_prefix(&format!("{key}=")))
        .unwrap()
}

#[test]
fn copied_file_sets_are_independent() {
    let r = file_registry();
    let mut wf = Workflow::new("files");
    wf.add_node(spec(&r, "WriteFile", "write", &[("size", ParamValue::Int(64 * 1024))]))
        .unwrap();
    wf.add_node(spec(&r, "Copy", "copy", &[("item_type", "file-set".into())]))
        .unwrap();
    wf.add_node(spec(&r, "HashFile", "a", &[])).unwrap();
    wf.add_node(spec(&r, "HashFile", "b", &[])).unwrap();
    wf.connect_all(&[("write.out", "copy.inp"), ("copy.out1", "a.inp"), ("copy.out2", "b.inp")])
        .unwrap();
    let report = run(&wf, &r);
    assert_eq!(report.outcome, Outcome::Success);
    let original = field(&report.logs_for("write").next().unwrap().message, "sha").to_string();
    let a = &report.logs_for("a").next().unwrap().message;
    let b = &report.logs_for("b").next().unwrap().message;
    assert_eq!(field(a, "sha"), original);
    assert_eq!(field(b, "sha"), original);
    assert_ne!(field(a, "path"), field(b, "path"));
}

fn all_files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out
}

#[test]
fn command_output_stays_in_attempt_directory() {
    let r = NodeRegistry::with_std();
    let mut wf = Workflow::new("cmd");
    let cmd: Vec<&str> = vec!["sh", "-c", "echo hello; echo data > produced.txt"];
    wf.add_node(r.spec("RunCommand", "run", [("command", ParamValue::from(cmd))]).unwrap())
        .unwrap();
    wf.add_node(r.spec::<&str, ParamValue>("LogResult", "log", []).unwrap())
        .unwrap();
    wf.connect_all(&[("run.out", "log.inp")]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let report = run_in(&wf, &r, RunConfig::new(dir.path()));
    assert_eq!(report.outcome, Outcome::Success, "{:?}", report.nodes["run"].error);
    for f in all_files(dir.path()) {
        let rel = f.strip_prefix(dir.path()).unwrap();
        let top = rel.components().next().unwrap().as_os_str().to_string_lossy().to_string();
        assert!(
            top == "run" || top == "log" || top == "run.log" || top.starts_with("channel."),
            "unexpected file {}",
            rel.display()
        );
        if f.file_name().unwrap() == "produced.txt" && top == "run" {
            assert!(rel.starts_with("run/attempt-0"), "{}", rel.display());
        }
    }
    assert!(dir.path().join("run/attempt-0/result.json").exists());
    let logged = &report.logs_for("log").next().unwrap().message;
    assert!(logged.contains("hello"), "{logged}");
}

#[test]
fn missing_executable_fails_without_retry() {
    let r = NodeRegistry::with_std();
    let mut wf = Workflow::new("cmd");
    let cmd: Vec<&str> = vec!["definitely-not-a-real-program-xyz"];
    wf.add_node(
        r.spec("RunCommand", "run", [("command", ParamValue::from(cmd))])
            .unwrap()
            .retries(3),
    )
    .unwrap();
    let report = run(&wf, &r);
    assert!(matches!(report.outcome, Outcome::Failed { .. }));
    assert_eq!(report.node("run").unwrap().retries, 0);
}

#[test]
fn command_timeout_is_retried_then_fails() {
    let r = NodeRegistry::with_std();
    let mut wf = Workflow::new("cmd");
    let cmd: Vec<&str> = vec!["sleep", "5"];
    wf.add_node(
        r.spec(
            "RunCommand",
            "run",
            [("command", ParamValue::from(cmd)), ("timeout", ParamValue::Float(0.1))],
        )
        .unwrap()
        .retries(1),
    )
    .unwrap();
    let start = std::time::Instant::now();
    let report = run(&wf, &r);
    assert!(start.elapsed() < std::time::Duration::from_secs(3));
    assert_eq!(report.node("run").unwrap().retries, 1);
    assert_eq!(report.node("run").unwrap().status, NodeStatus::Failed);
}

#[test]
fn configured_executable_and_env_are_applied() {
    let r = NodeRegistry::with_std();
    let mut wf = Workflow::new("cmd");
    let cmd: Vec<&str> = vec!["{executable}", "-c", "echo $GREETING"];
    wf.add_node(
        r.spec(
            "RunCommand",
            "run",
            [
                ("command", ParamValue::from(cmd)),
                ("executable_key", "shell".into()),
            ],
        )
        .unwrap(),
    )
    .unwrap();
    wf.add_node(r.spec::<&str, ParamValue>("LogResult", "log", []).unwrap())
        .unwrap();
    wf.connect_all(&[("run.out", "log.inp")]).unwrap();
    let system = SystemConfig::from_json(
        r#"{"kinds": {"shell": {"executable": "sh", "env": {"GREETING": "bonjour"}}}}"#,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let report = run_in(&wf, &r, RunConfig::new(dir.path()).with_system(system));
    assert_eq!(report.outcome, Outcome::Success, "{:?}", report.nodes["run"].error);
    assert!(report.logs_for("log").next().unwrap().message.contains("bonjour"));
}

fn queue_workflow(r: &NodeRegistry, jobs: usize) -> Workflow {
    let mut wf = Workflow::new("queue");
    for i in 0..jobs {
        let name = format!("job{i}");
        let collect = format!("out{i}");
        wf.add_node(r.spec::<&str, ParamValue>("QueueSubmit", &name, []).unwrap().retries(1))
            .unwrap();
        wf.add_node(spec(r, "Collect", &collect, &[])).unwrap();
        wf.connect(&format!("{name}.out"), &format!("{collect}.inp"), 4)
            .unwrap();
    }
    wf
}

fn queue_config(dir: &Path, settings: QueueSettings) -> RunConfig {
    RunConfig::new(dir).with_system(SystemConfig {
        queue: Some(settings),
        ..SystemConfig::default()
    })
}

#[test]
fn single_slot_queue_runs_jobs_one_after_another() {
    let r = registry();
    // Collect ignores non-numeric values, so read job info from the debug log.
    let dir = tempfile::tempdir().unwrap();
    let settings = QueueSettings {
        slots: 1,
        latency_ms: 80,
        poll_interval_ms: 10,
        ..QueueSettings::default()
    };
    let mut wf = Workflow::new("queue");
    for i in 0..2 {
        wf.add_node(r.spec::<&str, ParamValue>("QueueSubmit", &format!("job{i}"), []).unwrap())
            .unwrap();
        wf.add_node(r.spec::<&str, ParamValue>("LogResult", &format!("log{i}"), []).unwrap())
            .unwrap();
        wf.connect(&format!("job{i}.out"), &format!("log{i}.inp"), 4).unwrap();
    }
    let report = run_in(&wf, &r, queue_config(dir.path(), settings));
    assert_eq!(report.outcome, Outcome::Success);
    let info = |i: usize| -> JobInfo {
        let node = format!("log{i}");
        let msg = report.logs_for(&node).next().unwrap().message.clone();
        serde_json::from_str(&msg).unwrap()
    };
    let (a, b) = (info(0), info(1));
    assert_eq!(a.state, JobState::Done);
    let (first, second) = if a.started_ms < b.started_ms { (a, b) } else { (b, a) };
    assert!(second.started_ms.unwrap() >= first.finished_ms.unwrap());
    // one debug line per observed transition
    assert!(report
        .logs_for("job0")
        .any(|l| l.message.contains("running -> done") || l.message.contains("pending -> done")));
}

#[test]
fn injected_queue_failure_is_retried() {
    let r = registry();
    let dir = tempfile::tempdir().unwrap();
    let settings = QueueSettings {
        fail_first: 1,
        poll_interval_ms: 5,
        ..QueueSettings::default()
    };
    let report = run_in(&queue_workflow(&r, 1), &r, queue_config(dir.path(), settings));
    assert_eq!(report.outcome, Outcome::Success);
    assert_eq!(report.node("job0").unwrap().retries, 1);
    assert!(report
        .logs
        .iter()
        .any(|l| l.node == "job0" && l.message.contains("injected failure")));
}

#[test]
fn queue_submit_without_backend_fails() {
    let r = registry();
    let report = run(&queue_workflow(&r, 1), &r);
    assert!(matches!(report.outcome, Outcome::Failed { .. }));
}

#[test]
fn one_document_runs_under_two_system_configs() {
    let r = NodeRegistry::with_std();
    let mut wf = Workflow::new("portable");
    let cmd: Vec<&str> = vec!["{executable}", "-c", "echo $TAG"];
    wf.add_node(
        r.spec(
            "RunCommand",
            "run",
            [("command", ParamValue::from(cmd)), ("executable_key", "shell".into())],
        )
        .unwrap(),
    )
    .unwrap();
    wf.add_node(r.spec::<&str, ParamValue>("LogResult", "log", []).unwrap())
        .unwrap();
    wf.connect_all(&[("run.out", "log.inp")]).unwrap();
    let text = loopflow::io::to_json(&loopflow::io::serialize(&wf).unwrap());

    for (shell, tag) in [("sh", "laptop"), ("/bin/sh", "cluster")] {
        let system = SystemConfig::from_json(&format!(
            r#"{{"kinds": {{"shell": {{"executable": "{shell}", "env": {{"TAG": "{tag}"}}}}}}}}"#
        ))
        .unwrap();
        let loaded = loopflow::io::deserialize(&loopflow::io::from_json(&text).unwrap(), &r).unwrap();
        assert_eq!(loopflow::io::to_json(&loopflow::io::serialize(&loaded).unwrap()), text);
        let dir = tempfile::tempdir().unwrap();
        let report = run_in(&loaded, &r, RunConfig::new(dir.path()).with_system(system));
        assert_eq!(report.outcome, Outcome::Success);
        assert!(report.logs_for("log").next().unwrap().message.contains(tag));
    }
}
