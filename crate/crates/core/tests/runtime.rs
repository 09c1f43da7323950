mod common;

use std::thread;
use std::time::{Duration, Instant};

use common::*;
use loopflow::nodes::{Comparison, Predicate};
use loopflow::patterns::{make_batched, make_iterative, make_parallel};
use loopflow::{NodeStatus, Outcome, ParamValue, RunConfig, StopReason, Workflow};

#[test]
fn linear_chain_drains_and_shuts_down() {
    let r = registry();
    let mut wf = Workflow::new("chain");
    wf.add_node(spec(&r, "Emit", "src", &[("values", ints(1..=20))])).unwrap();
    for name in ["a", "b", "c"] {
        wf.add_node(spec(&r, "Inc", name, &[])).unwrap();
    }
    wf.add_node(spec(&r, "Collect", "sink", &[])).unwrap();
    wf.connect_all(&[
        ("src.out", "a.inp"),
        ("a.out", "b.inp"),
        ("b.out", "c.inp"),
        ("c.out", "sink.inp"),
    ])
    .unwrap();
    let report = run(&wf, &r);
    assert_eq!(report.outcome, Outcome::Success);
    assert_eq!(report.live_contexts, 0);
    assert!(report.conservation_holds());
    let expected: Vec<f64> = (4..=23).map(f64::from).collect();
    assert_eq!(report.node("sink").unwrap().metric("value"), expected.as_slice());
    for n in report.nodes.values() {
        assert_eq!(n.status, NodeStatus::Completed);
    }
}

#[test]
fn cycle_with_clean_exit() {
    let r = registry();
    let mut wf = Workflow::new("cycle");
    wf.add_node(spec(&r, "PingPong", "ping", &[("rounds", ParamValue::Int(5))]))
        .unwrap();
    wf.add_node(spec(&r, "Inc", "pong", &[])).unwrap();
    wf.connect_all(&[("ping.out", "pong.inp"), ("pong.out", "ping.back")])
        .unwrap();
    let report = run(&wf, &r);
    assert_eq!(report.outcome, Outcome::Success);
    assert_eq!(report.node("ping").unwrap().metric("seen"), [1.0, 2.0, 3.0, 4.0, 5.0]);
    assert_eq!(report.live_contexts, 0);
    assert!(report.conservation_holds());
}

#[test]
fn diamond_copies_and_merges() {
    let r = registry();
    let mut wf = Workflow::new("diamond");
    wf.add_node(spec(&r, "Emit", "src", &[("values", ints(0..10))])).unwrap();
    wf.add_node(spec(&r, "Copy", "copy", &[])).unwrap();
    wf.add_node(spec(&r, "Inc", "left", &[])).unwrap();
    wf.add_node(spec(&r, "Inc", "right", &[])).unwrap();
    wf.add_node(spec(&r, "Merge", "merge", &[])).unwrap();
    wf.add_node(spec(&r, "Collect", "sink", &[])).unwrap();
    wf.connect_all(&[
        ("src.out", "copy.inp"),
        ("copy.out1", "left.inp"),
        ("copy.out2", "right.inp"),
        ("left.out", "merge.inp1"),
        ("right.out", "merge.inp2"),
        ("merge.out", "sink.inp"),
    ])
    .unwrap();
    let report = run(&wf, &r);
    assert_eq!(report.outcome, Outcome::Success);
    let got = sorted(report.node("sink").unwrap().metric("value").to_vec());
    let mut want: Vec<f64> = (1..=10).chain(1..=10).map(f64::from).collect();
    want.sort_by(f64::total_cmp);
    assert_eq!(got, want);
    assert!(report.conservation_holds());
    assert_eq!(report.live_contexts, 0);
}

#[test]
fn empty_two_cycle_is_a_deadlock() {
    let r = registry();
    let mut wf = Workflow::new("stuck");
    wf.add_node(spec(&r, "Inc", "a", &[])).unwrap();
    wf.add_node(spec(&r, "Inc", "b", &[])).unwrap();
    wf.connect_all(&[("a.out", "b.inp"), ("b.out", "a.inp")]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let report = run_in(
        &wf,
        &r,
        RunConfig::new(dir.path()).with_poll_interval(Duration::from_millis(250)),
    );
    let elapsed = start.elapsed();
    assert_eq!(
        report.outcome,
        Outcome::Deadlock {
            nodes: vec!["a".into(), "b".into()]
        }
    );
    assert_eq!(report.outcome.exit_code(), 2);
    assert!(elapsed < Duration::from_millis(750), "{elapsed:?}");
    assert_eq!(report.live_contexts, 0);
}

fn flaky_chain(r: &loopflow::NodeRegistry, max_retries: u32) -> Workflow {
    let mut wf = Workflow::new("retry");
    wf.add_node(spec(r, "Emit", "src", &[("values", ints([1, 2, 3]))])).unwrap();
    wf.add_node(
        spec(r, "Flaky", "flaky", &[("failures", ParamValue::Int(2))]).retries(max_retries),
    )
    .unwrap();
    wf.add_node(spec(r, "Collect", "sink", &[])).unwrap();
    wf.connect_all(&[("src.out", "flaky.inp"), ("flaky.out", "sink.inp")])
        .unwrap();
    wf
}

#[test]
fn retries_redeliver_the_failed_item() {
    let r = registry();
    let report = run(&flaky_chain(&r, 2), &r);
    assert_eq!(report.outcome, Outcome::Success);
    let flaky = report.node("flaky").unwrap();
    assert_eq!(flaky.status, NodeStatus::Completed);
    assert_eq!(flaky.retries, 2);
    // nothing lost: the item in flight during the failures is redelivered
    assert_eq!(report.node("sink").unwrap().metric("value"), [1.0, 2.0, 3.0]);
    assert!(report.conservation_holds());
}

#[test]
fn exhausted_retries_fail_and_stop_the_graph() {
    let r = registry();
    let report = run(&flaky_chain(&r, 1), &r);
    match &report.outcome {
        Outcome::Failed { node, .. } => assert_eq!(node, "flaky"),
        other => panic!("{other:?}"),
    }
    assert_eq!(report.outcome.exit_code(), 1);
    assert_eq!(report.node("flaky").unwrap().status, NodeStatus::Failed);
    assert_eq!(report.node("flaky").unwrap().retries, 1);
    assert_ne!(report.node("sink").unwrap().status, NodeStatus::Failed);
    assert_eq!(report.live_contexts, 0);
}

#[test]
fn conditional_router_sends_each_item_once() {
    let r = registry();
    let build = |threshold: f64| {
        let mut wf = Workflow::new("route");
        wf.add_node(spec(&r, "Emit", "src", &[("values", ints([1, 5, 9]))])).unwrap();
        wf.add_node(spec(
            &r,
            "ConditionalRouter",
            "route",
            &[
                ("predicate", "gt".into()),
                ("threshold", ParamValue::Float(threshold)),
            ],
        ))
        .unwrap();
        wf.add_node(spec(&r, "Collect", "yes", &[])).unwrap();
        wf.add_node(spec(&r, "Collect", "no", &[])).unwrap();
        wf.connect_all(&[
            ("src.out", "route.inp"),
            ("route.out_true", "yes.inp"),
            ("route.out_false", "no.inp"),
        ])
        .unwrap();
        wf
    };
    let report = run(&build(4.0), &r);
    assert_eq!(report.node("yes").unwrap().metric("value"), [5.0, 9.0]);
    assert_eq!(report.node("no").unwrap().metric("value"), [1.0]);

    let report = run(&build(f64::INFINITY), &r);
    assert_eq!(report.outcome, Outcome::Success);
    assert_eq!(report.node("yes").unwrap().invocations, 0);
    assert_eq!(report.node("yes").unwrap().total_received(), 0);
    assert_eq!(report.node("no").unwrap().total_received(), 3);
}

fn iterate(input: i64, done: Predicate, cap: u64) -> loopflow::ExecutionReport {
    let r = registry();
    let mut wf = Workflow::new("iterate");
    wf.add_node(spec(&r, "Emit", "src", &[("values", ints([input]))])).unwrap();
    let body = spec(&r, "Inc", "inc", &[]);
    wf.add_subgraph(make_iterative(&r, "loop", body, &done, cap).unwrap())
        .unwrap();
    wf.add_node(spec(&r, "Collect", "sink", &[])).unwrap();
    wf.connect_all(&[("src.out", "loop.inp"), ("loop.out", "sink.inp")])
        .unwrap();
    run(&wf, &r)
}

#[test]
fn iteration_runs_until_predicate_holds() {
    let start = Instant::now();
    let report = iterate(7, Predicate::new(Comparison::Ge, 10.0), 0);
    assert!(start.elapsed() < Duration::from_secs(5));
    assert_eq!(report.outcome, Outcome::Success);
    assert_eq!(report.node("sink").unwrap().metric("value"), [10.0]);
    assert_eq!(report.node("loop/body").unwrap().invocations, 3);
    assert_eq!(report.node("loop/router").unwrap().metric("iterations"), [3.0]);
    assert!(report.node("loop/router").unwrap().metric("cap_reached").is_empty());
    assert_eq!(report.live_contexts, 0);
}

#[test]
fn iteration_exits_at_once_when_done() {
    let report = iterate(20, Predicate::new(Comparison::Ge, 10.0), 0);
    assert_eq!(report.node("loop/body").unwrap().invocations, 1);
    assert_eq!(report.node("sink").unwrap().metric("value"), [21.0]);
}

#[test]
fn iteration_cap_releases_and_flags() {
    let report = iterate(0, Predicate::new(Comparison::Gt, f64::INFINITY), 5);
    assert_eq!(report.outcome, Outcome::Success);
    assert_eq!(report.node("loop/body").unwrap().invocations, 5);
    assert_eq!(report.node("sink").unwrap().metric("value"), [5.0]);
    assert_eq!(report.node("loop/router").unwrap().metric("cap_reached"), [5.0]);
}

#[test]
fn iteration_handles_many_items() {
    let r = registry();
    let mut wf = Workflow::new("many");
    wf.add_node(spec(&r, "Emit", "src", &[("values", ints(0..40))])).unwrap();
    let done = Predicate::new(Comparison::Ge, 25.0);
    wf.add_subgraph(make_iterative(&r, "loop", spec(&r, "Inc", "inc", &[]), &done, 0).unwrap())
        .unwrap();
    wf.add_node(spec(&r, "Collect", "sink", &[])).unwrap();
    wf.connect_all(&[("src.out", "loop.inp"), ("loop.out", "sink.inp")])
        .unwrap();
    let report = run(&wf, &r);
    assert_eq!(report.outcome, Outcome::Success);
    let got = sorted(report.node("sink").unwrap().metric("value").to_vec());
    let want: Vec<f64> = (0..40).map(|x: i64| x.max(24) as f64 + 1.0).collect();
    assert_eq!(got, sorted(want));
    // one pass per unit of distance to the threshold, at least one each
    let passes: i64 = (0..40).map(|x: i64| (25 - x).max(1)).sum();
    assert_eq!(report.node("loop/body").unwrap().invocations, passes as u64);
}

#[test]
fn batched_preserves_order_and_chunks() {
    let r = registry();
    let mut wf = Workflow::new("batched");
    wf.add_node(spec(&r, "EmitList", "src", &[("values", ints(1..=10))])).unwrap();
    let inner = spec(&r, "ListStage", "stage", &[("scale", ParamValue::Int(3))]);
    wf.add_subgraph(make_batched(&r, "batch", inner, 4).unwrap()).unwrap();
    wf.add_node(spec(&r, "Collect", "sink", &[])).unwrap();
    wf.connect_all(&[("src.out", "batch.inp"), ("batch.out", "sink.inp")])
        .unwrap();
    let report = run(&wf, &r);
    assert_eq!(report.outcome, Outcome::Success);
    assert_eq!(report.node("batch/inner").unwrap().metric("chunk"), [4.0, 4.0, 2.0]);
    let want: Vec<f64> = (1..=10).map(|x| f64::from(x * 3)).collect();
    assert_eq!(report.node("sink").unwrap().metric("value"), want.as_slice());
    assert_eq!(report.node("sink").unwrap().metric("lists"), [1.0]);
}

fn parallel_run(workers: usize, items: i64, delay_ms: f64) -> (loopflow::ExecutionReport, Duration) {
    let r = registry();
    let mut wf = Workflow::new("parallel");
    wf.add_node(spec(&r, "Emit", "src", &[("values", ints(0..items))])).unwrap();
    let inner = spec(&r, "Inc", "work", &[("delay_ms", ParamValue::Float(delay_ms))]);
    wf.add_subgraph(make_parallel(&r, "par", inner, workers).unwrap())
        .unwrap();
    wf.add_node(spec(&r, "Collect", "sink", &[])).unwrap();
    wf.connect_all(&[("src.out", "par.inp"), ("par.out", "sink.inp")])
        .unwrap();
    let start = Instant::now();
    let report = run(&wf, &r);
    (report, start.elapsed())
}

#[test]
fn parallel_branches_overlap() {
    let (report, elapsed) = parallel_run(4, 8, 100.0);
    assert_eq!(report.outcome, Outcome::Success);
    assert!(elapsed < Duration::from_millis(500), "{elapsed:?}");
    let got = sorted(report.node("sink").unwrap().metric("value").to_vec());
    let want: Vec<f64> = (1..=8).map(f64::from).collect();
    assert_eq!(got, want);
}

#[test]
fn single_worker_keeps_order() {
    let (report, _) = parallel_run(1, 12, 0.0);
    let want: Vec<f64> = (1..=12).map(f64::from).collect();
    assert_eq!(report.node("sink").unwrap().metric("value"), want.as_slice());
}

#[test]
fn pipeline_stages_overlap() {
    let r = registry();
    let stage = |name: &str| spec(&r, "Inc", name, &[("delay_ms", ParamValue::Float(100.0))]);
    let mut wf = Workflow::new("pipe");
    wf.add_node(spec(&r, "Emit", "src", &[("values", ints(0..8))])).unwrap();
    wf.add_node(stage("prep")).unwrap();
    wf.add_node(stage("dock")).unwrap();
    wf.add_node(spec(&r, "Collect", "sink", &[])).unwrap();
    wf.connect_all(&[("src.out", "prep.inp"), ("prep.out", "dock.inp"), ("dock.out", "sink.inp")])
        .unwrap();
    let start = Instant::now();
    let report = run(&wf, &r);
    let elapsed = start.elapsed();
    assert_eq!(report.outcome, Outcome::Success);
    assert!(elapsed < Duration::from_millis(1300), "{elapsed:?}");
}

#[test]
fn external_stop_ends_the_run() {
    let r = registry();
    let mut wf = Workflow::new("slow");
    wf.add_node(spec(
        &r,
        "Emit",
        "src",
        &[("values", ints(0..1000)), ("delay_ms", ParamValue::Float(50.0))],
    ))
    .unwrap();
    wf.add_node(spec(&r, "Collect", "sink", &[])).unwrap();
    wf.connect_all(&[("src.out", "sink.inp")]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let config = RunConfig::new(dir.path());
    let stop = config.stop.clone();
    let stopper = thread::spawn(move || {
        thread::sleep(Duration::from_millis(200));
        stop.stop(StopReason::External);
    });
    let start = Instant::now();
    let report = run_in(&wf, &r, config);
    stopper.join().unwrap();
    assert!(start.elapsed() < Duration::from_secs(2));
    assert!(matches!(report.outcome, Outcome::ExternallyStopped { .. }));
    assert_eq!(report.outcome.exit_code(), 130);
    assert_eq!(report.node("src").unwrap().status, NodeStatus::Stopped);
    assert_eq!(report.live_contexts, 0);
}

#[test]
fn global_timeout_stops_the_run() {
    let r = registry();
    let mut wf = Workflow::new("slow");
    wf.add_node(spec(
        &r,
        "Emit",
        "src",
        &[("values", ints(0..1000)), ("delay_ms", ParamValue::Float(50.0))],
    ))
    .unwrap();
    wf.add_node(spec(&r, "Collect", "sink", &[])).unwrap();
    wf.connect_all(&[("src.out", "sink.inp")]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let report = run_in(
        &wf,
        &r,
        RunConfig::new(dir.path()).with_timeout(Duration::from_millis(300)),
    );
    assert!(matches!(report.outcome, Outcome::ExternallyStopped { .. }));
}

#[test]
fn log_file_lines_have_time_level_node_message() {
    let r = registry();
    let mut wf = Workflow::new("logs");
    wf.add_node(spec(&r, "Emit", "src", &[("values", ints([1, 2, 3]))])).unwrap();
    wf.add_node(spec(&r, "LogResult", "log", &[])).unwrap();
    wf.connect_all(&[("src.out", "log.inp")]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let report = run_in(&wf, &r, RunConfig::new(dir.path()));
    assert_eq!(report.logs_for("log").filter(|l| l.level.as_str() == "INFO").count(), 3);
    let text = std::fs::read_to_string(dir.path().join("run.log")).unwrap();
    let line = text.lines().find(|l| l.contains(" log ")).unwrap();
    let mut parts = line.splitn(4, ' ');
    let time = parts.next().unwrap();
    assert!(chrono::DateTime::parse_from_rfc3339(time).is_ok(), "{time}");
    assert!(["DEBUG", "INFO", "WARN", "ERROR"].contains(&parts.next().unwrap()));
    assert_eq!(parts.next(), Some("log"));
}

#[test]
fn validation_failure_prevents_launch() {
    let r = registry();
    let mut wf = Workflow::new("bad");
    wf.add_node(spec(&r, "Inc", "a", &[])).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let err = loopflow::execute(&wf, &r, &RunConfig::new(dir.path())).unwrap_err();
    assert!(matches!(err, loopflow::RunError::Validation(_)));
    assert!(!dir.path().join("run.log").exists() || std::fs::read_to_string(dir.path().join("run.log")).unwrap().is_empty());
}
