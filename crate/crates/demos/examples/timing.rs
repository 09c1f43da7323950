//! Runs the active-learning demo sequentially and in parallel with the
//! configured latencies and prints predicted and measured wall times.
//!
//!     cargo run --release -p loopflow-demos --example timing

use std::time::{Duration, Instant};

use loopflow::{execute, Outcome, RunConfig};
use loopflow_demos::{assemble_active_learning_workflow, registry, ActiveLearningConfig, Variant};

fn main() {
    let r = registry();
    let config = ActiveLearningConfig::default();
    let predicted = (config.sequential_estimate_ms(), config.parallel_estimate_ms());

    let mut measured = Vec::new();
    for variant in [Variant::Sequential, Variant::Parallel] {
        let wf = assemble_active_learning_workflow(&r, &config.clone().with_variant(variant))
            .expect("demo workflow assembles");
        let dir = tempfile::tempdir().expect("temporary workdir");
        let run = RunConfig::new(dir.path()).with_timeout(Duration::from_secs(120));
        let start = Instant::now();
        let report = execute(&wf, &r, &run).expect("demo workflow starts");
        assert_eq!(report.outcome, Outcome::Success, "{variant:?} run failed");
        measured.push(start.elapsed().as_secs_f64() * 1e3);
    }

    println!(
        "predicted: sequential_ms={:.0} parallel_ms={:.0} speedup={:.3}",
        predicted.0,
        predicted.1,
        predicted.0 / predicted.1
    );
    println!(
        "measured: sequential_ms={:.0} parallel_ms={:.0} speedup={:.3}",
        measured[0],
        measured[1],
        measured[0] / measured[1]
    );
}
