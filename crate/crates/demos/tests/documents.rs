//! The workflow documents shipped in examples/ are the serialized form of
//! the assemblers' output. Set LOOPFLOW_BLESS=1 to rewrite them.

use std::path::PathBuf;

use loopflow::io::{load_workflow, serialize, to_json};
use loopflow::Workflow;
use loopflow_demos::{
    assemble_active_learning_workflow, assemble_conditional_precision_workflow, registry,
    ActiveLearningConfig, PrecisionConfig, Variant,
};

fn shipped() -> Vec<(&'static str, Workflow)> {
    let r = registry();
    let al = |v| assemble_active_learning_workflow(&r, &ActiveLearningConfig::default().with_variant(v)).unwrap();
    vec![
        ("active_learning_sequential.json", al(Variant::Sequential)),
        ("active_learning_parallel.json", al(Variant::Parallel)),
        (
            "conditional_precision.json",
            assemble_conditional_precision_workflow(&r, &PrecisionConfig::default()).unwrap(),
        ),
    ]
}

#[test]
fn shipped_documents_match_assemblers() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples");
    let bless = std::env::var_os("LOOPFLOW_BLESS").is_some();
    let r = registry();
    for (file, wf) in shipped() {
        let path = dir.join(file);
        let text = to_json(&serialize(&wf).unwrap());
        if bless {
            std::fs::write(&path, &text).unwrap();
        }
        let loaded = load_workflow(&path, &r).unwrap_or_else(|e| panic!("{file}: {e}"));
        assert_eq!(to_json(&serialize(&loaded).unwrap()), text, "{file} is stale");
        assert!(loaded.validate(&r).ok, "{file}");
    }
}
