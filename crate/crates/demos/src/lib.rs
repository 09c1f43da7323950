//! Synthetic stand-ins for two drug-design workflows: an active-learning
//! loop with a k-NN surrogate, and a docking step that rescores
//! high-deviation poses with a slower, more precise scorer.

pub mod candidate;
pub mod kinds;
pub mod surrogate;
pub mod workflows;

pub use candidate::{Candidate, ScoreSource, SyntheticSampler};
pub use surrogate::{acquire, Strategy, SurrogateError, SurrogateModel};
pub use workflows::{
    assemble_active_learning_workflow, assemble_conditional_precision_workflow, median_deviation,
    ActiveLearningConfig, AssemblyError, Latencies, PrecisionConfig, ScorerSettings, Variant,
};

use loopflow::NodeRegistry;

/// Std kinds plus the demo kinds.
pub fn registry() -> NodeRegistry {
    let mut r = NodeRegistry::with_std();
    kinds::register(&mut r);
    r
}
