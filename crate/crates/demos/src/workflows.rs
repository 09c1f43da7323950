//! The two demo workflows and the latency model behind the timing demo.

use std::collections::BTreeMap;

use loopflow::graph::{GraphError, ParamTarget};
use loopflow::registry::RegistryError;
use loopflow::{NodeRegistry, NodeSpec, ParamValue, Workflow};

use crate::candidate::{distance, reference, SyntheticSampler, CANDIDATE, CANDIDATES};
use crate::surrogate::Strategy;

#[derive(Debug, thiserror::Error)]
pub enum AssemblyError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("invalid demo configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Retraining finishes before the next batch is generated.
    Sequential,
    /// Retraining overlaps generation of the next batch.
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Latencies {
    pub generation_ms: f64,
    pub train_ms: f64,
    pub oracle_ms_per_item: f64,
    pub predict_ms: f64,
}

impl Default for Latencies {
    fn default() -> Self {
        Latencies {
            generation_ms: 200.0,
            train_ms: 150.0,
            oracle_ms_per_item: 2.0,
            predict_ms: 10.0,
        }
    }
}

impl Latencies {
    pub fn zero() -> Self {
        Latencies {
            generation_ms: 0.0,
            train_ms: 0.0,
            oracle_ms_per_item: 0.0,
            predict_ms: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActiveLearningConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub acquired: usize,
    /// Leading iterations that send every candidate to the oracle.
    pub n_pool: usize,
    pub dim: usize,
    pub seed: u64,
    pub strategy: Strategy,
    pub neighbours: usize,
    pub sigma: f64,
    pub latencies: Latencies,
    pub variant: Variant,
}

impl Default for ActiveLearningConfig {
    fn default() -> Self {
        ActiveLearningConfig {
            iterations: 10,
            batch_size: 512,
            acquired: 128,
            n_pool: 1,
            dim: 8,
            seed: 42,
            strategy: Strategy::Greedy,
            neighbours: 5,
            sigma: 1.0,
            latencies: Latencies::default(),
            variant: Variant::Parallel,
        }
    }
}

impl ActiveLearningConfig {
    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    fn check(&self) -> Result<(), AssemblyError> {
        let bad = |m: String| Err(AssemblyError::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.acquired > self.batch_size {
            return bad(format!(
                "cannot acquire {} of {} candidates",
                self.acquired, self.batch_size
            ));
        }
        if self.n_pool == 0 && self.iterations > 0 {
            return bad("at least one pooling iteration is needed to train the surrogate".into());
        }
        Ok(())
    }

    fn oracle_ms(&self, iteration: usize) -> f64 {
        let items = if iteration < self.n_pool { self.batch_size } else { self.acquired };
        items as f64 * self.latencies.oracle_ms_per_item
    }

    fn scoring_ms(&self, iteration: usize) -> f64 {
        let predict = if iteration < self.n_pool { 0.0 } else { self.latencies.predict_ms };
        predict + self.oracle_ms(iteration)
    }

    /// Serial sum of every stage: generation, scoring, then retraining.
    pub fn sequential_estimate_ms(&self) -> f64 {
        let l = &self.latencies;
        (0..self.iterations)
            .map(|t| l.generation_ms + self.scoring_ms(t) + l.train_ms)
            .sum()
    }

    /// Critical path when retraining overlaps the next generation step.
    /// Prediction still waits for the previous model, so an iteration that
    /// predicts costs max(generation, retraining) before scoring.
    pub fn parallel_estimate_ms(&self) -> f64 {
        let l = &self.latencies;
        let body: f64 = (0..self.iterations)
            .map(|t| {
                let lead = if t > 0 && t >= self.n_pool {
                    l.generation_ms.max(l.train_ms)
                } else {
                    l.generation_ms
                };
                lead + self.scoring_ms(t)
            })
            .sum();
        if self.iterations == 0 {
            0.0
        } else {
            body + l.train_ms
        }
    }
}

fn spec(
    r: &NodeRegistry,
    kind: &str,
    name: &str,
    params: &[(&str, ParamValue)],
) -> Result<NodeSpec, AssemblyError> {
    let assigned: BTreeMap<String, ParamValue> =
        params.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
    Ok(r.declare(kind, name, &assigned)?)
}

fn int(v: impl TryInto<i64>) -> ParamValue {
    ParamValue::Int(v.try_into().unwrap_or(i64::MAX))
}

/// Generator, pooling switch, surrogate predict/acquire, oracle and
/// retraining, with all scores merged back into one list per iteration.
pub fn assemble_active_learning_workflow(
    registry: &NodeRegistry,
    config: &ActiveLearningConfig,
) -> Result<Workflow, AssemblyError> {
    config.check()?;
    let c = config;
    let l = &c.latencies;
    let list = || ParamValue::from(CANDIDATES);
    let name = match c.variant {
        Variant::Sequential => "active_learning_sequential",
        Variant::Parallel => "active_learning_parallel",
    };
    let mut wf = Workflow::new(name);
    wf.add_node(spec(registry, "SyntheticGenerator", "generator", &[
        ("seed", int(c.seed)),
        ("dim", int(c.dim)),
        ("batch_size", int(c.batch_size)),
        ("iterations", int(c.iterations)),
        ("sigma", c.sigma.into()),
        ("latency_ms", l.generation_ms.into()),
    ])?)?;
    wf.add_node(spec(registry, "PoolingSwitch", "pooling", &[("n_pool", int(c.n_pool))])?)?;
    wf.add_node(spec(registry, "SurrogatePredict", "predict", &[
        ("n_pool", int(c.n_pool)),
        ("latency_ms", l.predict_ms.into()),
    ])?)?;
    wf.add_node(spec(registry, "AcquireSubset", "acquire", &[
        ("k", int(c.acquired)),
        ("strategy", c.strategy.name().into()),
        ("epsilon", c.strategy.epsilon().into()),
        ("seed", int(c.seed)),
    ])?)?;
    wf.add_node(spec(registry, "Merge", "oracle_in", &[("item_type", list())])?)?;
    wf.add_node(spec(registry, "OracleScore", "oracle", &[
        ("seed", int(c.seed)),
        ("latency_ms", l.oracle_ms_per_item.into()),
    ])?)?;
    wf.add_node(spec(registry, "Copy", "copy", &[("item_type", list())])?)?;
    wf.add_node(spec(registry, "SurrogateTrain", "train", &[
        ("k", int(c.neighbours)),
        ("latency_ms", l.train_ms.into()),
    ])?)?;
    wf.add_node(spec(registry, "Merge", "join", &[("item_type", list())])?)?;
    wf.add_node(spec(registry, "Scatter", "scatter", &[("item_type", CANDIDATE.into())])?)?;
    wf.add_node(spec(registry, "Accumulate", "accumulate", &[
        ("item_type", CANDIDATE.into()),
        ("count", int(c.batch_size)),
    ])?)?;
    wf.connect_all(&[
        ("generator.out", "pooling.inp"),
        ("pooling.pool", "oracle_in.inp1"),
        ("pooling.acquire", "predict.inp"),
        ("predict.out", "acquire.inp"),
        ("acquire.acquired", "oracle_in.inp2"),
        ("oracle_in.out", "oracle.inp"),
        ("oracle.out", "copy.inp"),
        ("copy.out1", "train.inp"),
        ("copy.out2", "join.inp1"),
        ("acquire.remainder", "join.inp2"),
        ("join.out", "scatter.inp"),
        ("scatter.out", "accumulate.inp"),
        ("train.model", "predict.model"),
    ])?;
    match c.variant {
        Variant::Parallel => {
            wf.connect_all(&[("accumulate.out", "generator.feedback")])?;
        }
        Variant::Sequential => {
            wf.add_node(spec(registry, "TrainingGate", "gate", &[])?)?;
            wf.connect_all(&[
                ("accumulate.out", "gate.feedback"),
                ("train.trained", "gate.trained"),
                ("gate.out", "generator.feedback"),
            ])?;
        }
    }
    for (exposed, target) in [
        ("iterations", "generator.iterations"),
        ("batch_size", "generator.batch_size"),
        ("acquired", "acquire.k"),
        ("strategy", "acquire.strategy"),
    ] {
        wf.map_parameters(exposed, &[ParamTarget::parse(target)?])?;
    }
    wf.map_parameters("seed", &[
        ParamTarget::parse("generator.seed")?,
        ParamTarget::parse("oracle.seed")?,
        ParamTarget::parse("acquire.seed")?,
    ])?;
    wf.map_parameters("n_pool", &[ParamTarget::parse("pooling.n_pool")?, ParamTarget::parse("predict.n_pool")?])?;
    Ok(wf)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScorerSettings {
    pub latency_ms: f64,
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionConfig {
    pub batch_size: usize,
    pub dim: usize,
    pub seed: u64,
    /// Candidates whose deviation exceeds this are rescored precisely.
    pub threshold: f64,
    pub fast: ScorerSettings,
    pub precise: ScorerSettings,
}

impl Default for PrecisionConfig {
    fn default() -> Self {
        let mut c = PrecisionConfig {
            batch_size: 64,
            dim: 8,
            seed: 42,
            threshold: 0.0,
            fast: ScorerSettings {
                latency_ms: 1.0,
                noise: 0.5,
            },
            precise: ScorerSettings {
                latency_ms: 20.0,
                noise: 0.05,
            },
        };
        c.threshold = median_deviation(&c);
        c
    }
}

/// Median deviation of the single batch the precision demo generates,
/// computed without running anything.
pub fn median_deviation(config: &PrecisionConfig) -> f64 {
    let r = reference(config.seed, config.dim);
    let mut d: Vec<f64> = SyntheticSampler::new(config.seed, config.dim, 1.0)
        .batch(config.batch_size)
        .iter()
        .map(|c| distance(&c.features, &r))
        .collect();
    if d.is_empty() {
        return 0.0;
    }
    d.sort_by(f64::total_cmp);
    let n = d.len();
    if n % 2 == 1 {
        d[n / 2]
    } else {
        (d[n / 2 - 1] + d[n / 2]) / 2.0
    }
}

/// One batch scored fast; high-deviation candidates are rescored by a
/// second, slower instance of the same scorer kind.
pub fn assemble_conditional_precision_workflow(
    registry: &NodeRegistry,
    config: &PrecisionConfig,
) -> Result<Workflow, AssemblyError> {
    if config.batch_size == 0 {
        return Err(AssemblyError::Config("batch_size must be positive".into()));
    }
    let c = config;
    let item = || ParamValue::from(CANDIDATE);
    let mut wf = Workflow::new("conditional_precision");
    wf.add_node(spec(registry, "SyntheticGenerator", "generator", &[
        ("seed", int(c.seed)),
        ("dim", int(c.dim)),
        ("batch_size", int(c.batch_size)),
        ("iterations", int(1)),
    ])?)?;
    wf.add_node(spec(registry, "Scatter", "scatter", &[("item_type", item())])?)?;
    for (name, s) in [("fast", &c.fast), ("precise", &c.precise)] {
        wf.add_node(spec(registry, "SyntheticScore", name, &[
            ("seed", int(c.seed)),
            ("noise", s.noise.into()),
            ("latency_ms", s.latency_ms.into()),
        ])?)?;
    }
    wf.add_node(spec(registry, "ConditionalRouter", "route", &[
        ("item_type", item()),
        ("predicate", "gt".into()),
        ("threshold", c.threshold.into()),
        ("field", "deviation".into()),
    ])?)?;
    wf.add_node(spec(registry, "Merge", "merge", &[("item_type", item())])?)?;
    wf.add_node(spec(registry, "Accumulate", "collect", &[
        ("item_type", item()),
        ("count", int(c.batch_size)),
    ])?)?;
    wf.add_node(spec(registry, "LogResult", "result", &[])?)?;
    wf.connect_all(&[
        ("generator.out", "scatter.inp"),
        ("scatter.out", "fast.inp"),
        ("fast.out", "route.inp"),
        ("route.out_true", "precise.inp"),
        ("precise.out", "merge.inp1"),
        ("route.out_false", "merge.inp2"),
        ("merge.out", "collect.inp"),
        ("collect.out", "result.inp"),
    ])?;
    wf.map_parameters("threshold", &[ParamTarget::parse("route.threshold")?])?;
    wf.map_parameters("seed", &[
        ParamTarget::parse("generator.seed")?,
        ParamTarget::parse("fast.seed")?,
        ParamTarget::parse("precise.seed")?,
    ])?;
    Ok(wf)
}
