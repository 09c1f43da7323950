//! Node kinds for the synthetic demos.

use std::time::Duration;

use loopflow::graph::NodeSpec;
use loopflow::nodes::param;
use loopflow::runtime::{NodeBody, NodeContext, NodeError};
use loopflow::{NodeRegistry, ParamValue, Parameter};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::candidate::{
    distance, optimum, oracle_score, reference, Candidate, ScoreSource, SyntheticSampler, CANDIDATE,
    CANDIDATES,
};
use crate::surrogate::{acquire, Strategy, SurrogateError, SurrogateModel, MODEL};

fn millis(ms: f64) -> Duration {
    Duration::from_secs_f64(ms.max(0.0) / 1e3)
}

fn count(spec: &NodeSpec, name: &str) -> Result<usize, NodeError> {
    let v = param::int(spec, name)?;
    usize::try_from(v).map_err(|_| NodeError::Parameter {
        name: name.to_string(),
        message: format!("must not be negative, got {v}"),
    })
}

fn boxed<F>(f: F) -> Result<Box<dyn NodeBody>, NodeError>
where
    F: FnMut(&mut NodeContext) -> Result<(), NodeError> + Send + 'static,
{
    Ok(Box::new(f))
}

impl From<SurrogateError> for NodeError {
    fn from(e: SurrogateError) -> Self {
        NodeError::fatal(e.to_string())
    }
}

fn seed_param() -> Parameter {
    Parameter::with_default("seed", "int", ParamValue::Int(0)).help("demo seed")
}

fn dim_param() -> Parameter {
    Parameter::with_default("dim", "int", ParamValue::Int(8)).help("feature dimension")
}

fn latency_param(help: &str) -> Parameter {
    Parameter::with_default("latency_ms", "float", 0.0.into()).help(help)
}

pub fn register(r: &mut NodeRegistry) {
    // Emits one batch per iteration and waits for the scored batch to come
    // back (when the feedback port is connected) before sampling again.
    r.register_template(
        NodeSpec::new("generator", "SyntheticGenerator")
            .optional_input("feedback", CANDIDATES)
            .output("out", CANDIDATES)
            .param(seed_param())
            .param(dim_param())
            .param(Parameter::with_default("batch_size", "int", ParamValue::Int(512)))
            .param(Parameter::with_default("iterations", "int", ParamValue::Int(10)))
            .param(Parameter::with_default("sigma", "float", 1.0.into()))
            .param(latency_param("time spent generating each batch")),
        |spec| {
            let seed = param::int(spec, "seed")? as u64;
            let dim = count(spec, "dim")?;
            let batch = count(spec, "batch_size")?;
            let iterations = count(spec, "iterations")?;
            let sigma = param::float(spec, "sigma")?;
            let latency = millis(param::float(spec, "latency_ms")?);
            if !(sigma.is_finite() && sigma >= 0.0) {
                return Err(NodeError::Parameter {
                    name: "sigma".into(),
                    message: format!("must be finite and non-negative, got {sigma}"),
                });
            }
            boxed(move |ctx| {
                let mut sampler = SyntheticSampler::new(seed, dim, sigma);
                let mut best = f64::NEG_INFINITY;
                for _ in 0..iterations {
                    ctx.sleep(latency)?;
                    let sent = sampler.batch(batch);
                    let mut ids: Vec<u64> = sent.iter().map(|c| c.id).collect();
                    ctx.send("out", &sent)?;
                    if !ctx.is_connected("feedback") {
                        continue;
                    }
                    let mut scored: Vec<Candidate> = ctx.receive("feedback")?;
                    scored.sort_by_key(|c| c.id);
                    ids.sort_unstable();
                    let returned: Vec<u64> = scored.iter().map(|c| c.id).collect();
                    if returned != ids || scored.iter().any(|c| c.score.is_none()) {
                        return Err(NodeError::fatal(format!(
                            "feedback does not carry exactly one score per generated candidate \
                             ({} sent, {} returned)",
                            ids.len(),
                            returned.len()
                        )));
                    }
                    let oracle: Vec<f64> = scored
                        .iter()
                        .filter(|c| c.score_source == ScoreSource::Oracle)
                        .filter_map(|c| c.score)
                        .collect();
                    if !oracle.is_empty() {
                        best = oracle.iter().copied().fold(best, f64::max);
                        ctx.record("oracle_mean", oracle.iter().sum::<f64>() / oracle.len() as f64);
                    }
                    ctx.record("oracle_best", best);
                    sampler.reinforce(&scored);
                }
                Ok(())
            })
        },
    );

    // Scores with the analytic oracle, paying `latency_ms` per candidate.
    r.register_template(
        NodeSpec::new("oracle", "OracleScore")
            .input("inp", CANDIDATES)
            .output("out", CANDIDATES)
            .looped(true)
            .param(seed_param())
            .param(latency_param("cost per scored candidate")),
        |spec| {
            let seed = param::int(spec, "seed")? as u64;
            let per_item = param::float(spec, "latency_ms")?;
            boxed(move |ctx| {
                let batch: Vec<Candidate> = ctx.receive("inp")?;
                ctx.sleep(millis(per_item * batch.len() as f64))?;
                let scored: Vec<Candidate> = batch
                    .into_iter()
                    .map(|c| {
                        let s = oracle_score(&c.features, &optimum(seed, c.features.len()));
                        c.scored(s, ScoreSource::Oracle)
                    })
                    .collect();
                ctx.record("scored", scored.len() as f64);
                ctx.send("out", &scored)
            })
        },
    );

    // Folds oracle-scored batches into the model and publishes it.
    r.register_template(
        NodeSpec::new("train", "SurrogateTrain")
            .input("inp", CANDIDATES)
            .output("model", MODEL)
            .output("trained", "int")
            .looped(true)
            .param(Parameter::with_default("k", "int", ParamValue::Int(5)).help("neighbours"))
            .param(latency_param("time spent retraining")),
        |spec| {
            let mut model = SurrogateModel::new(count(spec, "k")?);
            let latency = millis(param::float(spec, "latency_ms")?);
            boxed(move |ctx| {
                let batch: Vec<Candidate> = ctx.receive("inp")?;
                ctx.sleep(latency)?;
                model.train(&batch)?;
                ctx.record("training_size", model.len() as f64);
                ctx.send("model", &model)?;
                ctx.send("trained", &model.version)
            })
        },
    );

    // Scores with the latest model trained on every earlier iteration.
    r.register_template(
        NodeSpec::new("predict", "SurrogatePredict")
            .input("inp", CANDIDATES)
            .input("model", MODEL)
            .output("out", CANDIDATES)
            .looped(true)
            .param(
                Parameter::with_default("n_pool", "int", ParamValue::Int(1))
                    .help("pooling iterations before the first prediction"),
            )
            .param(latency_param("time spent predicting each batch")),
        |spec| {
            let n_pool = count(spec, "n_pool")? as u64;
            let latency = millis(param::float(spec, "latency_ms")?);
            let mut model: Option<SurrogateModel> = None;
            let mut seen = 0u64;
            boxed(move |ctx| {
                let batch: Vec<Candidate> = match ctx.receive("inp") {
                    Ok(b) => b,
                    // the model input closes only after we do, so end here
                    Err(e) if e.is_shutdown_signal() && ctx.is_exhausted("inp") => {
                        ctx.complete();
                        return Err(e);
                    }
                    Err(e) => return Err(e),
                };
                let needed = n_pool + seen;
                while model.as_ref().is_none_or(|m| m.version < needed) {
                    match ctx.receive::<SurrogateModel>("model") {
                        Ok(m) => model = Some(m),
                        Err(e) if e.is_shutdown_signal() && ctx.is_exhausted("model") => break,
                        Err(e) => return Err(e),
                    }
                }
                seen += 1;
                let model = model.as_ref().ok_or(SurrogateError::UntrainedModel)?;
                ctx.sleep(latency)?;
                ctx.record("model_size", model.len() as f64);
                ctx.send("out", &model.score_all(batch)?)
            })
        },
    );

    r.register_template(
        NodeSpec::new("acquire", "AcquireSubset")
            .input("inp", CANDIDATES)
            .output("acquired", CANDIDATES)
            .output("remainder", CANDIDATES)
            .looped(true)
            .param(Parameter::with_default("k", "int", ParamValue::Int(128)).help("candidates to acquire"))
            .param(
                Parameter::with_default("strategy", "string", "greedy".into())
                    .help("random, greedy or epsilon-greedy"),
            )
            .param(Parameter::with_default("epsilon", "float", 0.1.into()))
            .param(seed_param()),
        |spec| {
            let k = count(spec, "k")?;
            let strategy = Strategy::from_parts(&param::string(spec, "strategy")?, param::float(spec, "epsilon")?)
                .map_err(|message| NodeError::Parameter {
                    name: "strategy".into(),
                    message,
                })?;
            let mut rng = ChaCha8Rng::seed_from_u64(param::int(spec, "seed")? as u64);
            boxed(move |ctx| {
                let batch: Vec<Candidate> = ctx.receive("inp")?;
                if k > batch.len() {
                    return Err(NodeError::fatal(format!(
                        "cannot acquire {k} of {} candidates",
                        batch.len()
                    )));
                }
                let (acquired, rest) = acquire(batch, k, strategy, &mut rng);
                ctx.send("acquired", &acquired)?;
                ctx.send("remainder", &rest)
            })
        },
    );

    // First `n_pool` batches go to the oracle wholesale.
    r.register_template(
        NodeSpec::new("pooling", "PoolingSwitch")
            .input("inp", CANDIDATES)
            .output("pool", CANDIDATES)
            .output("acquire", CANDIDATES)
            .looped(true)
            .param(Parameter::with_default("n_pool", "int", ParamValue::Int(1))),
        |spec| {
            let n_pool = count(spec, "n_pool")?;
            let mut seen = 0usize;
            boxed(move |ctx| {
                let batch: Vec<Candidate> = ctx.receive("inp")?;
                let port = if seen < n_pool { "pool" } else { "acquire" };
                seen += 1;
                ctx.send(port, &batch)
            })
        },
    );

    // Holds each feedback batch until the surrogate has retrained on it.
    r.register_template(
        NodeSpec::new("gate", "TrainingGate")
            .input("feedback", CANDIDATES)
            .input("trained", "int")
            .output("out", CANDIDATES)
            .looped(true),
        |_| {
            boxed(|ctx| {
                let batch: Vec<Candidate> = ctx.receive("feedback")?;
                let _version: u64 = ctx.receive("trained")?;
                ctx.send("out", &batch)
            })
        },
    );

    // Noisy docking stand-in. Also reports the deviation from a reference
    // pose, which the precision demo routes on.
    r.register_template(
        NodeSpec::new("score", "SyntheticScore")
            .input("inp", CANDIDATE)
            .output("out", CANDIDATE)
            .looped(true)
            .param(seed_param())
            .param(Parameter::with_default("noise", "float", 0.0.into()).help("score noise sigma"))
            .param(latency_param("cost per candidate")),
        |spec| {
            let seed = param::int(spec, "seed")? as u64;
            let noise = Normal::new(0.0, param::float(spec, "noise")?).map_err(|e| NodeError::Parameter {
                name: "noise".into(),
                message: e.to_string(),
            })?;
            let latency = millis(param::float(spec, "latency_ms")?);
            // noise stream differs per instance so two scorers disagree
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ latency.as_nanos() as u64);
            boxed(move |ctx| {
                let c: Candidate = ctx.receive("inp")?;
                ctx.sleep(latency)?;
                let dim = c.features.len();
                let s = oracle_score(&c.features, &optimum(seed, dim)) + noise.sample(&mut rng);
                let deviation = distance(&c.features, &reference(seed, dim));
                let mut c = c.scored(s, ScoreSource::Oracle);
                c.deviation = Some(deviation);
                ctx.send("out", &c)
            })
        },
    );

    // Docking stand-in: a deterministic pseudo-score per SMILES string
    // against a receptor file that must exist.
    r.register_template(
        NodeSpec::new("dock", "SyntheticDock")
            .input("inp", "list<string>")
            .output("out", "list<float>")
            .looped(true)
            .param(Parameter::required("receptor", "path").help("receptor structure file")),
        |spec| {
            let receptor = param::string(spec, "receptor")?;
            boxed(move |ctx| {
                let smiles: Vec<String> = ctx.receive("inp")?;
                let bytes = std::fs::read(&receptor)
                    .map_err(|e| NodeError::fatal(format!("cannot read receptor {receptor}: {e}")))?;
                let scores: Vec<f64> = smiles.iter().map(|s| pseudo_score(s, &bytes)).collect();
                for s in &scores {
                    ctx.record("score", *s);
                }
                ctx.send("out", &scores)
            })
        },
    );
}

/// FNV-1a over ligand and receptor, mapped to a docking-like range.
fn pseudo_score(smiles: &str, receptor: &[u8]) -> f64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in smiles.bytes().chain(receptor.iter().copied()) {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    -4.0 - 8.0 * (h % 10_000) as f64 / 10_000.0
}
