use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::candidate::{distance, Candidate, ScoreSource};

pub const MODEL: &str = "surrogate-model";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SurrogateError {
    #[error("surrogate model has no training data")]
    UntrainedModel,
    #[error("candidate {0} has no oracle score")]
    MissingOracleScore(u64),
}

/// k-nearest-neighbour mean predictor over every oracle-scored point seen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub k: usize,
    /// Number of training batches folded in so far.
    pub version: u64,
    pub points: Vec<(Vec<f64>, f64)>,
}

impl SurrogateModel {
    pub fn new(k: usize) -> Self {
        SurrogateModel {
            k: k.max(1),
            version: 0,
            points: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Adds one batch of oracle-scored candidates. Duplicates are kept.
    pub fn train(&mut self, batch: &[Candidate]) -> Result<(), SurrogateError> {
        let mut fresh = Vec::with_capacity(batch.len());
        for c in batch {
            match (c.score, c.score_source) {
                (Some(s), ScoreSource::Oracle) => fresh.push((c.features.clone(), s)),
                _ => return Err(SurrogateError::MissingOracleScore(c.id)),
            }
        }
        self.points.extend(fresh);
        self.version += 1;
        Ok(())
    }

    pub fn predict(&self, features: &[f64]) -> Result<f64, SurrogateError> {
        if self.points.is_empty() {
            return Err(SurrogateError::UntrainedModel);
        }
        let mut nearest: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, (x, _))| (distance(x, features), i))
            .collect();
        let k = self.k.min(nearest.len());
        nearest.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(nearest[..k].iter().map(|&(_, i)| self.points[i].1).sum::<f64>() / k as f64)
    }

    pub fn score_all(&self, batch: Vec<Candidate>) -> Result<Vec<Candidate>, SurrogateError> {
        batch
            .into_iter()
            .map(|c| {
                let s = self.predict(&c.features)?;
                Ok(c.scored(s, ScoreSource::Surrogate))
            })
            .collect()
    }
}

/// Acquisition functions. Upper-confidence bound is not offered: a k-NN
/// mean has no variance estimate to add.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    Random,
    Greedy,
    EpsilonGreedy(f64),
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Greedy => "greedy",
            Strategy::EpsilonGreedy(_) => "epsilon-greedy",
        }
    }

    pub fn epsilon(self) -> f64 {
        match self {
            Strategy::EpsilonGreedy(e) => e,
            _ => 0.0,
        }
    }

    pub fn from_parts(name: &str, epsilon: f64) -> Result<Self, String> {
        match name.parse()? {
            Strategy::EpsilonGreedy(_) if !(0.0..=1.0).contains(&epsilon) => {
                Err(format!("epsilon must lie in [0, 1], got {epsilon}"))
            }
            Strategy::EpsilonGreedy(_) => Ok(Strategy::EpsilonGreedy(epsilon)),
            s => Ok(s),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(Strategy::Random),
            "greedy" => Ok(Strategy::Greedy),
            "epsilon-greedy" => Ok(Strategy::EpsilonGreedy(0.1)),
            "ucb" => Err("ucb needs a variance estimate, which the k-NN surrogate lacks".into()),
            other => Err(format!("unknown acquisition strategy {other:?}")),
        }
    }
}

/// Splits `batch` into `k` acquired candidates and the remainder. Every
/// input candidate lands in exactly one of the two.
pub fn acquire<R: Rng>(
    batch: Vec<Candidate>,
    k: usize,
    strategy: Strategy,
    rng: &mut R,
) -> (Vec<Candidate>, Vec<Candidate>) {
    let k = k.min(batch.len());
    let mut picked = vec![false; batch.len()];
    let random = match strategy {
        Strategy::Random => k,
        Strategy::Greedy => 0,
        Strategy::EpsilonGreedy(e) => ((e * k as f64).round() as usize).min(k),
    };
    for i in index::sample(rng, batch.len(), random) {
        picked[i] = true;
    }
    let mut ranked: Vec<usize> = (0..batch.len()).filter(|&i| !picked[i]).collect();
    ranked.sort_by(|&a, &b| {
        let sa = batch[a].score.unwrap_or(f64::NEG_INFINITY);
        let sb = batch[b].score.unwrap_or(f64::NEG_INFINITY);
        sb.total_cmp(&sa).then(batch[a].id.cmp(&batch[b].id))
    });
    for &i in ranked.iter().take(k - random) {
        picked[i] = true;
    }
    let (acquired, rest): (Vec<_>, Vec<_>) = batch.into_iter().zip(picked).partition(|(_, p)| *p);
    (
        acquired.into_iter().map(|(c, _)| c).collect(),
        rest.into_iter().map(|(c, _)| c).collect(),
    )
}
