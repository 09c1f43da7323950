use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub const CANDIDATE: &str = "candidate";
pub const CANDIDATES: &str = "list<candidate>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreSource {
    #[default]
    None,
    Surrogate,
    Oracle,
}

/// Stand-in for a generated molecule: a point in feature space plus the
/// best score known for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: u64,
    pub features: Vec<f64>,
    pub score: Option<f64>,
    #[serde(default)]
    pub score_source: ScoreSource,
    /// Distance to the reference pose; only set by the precision scorers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deviation: Option<f64>,
}

impl Candidate {
    pub fn new(id: u64, features: Vec<f64>) -> Self {
        debug_assert!(features.iter().all(|x| x.is_finite()));
        Candidate {
            id,
            features,
            score: None,
            score_source: ScoreSource::None,
            deviation: None,
        }
    }

    pub fn scored(mut self, score: f64, source: ScoreSource) -> Self {
        self.score = Some(score);
        self.score_source = source;
        self
    }

    /// Score and source are set together or not at all.
    pub fn is_consistent(&self) -> bool {
        self.features.iter().all(|x| x.is_finite())
            && self.score.is_some() == (self.score_source != ScoreSource::None)
    }
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn seeded_point(seed: u64, salt: u64, dim: usize, spread: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt);
    (0..dim).map(|_| rng.random_range(-spread..spread)).collect()
}

/// Hidden optimum of the analytic oracle.
pub fn optimum(seed: u64, dim: usize) -> Vec<f64> {
    seeded_point(seed, 0x6f72_6163_6c65, dim, 2.0)
}

/// Reference pose the precision demo measures deviation against.
pub fn reference(seed: u64, dim: usize) -> Vec<f64> {
    seeded_point(seed, 0x7265_6665_7265, dim, 1.0)
}

/// The expensive ground truth: negative distance to the hidden optimum.
pub fn oracle_score(features: &[f64], optimum: &[f64]) -> f64 {
    -distance(features, optimum)
}

/// Gaussian sampler whose centre drifts toward the best-scored region it
/// is told about.
#[derive(Debug, Clone)]
pub struct SyntheticSampler {
    rng: ChaCha8Rng,
    center: Vec<f64>,
    noise: Normal<f64>,
    next_id: u64,
}

impl SyntheticSampler {
    pub fn new(seed: u64, dim: usize, sigma: f64) -> Self {
        SyntheticSampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
            center: vec![0.0; dim],
            noise: Normal::new(0.0, sigma).expect("sigma must be finite and non-negative"),
            next_id: 0,
        }
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn batch(&mut self, size: usize) -> Vec<Candidate> {
        (0..size)
            .map(|_| {
                let features = self
                    .center
                    .iter()
                    .map(|c| c + self.noise.sample(&mut self.rng))
                    .collect();
                self.next_id += 1;
                Candidate::new(self.next_id - 1, features)
            })
            .collect()
    }

    /// Moves the centre to the mean features of the top 10% by score.
    pub fn reinforce(&mut self, scored: &[Candidate]) {
        let mut ranked: Vec<&Candidate> = scored.iter().filter(|c| c.score.is_some()).collect();
        if ranked.is_empty() {
            return;
        }
        ranked.sort_by(|a, b| b.score.unwrap().total_cmp(&a.score.unwrap()).then(a.id.cmp(&b.id)));
        let top = &ranked[..ranked.len().div_ceil(10)];
        for (d, c) in self.center.iter_mut().enumerate() {
            *c = top.iter().map(|x| x.features[d]).sum::<f64>() / top.len() as f64;
        }
    }
}
