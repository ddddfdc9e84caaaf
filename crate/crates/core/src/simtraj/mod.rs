//! Synthetic reasoning corpora.
//!
//! Concepts are rendered as fixed token strings (`c{id}t0 .. c{id}t5`) that the
//! stub embedder places far apart, so each concept lands in its own state.
//! Trajectories chain concepts that share a success rate; failing ones may
//! additionally loop through a designated vortex of concepts, which produces a
//! low-trust strongly connected component once ingested.

mod task;

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::Embedding;
use crate::ingest::TrajectoryRecord;
use crate::navigator::{EdgeFeatures, TrainingSet};
use crate::Scalar;

pub use task::{ProblemKind, SimTask, SimulatedBackend, TaskConfig};

pub const TOKENS_PER_CONCEPT: usize = 6;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub seed: u64,
    pub n_concepts: usize,
    /// Concepts `0..vortex_size` form the vortex; they never lead a trajectory.
    pub vortex_size: usize,
    pub success_rate_by_concept: BTreeMap<usize, f64>,
    pub default_success_rate: f64,
    pub n_trajectories: usize,
    pub min_length: usize,
    pub max_length: usize,
    /// Probability that a failing trajectory detours through the vortex.
    pub vortex_fraction: f64,
    /// Laps around the vortex per detour.
    pub vortex_cycles: usize,
    /// Probability of replacing each concept token with a random filler token.
    pub paraphrase_noise: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            n_concepts: 12,
            vortex_size: 0,
            success_rate_by_concept: BTreeMap::new(),
            default_success_rate: 0.5,
            n_trajectories: 200,
            min_length: 3,
            max_length: 6,
            vortex_fraction: 0.5,
            vortex_cycles: 2,
            paraphrase_noise: 0.0,
        }
    }
}

impl SimConfig {
    pub fn success_rate(&self, concept: usize) -> f64 {
        self.success_rate_by_concept
            .get(&concept)
            .copied()
            .unwrap_or(self.default_success_rate)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if self.vortex_size > self.n_concepts {
            return bad(format!("vortex_size {} exceeds n_concepts {}", self.vortex_size, self.n_concepts));
        }
        if self.vortex_size == self.n_concepts {
            return bad("at least one concept must lie outside the vortex".into());
        }
        if self.min_length == 0 || self.min_length > self.max_length {
            return bad(format!("bad length range {}..={}", self.min_length, self.max_length));
        }
        if !prob(self.default_success_rate) || !prob(self.vortex_fraction) || !prob(self.paraphrase_noise) {
            return bad("probabilities must lie in [0, 1]".into());
        }
        if let Some((c, p)) = self.success_rate_by_concept.iter().find(|(c, p)| !prob(**p) || **c >= self.n_concepts) {
            return bad(format!("success rate {p} for concept {c} is out of range"));
        }
        if self.vortex_size > 0 && self.vortex_cycles == 0 {
            return bad("vortex_cycles must be positive".into());
        }
        Ok(())
    }
}

/// Canonical text of a concept.
pub fn concept_text(concept: usize) -> String {
    (0..TOKENS_PER_CONCEPT)
        .map(|j| format!("c{concept}t{j}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn render_concept<R: Rng>(concept: usize, noise: f64, rng: &mut R) -> String {
    (0..TOKENS_PER_CONCEPT)
        .map(|j| {
            if noise > 0.0 && rng.random::<f64>() < noise {
                format!("f{}", rng.random_range(0..100_000u32))
            } else {
                format!("c{concept}t{j}")
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Generates `n_trajectories` records, deterministic in `config.seed`.
///
/// Returns the records together with the concept sequence behind each one.
pub fn generate_with_concepts(config: &SimConfig) -> Result<Vec<(TrajectoryRecord, Vec<usize>)>, SimError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let leads: Vec<usize> = (config.vortex_size..config.n_concepts).collect();
    let mut out = Vec::with_capacity(config.n_trajectories);
    for i in 0..config.n_trajectories {
        let lead = leads[rng.random_range(0..leads.len())];
        let rate = config.success_rate(lead);
        let peers: Vec<usize> = leads
            .iter()
            .copied()
            .filter(|&c| config.success_rate(c) == rate)
            .collect();
        let outcome = rng.random::<f64>() < rate;
        let len = rng.random_range(config.min_length..=config.max_length);
        let mut concepts = vec![lead];
        for _ in 1..len {
            concepts.push(peers[rng.random_range(0..peers.len())]);
        }
        if !outcome && config.vortex_size > 0 && rng.random::<f64>() < config.vortex_fraction {
            let start = rng.random_range(0..config.vortex_size);
            for lap in 0..config.vortex_cycles * config.vortex_size {
                concepts.push((start + lap) % config.vortex_size);
            }
        }
        let steps = concepts
            .iter()
            .map(|&c| render_concept(c, config.paraphrase_noise, &mut rng))
            .collect();
        out.push((
            TrajectoryRecord {
                id: format!("sim-{i}"),
                steps,
                outcome,
            },
            concepts,
        ));
    }
    Ok(out)
}

pub fn generate(config: &SimConfig) -> Result<Vec<TrajectoryRecord>, SimError> {
    Ok(generate_with_concepts(config)?.into_iter().map(|(r, _)| r).collect())
}

fn gaussian_unit<S: Scalar, R: Rng>(base: &[f64], spread: f64, rng: &mut R) -> Embedding<S> {
    let v = base
        .iter()
        .map(|b| {
            let z: f64 = StandardNormal.sample(rng);
            S::lit(b + spread * z)
        })
        .collect();
    Embedding::new(v).expect("perturbed anchor is not degenerate")
}

/// Linearly separable edge rows of dimension `2d + 2`: positives sit around a
/// random anchor with rates in [0.7, 1], negatives around its antipode with
/// rates in [0, 0.3].
pub fn separable_training_set<S: Scalar>(d: usize, per_class: usize, spread: f64, seed: u64) -> TrainingSet<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let anchor: Vec<f64> = {
        let raw: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        raw.into_iter().map(|x| x / n).collect()
    };
    let antipode: Vec<f64> = anchor.iter().map(|x| -x).collect();
    let mut rows = Vec::with_capacity(2 * per_class);
    for i in 0..2 * per_class {
        let positive = i % 2 == 0;
        let base = if positive { &anchor } else { &antipode };
        let src = gaussian_unit::<S, _>(base, spread, &mut rng);
        let dst = gaussian_unit::<S, _>(base, spread, &mut rng);
        let rate = if positive {
            rng.random_range(0.7..=1.0)
        } else {
            rng.random_range(0.0..=0.3)
        };
        let norm_count: f64 = rng.random_range(0.05..=1.0);
        let mut values = src.into_vec();
        values.extend(dst.into_vec());
        values.push(S::lit(norm_count));
        values.push(S::lit(rate));
        rows.push((EdgeFeatures::from_values(values).expect("finite"), positive));
    }
    TrainingSet {
        rows,
        max_edge_count: 100,
    }
}

#[cfg(test)]
mod tests;
