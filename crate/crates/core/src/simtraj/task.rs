//! A simulated question-answering task with a built-in failure attractor.
//!
//! Trap problems pull the simulated model into a loop over the vortex
//! concepts, ending in a consistent wrong answer, unless it samples hot or the
//! prompt carries a hint. Normal problems are coin flips over general
//! concepts with scattered wrong answers. Plain repeated sampling therefore
//! locks onto the trap's wrong answer, while a map that has learned the vortex
//! is low-trust can escape it.

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{concept_text, SimError};
use crate::engine::{BackendError, Generation, GenerationBackend, GenerationRequest};
use crate::ingest::Problem;
use crate::navigator::HINT_PREFIX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Normal,
    Trap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskConfig {
    pub seed: u64,
    pub n_problems: usize,
    pub trap_fraction: f64,
    pub vortex_size: usize,
    /// General concepts, numbered after the vortex.
    pub general_concepts: usize,
    pub min_path: usize,
    pub max_path: usize,
    /// Probability of a correct answer on a normal problem.
    pub normal_correct: f64,
    /// Probability that a trap problem falls into the vortex when sampled cold.
    pub trap_capture: f64,
    /// Probability of a correct answer on a trap problem when sampled hot or hinted.
    pub trap_escape: f64,
    /// Temperatures at or above this count as hot.
    pub escape_temperature: f64,
    pub vortex_laps: usize,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            n_problems: 1000,
            trap_fraction: 0.5,
            vortex_size: 3,
            general_concepts: 12,
            min_path: 3,
            max_path: 5,
            normal_correct: 0.5,
            trap_capture: 0.85,
            trap_escape: 0.9,
            escape_temperature: 1.2,
            vortex_laps: 2,
        }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.trap_fraction) || !prob(self.normal_correct) || !prob(self.trap_capture) || !prob(self.trap_escape)
        {
            return Err(SimError::InvalidConfig("probabilities must lie in [0, 1]".into()));
        }
        if self.vortex_size == 0 || self.general_concepts == 0 || self.vortex_laps == 0 {
            return Err(SimError::InvalidConfig("vortex, laps and general pool must be non-empty".into()));
        }
        if self.min_path == 0 || self.min_path > self.max_path {
            return Err(SimError::InvalidConfig("bad path length range".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Key {
    kind: ProblemKind,
    answer: i64,
}

/// Problems plus the simulated model that answers them.
#[derive(Debug, Clone)]
pub struct SimTask {
    config: TaskConfig,
    problems: Vec<Problem>,
    kinds: Vec<ProblemKind>,
}

impl SimTask {
    pub fn new(config: TaskConfig) -> Result<Self, SimError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut problems = Vec::with_capacity(config.n_problems);
        let mut kinds = Vec::with_capacity(config.n_problems);
        for i in 0..config.n_problems {
            let kind = if rng.random::<f64>() < config.trap_fraction {
                ProblemKind::Trap
            } else {
                ProblemKind::Normal
            };
            let answer: i64 = rng.random_range(10..1000);
            problems.push(Problem {
                id: format!("task-{i}"),
                question: format!("simulated problem {i}: find the value of quantity q{i}"),
                gold_answer: format!("#### {answer}"),
                domain_tag: match kind {
                    ProblemKind::Normal => "normal",
                    ProblemKind::Trap => "trap",
                }
                .into(),
            });
            kinds.push(kind);
        }
        Ok(Self {
            config,
            problems,
            kinds,
        })
    }

    pub fn problems(&self) -> &[Problem] {
        &self.problems
    }

    pub fn kinds(&self) -> &[ProblemKind] {
        &self.kinds
    }

    pub fn config(&self) -> &TaskConfig {
        &self.config
    }

    pub fn backend(&self) -> SimulatedBackend {
        let keys = self
            .problems
            .iter()
            .zip(&self.kinds)
            .map(|(p, &kind)| {
                let answer = p.gold_answer.trim_start_matches("#### ").parse().expect("generated answer");
                (p.question.clone(), Key { kind, answer })
            })
            .collect();
        SimulatedBackend {
            config: self.config.clone(),
            keys,
        }
    }
}

/// Deterministic stand-in for a language model on a [`SimTask`]: the response
/// is a pure function of (prompt, temperature, call index).
#[derive(Debug, Clone)]
pub struct SimulatedBackend {
    config: TaskConfig,
    keys: HashMap<String, Key>,
}

impl SimulatedBackend {
    fn rng_for(&self, req: &GenerationRequest<'_>) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.config.seed.to_le_bytes());
        h.update((req.call_index as u64).to_le_bytes());
        h.update(req.temperature.to_bits().to_le_bytes());
        h.update(req.prompt.as_bytes());
        ChaCha8Rng::from_seed(h.finalize().into())
    }

    fn general_path<R: Rng>(&self, rng: &mut R) -> Vec<usize> {
        let len = rng.random_range(self.config.min_path..=self.config.max_path);
        let base = self.config.vortex_size;
        (0..len)
            .map(|_| base + rng.random_range(0..self.config.general_concepts))
            .collect()
    }

    fn vortex_path<R: Rng>(&self, rng: &mut R) -> Vec<usize> {
        let k = self.config.vortex_size;
        let start = rng.random_range(0..k);
        (0..k * self.config.vortex_laps).map(|i| (start + i) % k).collect()
    }
}

fn render(concepts: &[usize], answer: i64) -> String {
    let mut parts: Vec<String> = concepts.iter().map(|&c| concept_text(c)).collect();
    parts.push(format!("therefore the final answer is #### {answer}"));
    parts.join("\n\n")
}

impl GenerationBackend for SimulatedBackend {
    fn generate(&self, req: &GenerationRequest<'_>) -> Result<Generation, BackendError> {
        let question = req.prompt.split("\n\n").next().unwrap_or_default();
        let key = self
            .keys
            .get(question)
            .ok_or_else(|| BackendError::Format(format!("unknown simulated question {question:?}")))?;
        let mut rng = self.rng_for(req);
        let text = match key.kind {
            ProblemKind::Normal => {
                let path = self.general_path(&mut rng);
                let answer = if rng.random::<f64>() < self.config.normal_correct {
                    key.answer
                } else {
                    key.answer + rng.random_range(2..=40)
                };
                render(&path, answer)
            }
            ProblemKind::Trap => {
                let escaped = req.temperature >= self.config.escape_temperature || req.prompt.contains(HINT_PREFIX);
                if escaped {
                    let path = self.general_path(&mut rng);
                    let answer = if rng.random::<f64>() < self.config.trap_escape {
                        key.answer
                    } else {
                        key.answer + 1
                    };
                    render(&path, answer)
                } else if rng.random::<f64>() < self.config.trap_capture {
                    render(&self.vortex_path(&mut rng), key.answer + 1)
                } else {
                    render(&self.general_path(&mut rng), key.answer)
                }
            }
        };
        Ok(Generation::text(text))
    }
}
