//! Map-guided iterative solving.
//!
//! Each round generates a response, maps its embedding to the nearest cognitive
//! state and gates on that state's trust: a reliable state (trust > 0.7) adds a
//! hint to the prompt, a deadlocked state (trust < 0.3) raises the next round's
//! temperature with probability `P`, and anything in between becomes a voting
//! candidate. Intervened rounds never vote.

mod answer;
mod backend;
mod batch;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cogmap::{CognitiveMap, MapError};
use crate::dynamics::{self, DeadlockConfig};
use crate::embed::{self, EmbedError, EmbeddingProvider};
use crate::navigator::{self, hint_text, InterventionAction, NavigatorError, NavigatorModel};
use crate::Scalar;

pub use answer::{
    evaluate_answer, extract_answer, extract_number, majority_vote, numeric_tolerance, Candidate, Decimal,
    ExtractedAnswer, ANSWER_MARKER, SEMANTIC_MATCH_THRESHOLD,
};
pub use backend::{
    BackendError, ChatBackend, ChatBackendConfig, Generation, GenerationBackend, GenerationRequest, ScenarioEntry,
    ScriptedBackend, LLM_KEY_ENV, LLM_MODEL_ENV, LLM_URL_ENV,
};
pub use batch::{batch_eval, run_learning_loop, BatchReport, ItemResult, LearnConfig, LearnReport, RoundReport};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("backend failed in round {round}: {source}")]
    Backend { round: usize, source: BackendError },
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Navigator(#[from] NavigatorError),
    #[error("no candidates to vote on")]
    NoCandidates,
    #[error("gold answer is empty")]
    EmptyGold,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid solve configuration: {0}")]
    InvalidConfig(String),
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Which signal drives interventions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateMode {
    /// Map trust of the current state (0.7 / 0.3).
    #[default]
    Trust,
    /// Navigator scores of outgoing transitions (0.6 / 0.5); falls back to the
    /// trust gate when no model is available.
    Navigator,
}

impl std::str::FromStr for GateMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "trust" => Ok(GateMode::Trust),
            "navigator" => Ok(GateMode::Navigator),
            other => Err(format!("unknown gate mode {other:?} (expected trust or navigator)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct SolveConfig<S: Scalar> {
    pub t_max: usize,
    /// Hint when the mapped state's trust is strictly above this.
    pub hint_trust: S,
    /// Deadlock when the mapped state's trust is strictly below this.
    pub perturb_trust: S,
    pub perturb_temperature: f64,
    /// Probability of applying a perturbation once the deadlock branch fires.
    pub intervention_prob: f64,
    pub base_temperature: f64,
    pub gate: GateMode,
    /// Extra attempts per round on retryable backend errors.
    pub max_retries: usize,
    pub seed: u64,
    /// Stop early once no remaining round could change the vote.
    pub stop_on_decisive_majority: bool,
}

impl<S: Scalar> Default for SolveConfig<S> {
    fn default() -> Self {
        Self {
            t_max: 5,
            hint_trust: S::lit(0.7),
            perturb_trust: S::lit(dynamics::DEPLOYED_DEADLOCK_TRUST),
            perturb_temperature: dynamics::DEFAULT_PERTURB_TEMPERATURE,
            intervention_prob: 0.5,
            base_temperature: 0.7,
            gate: GateMode::Trust,
            max_retries: 2,
            seed: 42,
            stop_on_decisive_majority: false,
        }
    }
}

impl<S: Scalar> SolveConfig<S> {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: &str| Err(EngineError::InvalidConfig(m.to_owned()));
        let unit = |v: S| v >= S::zero() && v <= S::one();
        if self.t_max == 0 {
            return bad("t_max must be at least 1");
        }
        if !unit(self.hint_trust) || !unit(self.perturb_trust) {
            return bad("trust thresholds must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.intervention_prob) {
            return bad("intervention probability must lie in [0, 1]");
        }
        if !(self.perturb_temperature > 0.0 && self.perturb_temperature.is_finite())
            || !(self.base_temperature > 0.0 && self.base_temperature.is_finite())
        {
            return bad("temperatures must be positive and finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "S: Scalar")]
pub struct RoundRecord<S: Scalar> {
    /// One-based round index.
    pub round: usize,
    pub temperature: f64,
    pub text: String,
    pub state: Option<usize>,
    pub trust: Option<S>,
    /// Mean token entropy in bits, when the backend returned log-probabilities.
    pub entropy: Option<S>,
    pub action: InterventionAction,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "S: Scalar")]
pub struct SolveResult<S: Scalar> {
    pub final_answer: String,
    pub extracted_answer: ExtractedAnswer,
    pub candidates: Vec<Candidate<S>>,
    pub interventions: Vec<(usize, InterventionAction)>,
    pub rounds: Vec<RoundRecord<S>>,
    pub rounds_used: usize,
    pub backend_calls: usize,
    pub retries: usize,
    /// Every round intervened; the answer is the last generation, unvoted.
    pub degraded: bool,
    pub correct: Option<bool>,
}

impl<S: Scalar> SolveResult<S> {
    pub fn hint_count(&self) -> usize {
        self.interventions.iter().filter(|(_, a)| matches!(a, InterventionAction::Hint { .. })).count()
    }

    pub fn perturb_count(&self) -> usize {
        self.interventions.iter().filter(|(_, a)| matches!(a, InterventionAction::Perturb { .. })).count()
    }
}

/// Seed for one question, so results do not depend on processing order.
pub fn item_seed(seed: u64, question: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(question.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// The question followed by accumulated hints, one per paragraph.
pub fn build_prompt(question: &str, hints: &[String]) -> String {
    let mut prompt = question.to_owned();
    for h in hints {
        prompt.push_str("\n\n");
        prompt.push_str(h);
    }
    prompt
}

/// Splits a response into reasoning steps: paragraphs separated by blank lines,
/// or sentences when the response is a single paragraph.
pub fn segment_steps(text: &str) -> Vec<String> {
    let mut paragraphs = Vec::new();
    let mut current = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                paragraphs.push(current.join("\n"));
                current.clear();
            }
        } else {
            current.push(line.trim_end());
        }
    }
    if !current.is_empty() {
        paragraphs.push(current.join("\n"));
    }
    if paragraphs.len() > 1 {
        return paragraphs.into_iter().map(|p| p.trim().to_owned()).collect();
    }
    split_sentences(text)
}

fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') && chars.peek().is_some_and(|(_, n)| n.is_whitespace()) {
            out.push(text[start..=i].trim().to_owned());
            start = i + 1;
        }
    }
    out.push(text[start..].trim().to_owned());
    out.retain(|s| !s.is_empty());
    out
}

fn generate_with_retries<B: GenerationBackend + ?Sized>(
    backend: &B,
    request: &GenerationRequest<'_>,
    max_retries: usize,
    retries: &mut usize,
) -> Result<Generation, BackendError> {
    let mut attempt = 0;
    loop {
        match backend.generate(request) {
            Ok(g) => return Ok(g),
            Err(e) if e.is_retryable() && attempt < max_retries => {
                attempt += 1;
                *retries += 1;
                log::warn!("retrying generation (attempt {}): {e}", attempt + 1);
            }
            Err(e) => return Err(e),
        }
    }
}

fn trust_gate<S: Scalar>(
    map: &CognitiveMap<S>,
    state: usize,
    trust: S,
    entropy: Option<S>,
    config: &SolveConfig<S>,
    rng: &mut ChaCha8Rng,
) -> Result<InterventionAction, EngineError> {
    if trust > config.hint_trust {
        return Ok(InterventionAction::Hint {
            hint_text: hint_text(&map.state(state)?.exemplar),
            target: Some(state),
        });
    }
    let deadlock = DeadlockConfig {
        threshold: config.perturb_trust,
    };
    if dynamics::detect_deadlock(trust, entropy, &deadlock) {
        return Ok(navigator::perturb_with_probability(
            config.intervention_prob,
            config.perturb_temperature,
            rng,
        ));
    }
    Ok(InterventionAction::None)
}

fn vote_is_decided<S: Scalar>(candidates: &[Candidate<S>], remaining: usize) -> bool {
    let mut sizes: Vec<usize> = Vec::new();
    let mut reps: Vec<&ExtractedAnswer> = Vec::new();
    for c in candidates {
        match reps.iter().position(|r| r.equivalent(&c.extracted_answer)) {
            Some(i) => sizes[i] += 1,
            None => {
                reps.push(&c.extracted_answer);
                sizes.push(1);
            }
        }
    }
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    match sizes.as_slice() {
        [] => false,
        [lead] => *lead > remaining,
        [lead, second, ..] => *lead > second + remaining,
    }
}

/// Runs the iterative solve loop for one question against a read-only map.
///
/// The map is only consulted; trust updates need a correctness label and
/// happen at ingestion. Each round issues exactly one generation, so a solve
/// makes at most `t_max` backend calls (plus retries).
pub fn solve<S, B, P>(
    question: &str,
    map: &CognitiveMap<S>,
    model: Option<&NavigatorModel<S>>,
    backend: &B,
    provider: &P,
    config: &SolveConfig<S>,
) -> Result<SolveResult<S>, EngineError>
where
    S: Scalar,
    B: GenerationBackend + ?Sized,
    P: EmbeddingProvider<S> + ?Sized,
{
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(item_seed(config.seed, question));
    let mut hints: Vec<String> = Vec::new();
    let mut temperature = config.base_temperature;
    let mut candidates = Vec::new();
    let mut interventions = Vec::new();
    let mut rounds = Vec::new();
    let mut retries = 0;

    for round in 1..=config.t_max {
        let prompt = build_prompt(question, &hints);
        let request = GenerationRequest {
            prompt: &prompt,
            temperature,
            call_index: round - 1,
        };
        let generation = generate_with_retries(backend, &request, config.max_retries, &mut retries)
            .map_err(|source| EngineError::Backend { round, source })?;
        let used_temperature = temperature;
        temperature = config.base_temperature;

        let logprobs: Vec<Vec<S>> = generation
            .top_logprobs
            .iter()
            .map(|pos| pos.iter().map(|&lp| S::lit(lp)).collect())
            .collect();
        let entropy = dynamics::mean_token_entropy(&logprobs);

        let mapped = if map.is_empty() || generation.text.trim().is_empty() {
            None
        } else {
            let v = embed::embed_text::<S, P>(&generation.text, provider)?;
            map.nearest_state(&v)?
        };
        let (state, trust) = match mapped {
            Some((id, _)) => (Some(id), Some(map.state(id)?.trust)),
            None => (None, None),
        };

        let action = match state {
            None => InterventionAction::None,
            Some(id) => match (config.gate, model) {
                (GateMode::Navigator, Some(m)) => navigator::decide(map, m, id, config.intervention_prob, &mut rng)?,
                _ => trust_gate(map, id, trust.expect("mapped state has trust"), entropy, config, &mut rng)?,
            },
        };

        match &action {
            InterventionAction::Hint { hint_text, .. } => {
                if !hints.contains(hint_text) {
                    hints.push(hint_text.clone());
                }
                interventions.push((round, action.clone()));
            }
            InterventionAction::Perturb { temperature: t } => {
                temperature = *t;
                interventions.push((round, action.clone()));
            }
            InterventionAction::None => {
                let t = trust.unwrap_or_else(|| S::lit(0.5));
                candidates.push(Candidate::new(generation.text.clone(), t, round));
            }
        }
        log::debug!(
            "round {round}: T={used_temperature} state={state:?} trust={trust:?} action={}",
            action.kind()
        );
        rounds.push(RoundRecord {
            round,
            temperature: used_temperature,
            text: generation.text,
            state,
            trust,
            entropy,
            action,
        });
        if config.stop_on_decisive_majority && vote_is_decided(&candidates, config.t_max - round) {
            break;
        }
    }

    let rounds_used = rounds.len();
    let (final_answer, extracted_answer, degraded) = if candidates.is_empty() {
        let last = rounds.last().expect("t_max ≥ 1").text.clone();
        let extracted = extract_answer(&last);
        (last, extracted, true)
    } else {
        let w = &candidates[majority_vote(&candidates)?];
        (w.answer_text.clone(), w.extracted_answer.clone(), false)
    };
    Ok(SolveResult {
        final_answer,
        extracted_answer,
        candidates,
        interventions,
        rounds,
        rounds_used,
        backend_calls: rounds_used,
        retries,
        degraded,
        correct: None,
    })
}
