//! Dataset-level evaluation and the online learning loop.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    evaluate_answer, segment_steps, solve, EngineError, GateMode, GenerationBackend, SolveConfig, SolveResult,
};
use crate::cogmap::{save_map, CognitiveMap};
use crate::embed::EmbeddingProvider;
use crate::ingest::Problem;
use crate::navigator::{self, extract_training_set, save_model, NavigatorModel, TrainConfig};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub id: String,
    pub correct: bool,
    pub final_answer: String,
    pub rounds_used: usize,
    pub hints: usize,
    pub perturbations: usize,
    pub degraded: bool,
    /// Set when the item failed; such items count as incorrect with zero rounds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub total: usize,
    pub correct: usize,
    pub success_rate: f64,
    /// Mean of `rounds_used` over all items.
    pub average_rounds: f64,
    pub hint_count: usize,
    pub perturb_count: usize,
    pub degraded_count: usize,
    pub error_count: usize,
    pub items: Vec<ItemResult>,
}

impl BatchReport {
    fn from_items(items: Vec<ItemResult>) -> Self {
        let total = items.len();
        let correct = items.iter().filter(|i| i.correct).count();
        let rounds: usize = items.iter().map(|i| i.rounds_used).sum();
        Self {
            total,
            correct,
            success_rate: correct as f64 / total as f64,
            average_rounds: rounds as f64 / total as f64,
            hint_count: items.iter().map(|i| i.hints).sum(),
            perturb_count: items.iter().map(|i| i.perturbations).sum(),
            degraded_count: items.iter().filter(|i| i.degraded).count(),
            error_count: items.iter().filter(|i| i.error.is_some()).count(),
            items,
        }
    }
}

fn solve_item<S, B, P>(
    problem: &Problem,
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
    let mut result = solve(&problem.question, map, model, backend, provider, config)?;
    result.correct = Some(evaluate_answer::<S, P>(&result.final_answer, &problem.gold_answer, provider)?);
    Ok(result)
}

fn item_result<S: Scalar>(problem: &Problem, outcome: &Result<SolveResult<S>, EngineError>) -> ItemResult {
    match outcome {
        Ok(r) => ItemResult {
            id: problem.id.clone(),
            correct: r.correct == Some(true),
            final_answer: r.final_answer.clone(),
            rounds_used: r.rounds_used,
            hints: r.hint_count(),
            perturbations: r.perturb_count(),
            degraded: r.degraded,
            error: None,
        },
        Err(e) => {
            log::warn!("item {} failed: {e}", problem.id);
            ItemResult {
                id: problem.id.clone(),
                correct: false,
                final_answer: String::new(),
                rounds_used: 0,
                hints: 0,
                perturbations: 0,
                degraded: false,
                error: Some(e.to_string()),
            }
        }
    }
}

/// Solves and scores every problem against a frozen map, in parallel.
/// Item failures are recorded and do not stop the run.
pub fn batch_eval<S, B, P>(
    problems: &[Problem],
    map: &CognitiveMap<S>,
    model: Option<&NavigatorModel<S>>,
    backend: &B,
    provider: &P,
    config: &SolveConfig<S>,
) -> Result<BatchReport, EngineError>
where
    S: Scalar,
    B: GenerationBackend + ?Sized,
    P: EmbeddingProvider<S> + ?Sized,
{
    if problems.is_empty() {
        return Err(EngineError::EmptyDataset);
    }
    config.validate()?;
    let items = problems
        .par_iter()
        .map(|p| item_result(p, &solve_item(p, map, model, backend, provider, config)))
        .collect();
    Ok(BatchReport::from_items(items))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct LearnConfig<S: Scalar> {
    pub rounds: usize,
    pub samples_per_round: usize,
    pub solve: SolveConfig<S>,
    pub train: TrainConfig,
    /// Artifacts go to `out_dir/round_{k}/`.
    pub out_dir: PathBuf,
}

impl<S: Scalar> LearnConfig<S> {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            rounds: 5,
            samples_per_round: 200,
            solve: SolveConfig::default(),
            train: TrainConfig::default(),
            out_dir: out_dir.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    /// One-based round index.
    pub round: usize,
    pub samples: usize,
    pub correct: usize,
    pub success_rate: f64,
    pub states: usize,
    pub edges: usize,
    pub hints: usize,
    pub perturbations: usize,
    pub training_rows: usize,
    /// Whether this round's solves were guided by a navigator from the previous round.
    pub navigator_used: bool,
    pub navigator_trained: bool,
    pub train_accuracy: Option<f64>,
    pub map_path: PathBuf,
    pub model_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnReport {
    pub rounds: Vec<RoundReport>,
    /// The dataset could not fill every requested round.
    pub truncated: bool,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), EngineError> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// Online learning: each round solves its slice of `problems` sequentially,
/// ingesting every generation (split into steps, labeled by its own
/// correctness) into `map` right after the solve, then persists the map and
/// retrains the navigator from the map's labeled edges.
///
/// Problems are consumed in order, `samples_per_round` per round; a short
/// dataset ends the loop early with `truncated` set.
pub fn run_learning_loop<S, B, P>(
    problems: &[Problem],
    map: &mut CognitiveMap<S>,
    backend: &B,
    provider: &P,
    config: &LearnConfig<S>,
) -> Result<LearnReport, EngineError>
where
    S: Scalar,
    B: GenerationBackend + ?Sized,
    P: EmbeddingProvider<S> + ?Sized,
{
    if problems.is_empty() {
        return Err(EngineError::EmptyDataset);
    }
    if config.samples_per_round == 0 {
        return Err(EngineError::InvalidConfig("samples_per_round must be positive".into()));
    }
    config.solve.validate()?;
    let slices: Vec<&[Problem]> = problems.chunks(config.samples_per_round).take(config.rounds).collect();
    let truncated = slices.len() < config.rounds || slices.last().is_some_and(|s| s.len() < config.samples_per_round);
    if truncated {
        log::warn!(
            "dataset of {} problems cannot fill {} rounds of {}; running {} round(s)",
            problems.len(),
            config.rounds,
            config.samples_per_round,
            slices.len()
        );
    }
    fs::create_dir_all(&config.out_dir)?;

    let mut model: Option<NavigatorModel<S>> = None;
    let mut reports = Vec::with_capacity(slices.len());
    for (k, slice) in slices.into_iter().enumerate() {
        let round = k + 1;
        let navigator_used = model.is_some() && config.solve.gate == GateMode::Navigator;
        let (mut correct, mut hints, mut perturbations) = (0, 0, 0);
        for problem in slice {
            let result = solve_item(problem, map, model.as_ref(), backend, provider, &config.solve)?;
            correct += usize::from(result.correct == Some(true));
            hints += result.hint_count();
            perturbations += result.perturb_count();
            for record in &result.rounds {
                let steps = segment_steps(&record.text);
                if steps.is_empty() {
                    continue;
                }
                let ok = evaluate_answer::<S, P>(&record.text, &problem.gold_answer, provider)?;
                map.ingest_trajectory(&steps, ok, provider)?;
            }
        }

        let dir = config.out_dir.join(format!("round_{round}"));
        fs::create_dir_all(&dir)?;
        let map_path = dir.join("map.json");
        save_map(map, &map_path)?;

        let set = extract_training_set(map);
        let (model_path, train_accuracy) = match navigator::train(&set, &config.train) {
            Ok(m) => {
                let path = dir.join("navigator.json");
                save_model(&m, &path)?;
                let acc = m.train_accuracy.to_f64_lossy();
                model = Some(m);
                (Some(path), Some(acc))
            }
            Err(e) => {
                log::warn!("round {round}: navigator not trained: {e}");
                (None, None)
            }
        };

        let report = RoundReport {
            round,
            samples: slice.len(),
            correct,
            success_rate: correct as f64 / slice.len() as f64,
            states: map.num_states(),
            edges: map.num_edges(),
            hints,
            perturbations,
            training_rows: set.rows.len(),
            navigator_used,
            navigator_trained: model_path.is_some(),
            train_accuracy,
            map_path,
            model_path,
        };
        log::info!(
            "round {round}: success {:.3}, {} states, {} edges",
            report.success_rate,
            report.states,
            report.edges
        );
        write_json(&dir.join("report.json"), &report)?;
        reports.push(report);
    }
    let report = LearnReport {
        rounds: reports,
        truncated,
    };
    write_json(&config.out_dir.join("learn_report.json"), &report)?;
    Ok(report)
}
