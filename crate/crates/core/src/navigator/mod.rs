//! Learned transition scorer.
//!
//! Each map edge becomes a feature row `[centroid(src); centroid(dst); norm_count; rate]`
//! of length `2d + 2`. Edges with clear outcomes (rate ≥ 0.7 or ≤ 0.3 over at least
//! five traversals) label a training set for a `2d+2 → 256 → 256 → 1` MLP, whose
//! sigmoid output scores candidate transitions. [`decide`] turns the best
//! outgoing score into a hint, a temperature perturbation, or nothing.

mod mlp;
mod persist;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cogmap::{CognitiveMap, MapError, TransitionEdge};
use crate::Scalar;

pub use mlp::{sigmoid, AdamConfig, Dense, Mlp};
pub use persist::{load_model, model_from_json, model_to_json, save_model, MODEL_FILE_VERSION};

pub const HINT_PREFIX: &str = "A previously successful approach at this point: ";

/// Hint injected into the prompt for a state with the given exemplar text.
pub fn hint_text(exemplar: &str) -> String {
    format!("{HINT_PREFIX}{exemplar}")
}

#[derive(Debug, Error)]
pub enum NavigatorError {
    #[error("map has no edges, transition counts cannot be normalized")]
    EmptyMap,
    #[error("edge {0}->{1} does not exist")]
    UnknownEdge(usize, usize),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training set contains only {0} examples")]
    SingleClass(&'static str),
    #[error("feature length {got} does not match model input {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite feature value")]
    NonFinite,
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("model file I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("model file version {found} is not supported (expected {expected})")]
    Version { found: u64, expected: u64 },
    #[error("model file checksum mismatch")]
    Checksum,
    #[error("malformed model file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InterventionAction {
    Hint {
        hint_text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target: Option<usize>,
    },
    Perturb {
        temperature: f64,
    },
    None,
}

impl InterventionAction {
    pub fn is_none(&self) -> bool {
        matches!(self, InterventionAction::None)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            InterventionAction::Hint { .. } => "hint",
            InterventionAction::Perturb { .. } => "perturb",
            InterventionAction::None => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFeatures<S: Scalar> {
    values: Vec<S>,
}

impl<S: Scalar> EdgeFeatures<S> {
    pub fn as_slice(&self) -> &[S] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm_count(&self) -> S {
        self.values[self.values.len() - 2]
    }

    pub fn rate(&self) -> S {
        self.values[self.values.len() - 1]
    }

    /// Wraps raw feature values (length `2d + 2`, all finite).
    pub fn from_values(values: Vec<S>) -> Result<Self, NavigatorError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(NavigatorError::NonFinite);
        }
        Ok(Self { values })
    }
}

/// Features of `edge`, normalizing its count by `max_count`.
pub fn edge_features<S: Scalar>(
    map: &CognitiveMap<S>,
    edge: &TransitionEdge,
    max_count: u64,
) -> Result<EdgeFeatures<S>, NavigatorError> {
    if max_count == 0 {
        return Err(NavigatorError::EmptyMap);
    }
    let src = map.state(edge.src)?;
    let dst = map.state(edge.dst)?;
    let mut values = Vec::with_capacity(2 * map.dimension() + 2);
    values.extend_from_slice(src.centroid.as_slice());
    values.extend_from_slice(dst.centroid.as_slice());
    let norm = (S::from_count(edge.total) / S::from_count(max_count)).min(S::one());
    values.push(norm);
    values.push(edge.rate());
    Ok(EdgeFeatures { values })
}

/// Features of the edge `src -> dst`, normalizing by the busiest edge of the map.
pub fn build_features<S: Scalar>(
    map: &CognitiveMap<S>,
    src: usize,
    dst: usize,
) -> Result<EdgeFeatures<S>, NavigatorError> {
    let max = map.max_edge_total().ok_or(NavigatorError::EmptyMap)?;
    let edge = map.edge(src, dst).ok_or(NavigatorError::UnknownEdge(src, dst))?;
    edge_features(map, edge, max)
}

/// Label of an edge: positive for rate ≥ 0.7, negative for rate ≤ 0.3, both
/// requiring at least 5 traversals. Compared in integers so boundaries are exact.
pub fn edge_label(success: u64, total: u64) -> Option<bool> {
    if total < 5 {
        return None;
    }
    if 10 * success >= 7 * total {
        Some(true)
    } else if 10 * success <= 3 * total {
        Some(false)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet<S: Scalar> {
    pub rows: Vec<(EdgeFeatures<S>, bool)>,
    /// Count used to normalize `norm_count` when the rows were built.
    pub max_edge_count: u64,
}

impl<S: Scalar> TrainingSet<S> {
    pub fn positives(&self) -> usize {
        self.rows.iter().filter(|(_, l)| *l).count()
    }

    pub fn negatives(&self) -> usize {
        self.rows.len() - self.positives()
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.rows.first().map(|(f, _)| f.len())
    }
}

pub fn extract_training_set<S: Scalar>(map: &CognitiveMap<S>) -> TrainingSet<S> {
    let max = map.max_edge_total().unwrap_or(0);
    let rows = map
        .edges()
        .filter_map(|e| {
            let label = edge_label(e.success, e.total)?;
            let f = edge_features(map, e, max).expect("edge endpoints exist in their map");
            Some((f, label))
        })
        .collect();
    TrainingSet {
        rows,
        max_edge_count: max,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub hidden: [usize; 2],
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            hidden: [256, 256],
            seed: 42,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct PolicyThresholds<S: Scalar> {
    /// Hint when the best outgoing score exceeds this.
    pub hint: S,
    /// Perturb (with probability P) when the best outgoing score is below this.
    pub perturb: S,
    pub temperature: f64,
}

impl<S: Scalar> Default for PolicyThresholds<S> {
    fn default() -> Self {
        Self {
            hint: S::lit(0.6),
            perturb: S::lit(0.5),
            temperature: crate::dynamics::DEFAULT_PERTURB_TEMPERATURE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct NavigatorModel<S: Scalar> {
    pub mlp: Mlp<S>,
    pub train: TrainConfig,
    /// Busiest edge count of the map the model was trained on.
    pub max_edge_count: u64,
    pub policy: PolicyThresholds<S>,
    pub train_accuracy: S,
    pub train_loss: S,
}

impl<S: Scalar> NavigatorModel<S> {
    pub fn input_dim(&self) -> usize {
        self.mlp.input_dim()
    }

    /// Transition value in the open interval (0, 1).
    pub fn score(&self, features: &EdgeFeatures<S>) -> Result<S, NavigatorError> {
        if features.len() != self.input_dim() {
            return Err(NavigatorError::DimensionMismatch {
                expected: self.input_dim(),
                got: features.len(),
            });
        }
        if features.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(NavigatorError::NonFinite);
        }
        let p = sigmoid(self.mlp.logit(features.as_slice()));
        Ok(p.max(S::epsilon()).min(S::one() - S::epsilon()))
    }

    /// Fraction of `set` classified correctly at the 0.5 cut.
    pub fn accuracy(&self, set: &TrainingSet<S>) -> S {
        let rows: Vec<(&[S], bool)> = set.rows.iter().map(|(f, l)| (f.as_slice(), *l)).collect();
        mlp::evaluate(&self.mlp, &rows).accuracy
    }
}

/// Trains a fresh network on `set`. Deterministic for a fixed `config.seed`.
pub fn train<S: Scalar>(set: &TrainingSet<S>, config: &TrainConfig) -> Result<NavigatorModel<S>, NavigatorError> {
    let input = set.input_dim().ok_or(NavigatorError::EmptyTrainingSet)?;
    match (set.positives(), set.negatives()) {
        (0, _) => return Err(NavigatorError::SingleClass("negative")),
        (_, 0) => return Err(NavigatorError::SingleClass("positive")),
        _ => {}
    }
    if let Some((f, _)) = set.rows.iter().find(|(f, _)| f.len() != input) {
        return Err(NavigatorError::DimensionMismatch {
            expected: input,
            got: f.len(),
        });
    }
    let rows: Vec<(&[S], bool)> = set.rows.iter().map(|(f, l)| (f.as_slice(), *l)).collect();
    let mut net = Mlp::new(input, &config.hidden, config.seed);
    let mut trainer = mlp::Trainer::new(&net, config.adam);
    for epoch in 0..config.epochs {
        let stats = trainer.epoch(&mut net, &rows);
        log::trace!("epoch {epoch}: loss={} acc={}", stats.loss, stats.accuracy);
    }
    let final_stats = mlp::evaluate(&net, &rows);
    Ok(NavigatorModel {
        mlp: net,
        train: *config,
        max_edge_count: set.max_edge_count,
        policy: PolicyThresholds::default(),
        train_accuracy: final_stats.accuracy,
        train_loss: final_stats.loss,
    })
}

/// Best-scoring outgoing transition of `state` as `(target, score)`; ties go to
/// the lowest target id. Counts are normalized by the map's current busiest edge.
pub fn best_transition<S: Scalar>(
    map: &CognitiveMap<S>,
    model: &NavigatorModel<S>,
    state: usize,
) -> Result<Option<(usize, S)>, NavigatorError> {
    map.state(state)?;
    let Some(max) = map.max_edge_total() else {
        return Ok(None);
    };
    let mut best: Option<(usize, S)> = None;
    for e in map.outgoing(state) {
        let s = model.score(&edge_features(map, e, max)?)?;
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((e.dst, s));
        }
    }
    Ok(best)
}

/// Navigator policy: hint toward the best successor when its score clears the
/// hint threshold, perturb with probability `intervention_prob` when even the
/// best successor scores below the perturb threshold (or there is none), and
/// otherwise leave the generation alone.
pub fn decide<S: Scalar, R: Rng + ?Sized>(
    map: &CognitiveMap<S>,
    model: &NavigatorModel<S>,
    state: usize,
    intervention_prob: f64,
    rng: &mut R,
) -> Result<InterventionAction, NavigatorError> {
    let policy = &model.policy;
    match best_transition(map, model, state)? {
        Some((target, score)) if score > policy.hint => Ok(InterventionAction::Hint {
            hint_text: hint_text(&map.state(target)?.exemplar),
            target: Some(target),
        }),
        Some((_, score)) if score >= policy.perturb => Ok(InterventionAction::None),
        _ => Ok(perturb_with_probability(intervention_prob, policy.temperature, rng)),
    }
}

pub(crate) fn perturb_with_probability<R: Rng + ?Sized>(p: f64, temperature: f64, rng: &mut R) -> InterventionAction {
    if rng.random::<f64>() < p {
        InterventionAction::Perturb { temperature }
    } else {
        InterventionAction::None
    }
}
