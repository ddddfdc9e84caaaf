//! The cognitive map: online nearest-neighbour clustering of step embeddings into
//! states, transition statistics between states, and per-state trust.
//!
//! A map has a single owner; mutation goes through `&mut CognitiveMap`, and a
//! shared `&CognitiveMap` is a frozen snapshot that any number of readers may use.
//! Ingestion is order-sensitive, so trajectories are applied sequentially.

mod persist;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{self, cosine, EmbedError, Embedding, EmbeddingProvider};
use crate::navigator::InterventionAction;
use crate::Scalar;

pub use persist::{load_map, map_from_json, map_to_json, save_map, MAP_FILE_VERSION};

#[derive(Debug, Error)]
pub enum MapError {
    #[error("embedding has dimension {got}, map expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown state id {0}")]
    UnknownState(usize),
    #[error("state {0} has no visit left to attach an outcome to")]
    OutcomeWithoutVisit(usize),
    #[error("trajectory has no steps")]
    EmptyTrajectory,
    #[error("invalid map configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("map file I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("map file version {found} is not supported (expected {expected})")]
    Version { found: u64, expected: u64 },
    #[error("map file checksum mismatch (stored {stored}, computed {computed})")]
    Checksum { stored: String, computed: String },
    #[error("malformed map file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrustMode {
    /// Trust is the historical success fraction `successes / visits`.
    Static,
    /// Trust follows `alpha * trust + (1 - alpha) * 1[success]`.
    Ema,
}

impl std::str::FromStr for TrustMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "static" => Ok(TrustMode::Static),
            "ema" => Ok(TrustMode::Ema),
            other => Err(format!("unknown trust mode {other:?} (expected static|ema)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct MapConfig<S: Scalar> {
    pub dimension: usize,
    /// Minimum cosine similarity for joining an existing state.
    pub tau_cluster: S,
    /// Weight kept by the old centroid on assignment (the new vector gets `1 - blend`).
    pub blend: S,
    pub trust_mode: TrustMode,
    pub alpha: S,
    /// EMA trust of a state before its first outcome.
    pub ema_prior: S,
}

impl<S: Scalar> MapConfig<S> {
    pub fn new(dimension: usize) -> Self {
        Self {
            dimension,
            tau_cluster: S::lit(0.75),
            blend: S::lit(0.95),
            trust_mode: TrustMode::Static,
            alpha: S::lit(0.9),
            ema_prior: S::lit(0.5),
        }
    }

    pub fn with_tau(mut self, tau: S) -> Self {
        self.tau_cluster = tau;
        self
    }

    pub fn with_trust_mode(mut self, mode: TrustMode) -> Self {
        self.trust_mode = mode;
        self
    }

    pub fn with_alpha(mut self, alpha: S) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn validate(&self) -> Result<(), MapError> {
        let unit = |x: S| x >= S::zero() && x <= S::one();
        if self.dimension == 0 {
            return Err(MapError::InvalidConfig("dimension must be positive".into()));
        }
        if !(self.tau_cluster >= -S::one() && self.tau_cluster <= S::one()) {
            return Err(MapError::InvalidConfig(format!(
                "tau_cluster {} outside [-1, 1]",
                self.tau_cluster
            )));
        }
        for (name, v) in [
            ("blend", self.blend),
            ("alpha", self.alpha),
            ("ema_prior", self.ema_prior),
        ] {
            if !unit(v) {
                return Err(MapError::InvalidConfig(format!("{name} {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

impl<S: Scalar> Default for MapConfig<S> {
    fn default() -> Self {
        Self::new(embed::DEFAULT_DIMENSION)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct CognitiveState<S: Scalar> {
    pub id: usize,
    pub centroid: Embedding<S>,
    pub visits: u64,
    pub successes: u64,
    pub trust: S,
    /// Text of the first step assigned to this state.
    pub exemplar: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionEdge {
    pub src: usize,
    pub dst: usize,
    pub success: u64,
    pub total: u64,
}

impl TransitionEdge {
    pub fn rate<S: Scalar>(&self) -> S {
        S::from_count(self.success) / S::from_count(self.total)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Assignment {
    pub state: usize,
    pub created: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct TraceStep<S: Scalar> {
    pub text: String,
    pub state: usize,
    pub created: bool,
    /// Trust of the assigned state after this step's outcome was recorded.
    pub trust: S,
    /// Set when this step mapped to the same state as the previous one (no edge).
    pub merged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropy: Option<S>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intervention: Option<InterventionAction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct ReasoningTrace<S: Scalar> {
    pub steps: Vec<TraceStep<S>>,
    pub outcome: bool,
}

impl<S: Scalar> ReasoningTrace<S> {
    pub fn states(&self) -> impl Iterator<Item = usize> + '_ {
        self.steps.iter().map(|s| s.state)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CognitiveMap<S: Scalar> {
    config: MapConfig<S>,
    states: Vec<CognitiveState<S>>,
    edges: BTreeMap<(usize, usize), TransitionEdge>,
}

impl<S: Scalar> CognitiveMap<S> {
    pub fn new(config: MapConfig<S>) -> Result<Self, MapError> {
        config.validate()?;
        Ok(Self {
            config,
            states: Vec::new(),
            edges: BTreeMap::new(),
        })
    }

    /// Rebuilds a map from explicit states and edges, validating every invariant.
    pub fn from_parts(
        config: MapConfig<S>,
        states: Vec<CognitiveState<S>>,
        edges: Vec<TransitionEdge>,
    ) -> Result<Self, MapError> {
        config.validate()?;
        let mut map = Self::new(config)?;
        for (i, s) in states.into_iter().enumerate() {
            if s.id != i {
                return Err(MapError::Format(format!("state ids not dense: found {} at {i}", s.id)));
            }
            map.check_dimension(&s.centroid)?;
            if s.successes > s.visits || s.visits == 0 {
                return Err(MapError::Format(format!("state {i} has inconsistent counts")));
            }
            if !(s.trust >= S::zero() && s.trust <= S::one()) {
                return Err(MapError::Format(format!("state {i} trust outside [0, 1]")));
            }
            map.states.push(s);
        }
        for e in edges {
            if e.src >= map.states.len() || e.dst >= map.states.len() {
                return Err(MapError::Format(format!("edge {}->{} has unknown endpoint", e.src, e.dst)));
            }
            if e.src == e.dst || e.total == 0 || e.success > e.total {
                return Err(MapError::Format(format!("edge {}->{} is invalid", e.src, e.dst)));
            }
            if map.edges.insert((e.src, e.dst), e).is_some() {
                return Err(MapError::Format(format!("duplicate edge {}->{}", e.src, e.dst)));
            }
        }
        Ok(map)
    }

    pub fn config(&self) -> &MapConfig<S> {
        &self.config
    }

    pub fn dimension(&self) -> usize {
        self.config.dimension
    }

    pub fn states(&self) -> &[CognitiveState<S>] {
        &self.states
    }

    pub fn state(&self, id: usize) -> Result<&CognitiveState<S>, MapError> {
        self.states.get(id).ok_or(MapError::UnknownState(id))
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn edges(&self) -> impl Iterator<Item = &TransitionEdge> + '_ {
        self.edges.values()
    }

    pub fn edge(&self, src: usize, dst: usize) -> Option<&TransitionEdge> {
        self.edges.get(&(src, dst))
    }

    /// Outgoing edges of `src`, ordered by target id.
    pub fn outgoing(&self, src: usize) -> impl Iterator<Item = &TransitionEdge> + '_ {
        self.edges.range((src, 0)..(src + 1, 0)).map(|(_, e)| e)
    }

    /// Largest transition count over all edges, `None` for an edgeless map.
    pub fn max_edge_total(&self) -> Option<u64> {
        self.edges.values().map(|e| e.total).max()
    }

    fn check_dimension(&self, v: &Embedding<S>) -> Result<(), MapError> {
        if v.dimension() != self.config.dimension {
            return Err(MapError::DimensionMismatch {
                expected: self.config.dimension,
                got: v.dimension(),
            });
        }
        Ok(())
    }

    /// Most similar state and its similarity. Ties go to the lowest id.
    pub fn nearest_state(&self, v: &Embedding<S>) -> Result<Option<(usize, S)>, MapError> {
        self.check_dimension(v)?;
        let mut best: Option<(usize, S)> = None;
        for s in &self.states {
            let sim = cosine(v, &s.centroid)?;
            if best.is_none_or(|(_, b)| sim > b) {
                best = Some((s.id, sim));
            }
        }
        Ok(best)
    }

    /// Assigns `v` to its nearest state when the similarity reaches `tau_cluster`,
    /// blending the centroid toward `v`; otherwise opens a new state seeded at `v`.
    pub fn assign_state(&mut self, v: &Embedding<S>, exemplar: &str) -> Result<Assignment, MapError> {
        if let Some((id, sim)) = self.nearest_state(v)? {
            if sim >= self.config.tau_cluster {
                let keep = self.config.blend;
                let state = &mut self.states[id];
                state.centroid = state.centroid.blend(v, keep)?;
                state.visits += 1;
                if self.config.trust_mode == TrustMode::Static {
                    state.trust = static_trust(state.successes, state.visits);
                }
                return Ok(Assignment {
                    state: id,
                    created: false,
                });
            }
        }
        let id = self.states.len();
        let trust = match self.config.trust_mode {
            TrustMode::Static => static_trust(0, 1),
            TrustMode::Ema => self.config.ema_prior,
        };
        self.states.push(CognitiveState {
            id,
            centroid: v.clone(),
            visits: 1,
            successes: 0,
            trust,
            exemplar: exemplar.to_owned(),
        });
        Ok(Assignment {
            state: id,
            created: true,
        })
    }

    /// Counts one traversal of `src -> dst`. A self transition is not an edge and
    /// returns `Ok(None)` without touching the map.
    pub fn record_transition(
        &mut self,
        src: usize,
        dst: usize,
        success: bool,
    ) -> Result<Option<TransitionEdge>, MapError> {
        self.state(src)?;
        self.state(dst)?;
        if src == dst {
            return Ok(None);
        }
        let edge = self.edges.entry((src, dst)).or_insert(TransitionEdge {
            src,
            dst,
            success: 0,
            total: 0,
        });
        edge.total += 1;
        if success {
            edge.success += 1;
        }
        Ok(Some(*edge))
    }

    /// Attaches an outcome to one visit of `id` and returns the updated trust.
    pub fn update_trust(&mut self, id: usize, success: bool) -> Result<S, MapError> {
        let mode = self.config.trust_mode;
        let alpha = self.config.alpha;
        let state = self.states.get_mut(id).ok_or(MapError::UnknownState(id))?;
        if success {
            if state.successes >= state.visits {
                return Err(MapError::OutcomeWithoutVisit(id));
            }
            state.successes += 1;
        }
        state.trust = match mode {
            TrustMode::Static => static_trust(state.successes, state.visits),
            TrustMode::Ema => ema_step(state.trust, alpha, success),
        };
        Ok(state.trust)
    }

    /// Embeds and assigns every step, records each cross-state transition and
    /// every visit with the trajectory outcome.
    pub fn ingest_trajectory<T, P>(
        &mut self,
        steps: &[T],
        outcome: bool,
        provider: &P,
    ) -> Result<ReasoningTrace<S>, MapError>
    where
        T: AsRef<str>,
        P: EmbeddingProvider<S> + ?Sized,
    {
        if steps.is_empty() {
            return Err(MapError::EmptyTrajectory);
        }
        let texts: Vec<&str> = steps.iter().map(AsRef::as_ref).collect();
        let vectors = embed::embed_texts(&texts, provider)?;
        for v in &vectors {
            self.check_dimension(v)?;
        }
        let mut trace = Vec::with_capacity(texts.len());
        let mut prev: Option<usize> = None;
        for (text, v) in texts.iter().zip(&vectors) {
            let Assignment { state, created } = self.assign_state(v, text)?;
            let trust = self.update_trust(state, outcome)?;
            let merged = match prev {
                Some(p) => self.record_transition(p, state, outcome)?.is_none(),
                None => false,
            };
            prev = Some(state);
            trace.push(TraceStep {
                text: (*text).to_owned(),
                state,
                created,
                trust,
                merged,
                entropy: None,
                intervention: None,
            });
        }
        Ok(ReasoningTrace {
            steps: trace,
            outcome,
        })
    }
}

pub fn static_trust<S: Scalar>(successes: u64, visits: u64) -> S {
    S::from_count(successes) / S::from_count(visits)
}

pub fn ema_step<S: Scalar>(trust: S, alpha: S, success: bool) -> S {
    let target = if success { S::one() } else { S::zero() };
    let next = alpha * trust + (S::one() - alpha) * target;
    next.max(S::zero()).min(S::one())
}
