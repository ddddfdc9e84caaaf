//! External-memory cognitive maps for small-model reasoning.
//!
//! Reasoning steps are embedded, clustered online into states, and linked by
//! transition statistics. The resulting map supports topology analysis, a learned
//! transition scorer, and a trust-gated iterative refinement loop that injects
//! hints on reliable states and raises sampling temperature on deadlocked ones.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the common `f64` instantiation.

pub mod cogmap;
pub mod dynamics;
pub mod embed;
pub mod engine;
mod http;
pub mod ingest;
pub mod navigator;
pub mod scalar;
pub mod simtraj;
pub mod topo;

pub use scalar::Scalar;

pub type Embedding = embed::Embedding<f64>;
pub type CognitiveMap = cogmap::CognitiveMap<f64>;
pub type CognitiveState = cogmap::CognitiveState<f64>;
pub type MapConfig = cogmap::MapConfig<f64>;
pub type ReasoningTrace = cogmap::ReasoningTrace<f64>;
pub type TokenDistribution = dynamics::TokenDistribution<f64>;
pub type NavigatorModel = navigator::NavigatorModel<f64>;
pub type EdgeFeatures = navigator::EdgeFeatures<f64>;
pub type SolveConfig = engine::SolveConfig<f64>;

pub type CognitiveMapF32 = cogmap::CognitiveMap<f32>;
pub type NavigatorModelF32 = navigator::NavigatorModel<f32>;
