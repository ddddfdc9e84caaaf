//! Semantic embedding of reasoning steps and vector similarity.

mod remote;
mod stub;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scalar;

pub use remote::{RemoteEmbedder, RemoteEmbedderConfig, EMBED_TOKEN_ENV, EMBED_URL_ENV};
pub use stub::StubEmbedder;

/// Embedding dimension of the small BGE-class encoders the maps were designed for.
pub const DEFAULT_DIMENSION: usize = 384;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("text is empty after trimming whitespace")]
    EmptyText,
    #[error("embedding service transport failure (status {status:?}): {message}")]
    Transport { status: Option<u16>, message: String },
    #[error("embedding has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("vector lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("vector is empty, non-finite or has zero norm")]
    Degenerate,
    #[error("embedding service returned {got} vectors for {expected} texts")]
    CountMismatch { expected: usize, got: usize },
}

impl EmbedError {
    /// Transport failures without a status, rate limiting and 5xx may succeed on retry.
    pub fn is_retryable(&self) -> bool {
        match self {
            EmbedError::Transport { status: None, .. } => true,
            EmbedError::Transport { status: Some(s), .. } => *s == 429 || *s >= 500,
            _ => false,
        }
    }
}

/// Unit-norm embedding vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Embedding<S: Scalar> {
    values: Vec<S>,
}

impl<S: Scalar> Embedding<S> {
    /// Normalizes `values` to unit L2 norm.
    pub fn new(values: Vec<S>) -> Result<Self, EmbedError> {
        let values = normalized(values)?;
        Ok(Self { values })
    }

    /// Wraps an already-normalized vector without rescaling it, so stored
    /// centroids reload bit-for-bit. Rejects vectors whose norm is far from one.
    pub fn from_unit(values: Vec<S>) -> Result<Self, EmbedError> {
        if values.is_empty() || values.iter().any(|x| !x.is_finite()) {
            return Err(EmbedError::Degenerate);
        }
        let norm = l2_norm(&values);
        if (norm - S::one()).abs() > S::lit(1e-4) {
            return Err(EmbedError::Degenerate);
        }
        Ok(Self { values })
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[S] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<S> {
        self.values
    }

    pub fn norm(&self) -> S {
        l2_norm(&self.values)
    }

    /// Returns `normalize(keep * self + (1 - keep) * other)`.
    pub fn blend(&self, other: &Embedding<S>, keep: S) -> Result<Self, EmbedError> {
        if self.dimension() != other.dimension() {
            return Err(EmbedError::LengthMismatch {
                left: self.dimension(),
                right: other.dimension(),
            });
        }
        let take = S::one() - keep;
        let mixed = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| keep * a + take * b)
            .collect();
        Self::new(mixed)
    }
}

impl<'de, S: Scalar> Deserialize<'de> for Embedding<S> {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let values = Vec::<S>::deserialize(deserializer)?;
        Embedding::from_unit(values).map_err(serde::de::Error::custom)
    }
}

fn l2_norm<S: Scalar>(values: &[S]) -> S {
    values.iter().map(|&x| x * x).sum::<S>().sqrt()
}

fn normalized<S: Scalar>(mut values: Vec<S>) -> Result<Vec<S>, EmbedError> {
    if values.is_empty() || values.iter().any(|x| !x.is_finite()) {
        return Err(EmbedError::Degenerate);
    }
    let norm = l2_norm(&values);
    if norm <= S::zero() || !norm.is_finite() {
        return Err(EmbedError::Degenerate);
    }
    for x in &mut values {
        *x = *x / norm;
    }
    Ok(values)
}

/// Cosine similarity `u·v / (|u||v|)`, clamped to `[-1, 1]`.
pub fn cosine<S: Scalar>(u: &Embedding<S>, v: &Embedding<S>) -> Result<S, EmbedError> {
    cosine_slices(u.as_slice(), v.as_slice())
}

pub fn cosine_slices<S: Scalar>(u: &[S], v: &[S]) -> Result<S, EmbedError> {
    if u.len() != v.len() {
        return Err(EmbedError::LengthMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let dot: S = u.iter().zip(v).map(|(&a, &b)| a * b).sum();
    let denom = l2_norm(u) * l2_norm(v);
    if denom <= S::zero() || denom.is_nan() {
        return Err(EmbedError::Degenerate);
    }
    Ok((dot / denom).max(-S::one()).min(S::one()))
}

/// Source of text embeddings. Implementations are shared across threads for
/// read-only calls.
pub trait EmbeddingProvider<S: Scalar>: Send + Sync {
    fn dimension(&self) -> usize;

    /// Embeds every text. Callers validate texts through [`check_text`].
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding<S>>, EmbedError>;
}

pub(crate) fn check_text(text: &str) -> Result<(), EmbedError> {
    if text.trim().is_empty() {
        Err(EmbedError::EmptyText)
    } else {
        Ok(())
    }
}

fn check_dimension<S: Scalar>(e: &Embedding<S>, expected: usize) -> Result<(), EmbedError> {
    if e.dimension() != expected {
        return Err(EmbedError::DimensionMismatch {
            expected,
            got: e.dimension(),
        });
    }
    Ok(())
}

/// Embeds a single non-empty text and checks the provider's dimension contract.
pub fn embed_text<S, P>(text: &str, provider: &P) -> Result<Embedding<S>, EmbedError>
where
    S: Scalar,
    P: EmbeddingProvider<S> + ?Sized,
{
    let mut out = embed_texts(&[text], provider)?;
    Ok(out.pop().expect("one embedding per text"))
}

pub fn embed_texts<S, P>(texts: &[&str], provider: &P) -> Result<Vec<Embedding<S>>, EmbedError>
where
    S: Scalar,
    P: EmbeddingProvider<S> + ?Sized,
{
    for t in texts {
        check_text(t)?;
    }
    let out = provider.embed_batch(texts)?;
    if out.len() != texts.len() {
        return Err(EmbedError::CountMismatch {
            expected: texts.len(),
            got: out.len(),
        });
    }
    for e in &out {
        check_dimension(e, provider.dimension())?;
    }
    Ok(out)
}
