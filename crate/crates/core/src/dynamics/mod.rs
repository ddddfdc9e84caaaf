//! Token entropy, temperature perturbation and the trust-based deadlock test.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scalar;

pub const DEFAULT_PERTURB_TEMPERATURE: f64 = 1.5;
/// Trust below which a state counts as deadlocked in the analysis setting.
pub const THEORETICAL_DEADLOCK_TRUST: f64 = 0.2;
/// Relaxed threshold used at inference time to catch more deadlocks.
pub const DEPLOYED_DEADLOCK_TRUST: f64 = 0.3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("token distribution is empty")]
    Empty,
    #[error("token {token} has non-positive or non-finite probability {p}")]
    NonPositiveProbability { token: u32, p: f64 },
    #[error("probabilities sum to {0}, more than 1")]
    SumExceedsOne(f64),
    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),
}

/// Next-token distribution, possibly truncated to the top-k tokens (so the mass
/// may be below one).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct TokenDistribution<S: Scalar> {
    probs: Vec<(u32, S)>,
}

impl<S: Scalar> TokenDistribution<S> {
    pub fn new(probs: Vec<(u32, S)>) -> Result<Self, DynamicsError> {
        if probs.is_empty() {
            return Err(DynamicsError::Empty);
        }
        for &(token, p) in &probs {
            if p <= S::zero() || !p.is_finite() {
                return Err(DynamicsError::NonPositiveProbability {
                    token,
                    p: p.to_f64_lossy(),
                });
            }
        }
        let total: S = probs.iter().map(|&(_, p)| p).sum();
        let slack = S::lit(1e-6) + S::from_usize(probs.len()).unwrap() * S::epsilon();
        if total > S::one() + slack {
            return Err(DynamicsError::SumExceedsOne(total.to_f64_lossy()));
        }
        Ok(Self { probs })
    }

    /// Builds a distribution from `(token, natural-log probability)` pairs.
    pub fn from_logprobs(logprobs: Vec<(u32, S)>) -> Result<Self, DynamicsError> {
        Self::new(logprobs.into_iter().map(|(t, lp)| (t, lp.exp())).collect())
    }

    /// Uniform distribution over `n` tokens.
    pub fn uniform(n: usize) -> Result<Self, DynamicsError> {
        let p = S::one() / S::from_usize(n.max(1)).unwrap();
        Self::new((0..n as u32).map(|t| (t, p)).collect())
    }

    pub fn probs(&self) -> &[(u32, S)] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn mass(&self) -> S {
        self.probs.iter().map(|&(_, p)| p).sum()
    }

    /// Probabilities rescaled to sum to one.
    pub fn renormalized(&self) -> Vec<S> {
        let total = self.mass();
        self.probs.iter().map(|&(_, p)| p / total).collect()
    }
}

/// Shannon entropy in bits of the renormalized distribution.
pub fn token_entropy<S: Scalar>(dist: &TokenDistribution<S>) -> S {
    dist.renormalized()
        .into_iter()
        .map(|q| -(q * q.log2()))
        .sum::<S>()
}

/// Upper bound `log2(n)` attained by the uniform distribution.
pub fn max_entropy_bits<S: Scalar>(n: usize) -> S {
    S::from_usize(n).unwrap().log2()
}

/// Temperature-rescaled distribution `p'(w) ∝ exp(log p(w) / T)`.
pub fn perturb<S: Scalar>(
    dist: &TokenDistribution<S>,
    temperature: S,
) -> Result<TokenDistribution<S>, DynamicsError> {
    if temperature <= S::zero() || !temperature.is_finite() {
        return Err(DynamicsError::InvalidTemperature(temperature.to_f64_lossy()));
    }
    let scaled: Vec<S> = dist.probs.iter().map(|&(_, p)| p.ln() / temperature).collect();
    let peak = scaled.iter().copied().fold(S::neg_infinity(), S::max);
    let weights: Vec<S> = scaled.iter().map(|&l| (l - peak).exp()).collect();
    let z: S = weights.iter().copied().sum();
    let probs = dist
        .probs
        .iter()
        .zip(weights)
        .map(|(&(t, _), w)| (t, w / z))
        .collect();
    TokenDistribution::new(probs)
}

/// Mean per-token entropy of a generated response, given each position's top-k
/// log-probabilities. Positions that do not form a valid distribution are skipped.
pub fn mean_token_entropy<S: Scalar>(positions: &[Vec<S>]) -> Option<S> {
    let entropies: Vec<S> = positions
        .iter()
        .filter_map(|lps| {
            let pairs = lps.iter().enumerate().map(|(i, &lp)| (i as u32, lp)).collect();
            TokenDistribution::from_logprobs(pairs).ok()
        })
        .map(|d| token_entropy(&d))
        .collect();
    if entropies.is_empty() {
        return None;
    }
    let n = S::from_usize(entropies.len()).unwrap();
    Some(entropies.into_iter().sum::<S>() / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct DeadlockConfig<S: Scalar> {
    pub threshold: S,
}

impl<S: Scalar> DeadlockConfig<S> {
    pub fn theoretical() -> Self {
        Self {
            threshold: S::lit(THEORETICAL_DEADLOCK_TRUST),
        }
    }

    pub fn deployed() -> Self {
        Self {
            threshold: S::lit(DEPLOYED_DEADLOCK_TRUST),
        }
    }
}

impl<S: Scalar> Default for DeadlockConfig<S> {
    fn default() -> Self {
        Self::deployed()
    }
}

/// A state is deadlocked when its trust falls strictly below the threshold.
/// Entropy only feeds the debug log.
pub fn detect_deadlock<S: Scalar>(trust: S, entropy: Option<S>, config: &DeadlockConfig<S>) -> bool {
    let deadlocked = trust < config.threshold;
    if let Some(h) = entropy {
        log::debug!("deadlock check: trust={trust} entropy={h} bits deadlocked={deadlocked}");
    }
    deadlocked
}
