use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use super::{check_text, EmbedError, Embedding, EmbeddingProvider};
use crate::Scalar;

/// Deterministic offline embedder.
///
/// Each whitespace-separated token is hashed (together with the dimension) into a
/// seed for an isotropic Gaussian vector; a text embeds to the normalized sum of
/// its token vectors. Identical texts give bitwise-identical vectors, unrelated
/// texts are nearly orthogonal, and texts sharing most tokens stay close, which
/// gives the clustering threshold something to act on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StubEmbedder {
    dimension: usize,
}

impl StubEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension }
    }

    fn token_vector(&self, token: &str, acc: &mut [f64]) {
        let mut hasher = Sha256::new();
        hasher.update((self.dimension as u64).to_le_bytes());
        hasher.update(token.as_bytes());
        let seed: [u8; 32] = hasher.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(seed);
        for slot in acc.iter_mut() {
            let x: f64 = StandardNormal.sample(&mut rng);
            *slot += x;
        }
    }

    pub fn embed_one<S: Scalar>(&self, text: &str) -> Result<Embedding<S>, EmbedError> {
        check_text(text)?;
        let mut acc = vec![0.0f64; self.dimension];
        for token in text.split_whitespace() {
            self.token_vector(token, &mut acc);
        }
        Embedding::new(acc.into_iter().map(S::lit).collect())
    }
}

impl Default for StubEmbedder {
    fn default() -> Self {
        Self::new(super::DEFAULT_DIMENSION)
    }
}

impl<S: Scalar> EmbeddingProvider<S> for StubEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding<S>>, EmbedError> {
        texts.iter().map(|t| self.embed_one(t)).collect()
    }
}
