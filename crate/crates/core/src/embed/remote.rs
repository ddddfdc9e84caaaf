use std::time::Duration;

use serde::{Deserialize, Serialize};
use ureq::Agent;

use super::{check_text, EmbedError, Embedding, EmbeddingProvider};
use crate::http::{self, HttpFailure};
use crate::Scalar;

pub const EMBED_URL_ENV: &str = "HIPPO_EMBED_URL";
pub const EMBED_TOKEN_ENV: &str = "HIPPO_EMBED_TOKEN";

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteEmbedderConfig {
    /// Base URL; requests go to `{url}/embed`.
    pub url: String,
    pub bearer_token: Option<String>,
    pub dimension: usize,
    pub batch_size: usize,
    pub timeout: Duration,
}

impl RemoteEmbedderConfig {
    pub fn new(url: impl Into<String>, dimension: usize) -> Self {
        Self {
            url: url.into(),
            bearer_token: None,
            dimension,
            batch_size: 32,
            timeout: Duration::from_secs(30),
        }
    }

    /// Reads `HIPPO_EMBED_URL` and the optional `HIPPO_EMBED_TOKEN`.
    pub fn from_env(dimension: usize) -> Option<Self> {
        let url = std::env::var(EMBED_URL_ENV).ok()?;
        let mut cfg = Self::new(url, dimension);
        cfg.bearer_token = std::env::var(EMBED_TOKEN_ENV).ok();
        Some(cfg)
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    embeddings: Vec<Vec<f64>>,
}

/// Client for an embedding service speaking
/// `POST /embed {"texts": [...]}` → `{"embeddings": [[...], ...]}`.
pub struct RemoteEmbedder {
    config: RemoteEmbedderConfig,
    agent: Agent,
}

impl RemoteEmbedder {
    pub fn new(config: RemoteEmbedderConfig) -> Self {
        let agent = http::agent(config.timeout);
        Self { config, agent }
    }

    fn endpoint(&self) -> String {
        format!("{}/embed", self.config.url.trim_end_matches('/'))
    }
}

impl<S: Scalar> EmbeddingProvider<S> for RemoteEmbedder {
    fn dimension(&self) -> usize {
        self.config.dimension
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding<S>>, EmbedError> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.config.batch_size.max(1)) {
            for t in chunk {
                check_text(t)?;
            }
            let resp: EmbedResponse = http::post_json(
                &self.agent,
                &self.endpoint(),
                self.config.bearer_token.as_deref(),
                &EmbedRequest { texts: chunk },
            )
            .map_err(|HttpFailure { status, message }| EmbedError::Transport { status, message })?;
            if resp.embeddings.len() != chunk.len() {
                return Err(EmbedError::CountMismatch {
                    expected: chunk.len(),
                    got: resp.embeddings.len(),
                });
            }
            for raw in resp.embeddings {
                if raw.len() != self.config.dimension {
                    return Err(EmbedError::DimensionMismatch {
                        expected: self.config.dimension,
                        got: raw.len(),
                    });
                }
                out.push(Embedding::new(raw.into_iter().map(S::lit).collect())?);
            }
        }
        Ok(out)
    }
}
