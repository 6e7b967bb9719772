//! Log embeddings.
//!
//! Two embedders share the [`Embedder`] trait: a deterministic hashed
//! character n-gram embedder, and a client for a remote sentence-embedding
//! service (`POST /embed`).

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::logpipe::TokenSequence;

pub const DEFAULT_DIM: usize = 256;

/// Env var naming the remote embedding service base URL.
pub const EMBEDDER_URL_ENV: &str = "DOCKWRIGHT_EMBEDDER_URL";

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("invalid embedder config: {0}")]
    Config(String),
    /// Connection failures and timeouts. Safe to retry.
    #[error("embedding service unreachable: {0}")]
    Transport(String),
    #[error("embedding service protocol error: {0}")]
    Protocol(String),
}

impl EmbedError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, EmbedError::Transport(_))
    }
}

/// Unit-norm vector (or all zeros for empty input).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// L2-normalizes `values`. An all-zero input stays zero.
    pub fn normalized(mut values: Vec<f64>) -> Self {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut values {
                *v /= norm;
            }
        }
        Self(values)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }
}

impl AsRef<[f64]> for EmbeddingVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Euclidean distance.
pub fn distance(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    if a.dim() != b.dim() {
        return Err(EmbedError::DimMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok(euclidean(a.values(), b.values()))
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbedError> {
    if a.dim() != b.dim() {
        return Err(EmbedError::DimMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    let n = a.norm() * b.norm();
    Ok(if n == 0.0 { 0.0 } else { dot / n })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbedderKind {
    HashedNgram,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedderConfig {
    pub kind: EmbedderKind,
    pub dim: usize,
    pub ngram_min: usize,
    pub ngram_max: usize,
    pub include_word_unigrams: bool,
    pub remote_url: Option<String>,
    /// Per-request timeout for the remote kind.
    pub timeout_s: f64,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self {
            kind: EmbedderKind::HashedNgram,
            dim: DEFAULT_DIM,
            ngram_min: 3,
            ngram_max: 5,
            include_word_unigrams: true,
            remote_url: None,
            timeout_s: 30.0,
        }
    }
}

impl EmbedderConfig {
    pub fn validate(&self) -> Result<(), EmbedError> {
        if self.dim == 0 {
            return Err(EmbedError::Config("dim must be positive".into()));
        }
        if self.ngram_min == 0 || self.ngram_min > self.ngram_max {
            return Err(EmbedError::Config(format!(
                "bad n-gram range {}..={}",
                self.ngram_min, self.ngram_max
            )));
        }
        if self.kind == EmbedderKind::Remote && self.remote_url.is_none() {
            return Err(EmbedError::Config(format!(
                "remote embedder needs remote_url or {EMBEDDER_URL_ENV}"
            )));
        }
        Ok(())
    }

    /// Builds the configured embedder. For the remote kind, the
    /// `DOCKWRIGHT_EMBEDDER_URL` environment variable wins over `remote_url`.
    pub fn build(&self) -> Result<Box<dyn Embedder>, EmbedError> {
        let mut cfg = self.clone();
        if cfg.kind == EmbedderKind::Remote {
            if let Ok(url) = std::env::var(EMBEDDER_URL_ENV) {
                cfg.remote_url = Some(url);
            }
        }
        cfg.validate()?;
        Ok(match cfg.kind {
            EmbedderKind::HashedNgram => Box::new(HashedNgramEmbedder::new(cfg)?),
            EmbedderKind::Remote => Box::new(RemoteEmbedder::new(
                cfg.remote_url.as_deref().unwrap_or_default(),
                cfg.dim,
                Duration::from_secs_f64(cfg.timeout_s),
            )),
        })
    }
}

pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;

    fn embed(&self, tokens: &TokenSequence) -> Result<EmbeddingVector, EmbedError>;

    fn embed_batch(&self, batch: &[TokenSequence]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        batch.iter().map(|t| self.embed(t)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct HashedNgramEmbedder {
    cfg: EmbedderConfig,
}

impl HashedNgramEmbedder {
    pub fn new(cfg: EmbedderConfig) -> Result<Self, EmbedError> {
        let cfg = EmbedderConfig {
            kind: EmbedderKind::HashedNgram,
            ..cfg
        };
        cfg.validate()?;
        Ok(Self { cfg })
    }

    /// Feature multiset of the space-joined token string: character
    /// n-grams plus (optionally) whole tokens. A token that happens to
    /// equal an n-gram is the same feature.
    pub fn features(&self, joined: &str) -> BTreeMap<String, u32> {
        let mut tf: BTreeMap<String, u32> = BTreeMap::new();
        let chars: Vec<char> = joined.chars().collect();
        for n in self.cfg.ngram_min..=self.cfg.ngram_max {
            if n > chars.len() {
                break;
            }
            for w in chars.windows(n) {
                *tf.entry(w.iter().collect()).or_default() += 1;
            }
        }
        if self.cfg.include_word_unigrams {
            for word in joined.split(' ').filter(|w| !w.is_empty()) {
                *tf.entry(word.to_string()).or_default() += 1;
            }
        }
        tf
    }

    pub fn embed_str(&self, joined: &str) -> EmbeddingVector {
        let dim = self.cfg.dim as u64;
        let mut acc = vec![0.0f64; self.cfg.dim];
        for (feature, count) in self.features(joined) {
            let h = fnv1a64(feature.as_bytes());
            let bucket = (h % dim) as usize;
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            acc[bucket] += sign * f64::from(count).ln_1p();
        }
        EmbeddingVector::normalized(acc)
    }
}

impl Embedder for HashedNgramEmbedder {
    fn dim(&self) -> usize {
        self.cfg.dim
    }

    fn embed(&self, tokens: &TokenSequence) -> Result<EmbeddingVector, EmbedError> {
        Ok(self.embed_str(&tokens.joined()))
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vectors: Vec<Vec<f64>>,
}

/// Client for `POST {base}/embed`.
pub struct RemoteEmbedder {
    endpoint: String,
    dim: usize,
    agent: ureq::Agent,
}

impl RemoteEmbedder {
    pub fn new(base_url: &str, dim: usize, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            endpoint: format!("{}/embed", base_url.trim_end_matches('/')),
            dim,
            agent,
        }
    }
}

impl Embedder for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, tokens: &TokenSequence) -> Result<EmbeddingVector, EmbedError> {
        let mut v = self.embed_batch(std::slice::from_ref(tokens))?;
        Ok(v.remove(0))
    }

    fn embed_batch(&self, batch: &[TokenSequence]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        if batch.is_empty() {
            return Ok(Vec::new());
        }
        let req = EmbedRequest {
            texts: batch.iter().map(TokenSequence::joined).collect(),
        };
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .send_json(&req)
            .map_err(|e| EmbedError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if status != 200 {
            return Err(if status >= 500 {
                EmbedError::Transport(format!("status {status}"))
            } else {
                EmbedError::Protocol(format!("status {status}"))
            });
        }
        let body: EmbedResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| EmbedError::Protocol(e.to_string()))?;
        if body.vectors.len() != batch.len() {
            return Err(EmbedError::Protocol(format!(
                "asked for {} vectors, got {}",
                batch.len(),
                body.vectors.len()
            )));
        }
        body.vectors
            .into_iter()
            .map(|v| {
                if v.len() != self.dim {
                    Err(EmbedError::Protocol(format!(
                        "expected dimension {}, got {}",
                        self.dim,
                        v.len()
                    )))
                } else if v.iter().any(|x| !x.is_finite()) {
                    Err(EmbedError::Protocol("non-finite component".into()))
                } else {
                    Ok(EmbeddingVector::normalized(v))
                }
            })
            .collect()
    }
}
