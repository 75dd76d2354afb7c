//! Text embedders: a deterministic feature-hashing embedder and an HTTP
//! client for an external embedding service.

use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::words;

pub trait Embedder: Send + Sync {
    fn id(&self) -> String;
    fn dim(&self) -> usize;
    /// One vector per input text, in input order.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>>;
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Signed bag-of-words feature hashing, L2-normalized.
pub fn hash_embed(text: &str, dim: usize) -> Result<Vec<f64>> {
    if dim < 8 {
        return Err(Error::Config(format!("hash embedding dimension {dim} is below 8")));
    }
    let mut v = vec![0.0; dim];
    let tokens = words(text);
    if tokens.is_empty() {
        return Err(Error::DegenerateEmbedding(format!("no words in {text:?}")));
    }
    for w in &tokens {
        let h = fnv1a(w.as_bytes());
        let bucket = (h % dim as u64) as usize;
        let sign = if (h >> 63) == 0 { 1.0 } else { -1.0 };
        v[bucket] += sign;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::DegenerateEmbedding(format!(
            "hashed features of {text:?} cancel out"
        )));
    }
    for x in &mut v {
        *x /= norm;
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    pub dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 8 {
            return Err(Error::Config(format!("hash embedding dimension {dim} is below 8")));
        }
        Ok(HashEmbedder { dim })
    }
}

impl Embedder for HashEmbedder {
    fn id(&self) -> String {
        format!("hash-{}", self.dim)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        texts.par_iter().map(|t| hash_embed(t, self.dim)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    Hash,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedderConfig {
    pub kind: EmbedderKind,
    pub dim: usize,
    /// Base URL of the service; requests go to `{endpoint}/embed`.
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
    pub retries: u32,
    pub batch_size: usize,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig {
            kind: EmbedderKind::Hash,
            dim: 4096,
            endpoint: None,
            timeout_ms: 30_000,
            retries: 2,
            batch_size: 32,
        }
    }
}

impl EmbedderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.batch_size == 0 {
            return Err(Error::Config("embedder dim and batch_size must be positive".into()));
        }
        if self.kind == EmbedderKind::Remote && self.endpoint.is_none() {
            return Err(Error::Config("remote embedder requires an endpoint".into()));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Box<dyn Embedder>> {
        self.validate()?;
        Ok(match self.kind {
            EmbedderKind::Hash => Box::new(HashEmbedder::new(self.dim)?),
            EmbedderKind::Remote => Box::new(RemoteEmbedder::new(self.clone())?),
        })
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    embeddings: Vec<Vec<f64>>,
}

enum Attempt {
    Transient(Error),
    Fatal(Error),
}

pub struct RemoteEmbedder {
    config: EmbedderConfig,
    url: String,
    client: reqwest::blocking::Client,
}

impl RemoteEmbedder {
    pub fn new(config: EmbedderConfig) -> Result<Self> {
        config.validate()?;
        let endpoint = config
            .endpoint
            .as_deref()
            .ok_or_else(|| Error::Config("remote embedder requires an endpoint".into()))?;
        let url = format!("{}/embed", endpoint.trim_end_matches('/'));
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(RemoteEmbedder { config, url, client })
    }

    fn attempt(&self, batch: usize, texts: &[String]) -> std::result::Result<Vec<Vec<f64>>, Attempt> {
        let service = |reason: String| Error::EmbedService { batch, reason };
        let response = self
            .client
            .post(&self.url)
            .json(&EmbedRequest { texts })
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    Attempt::Transient(Error::EmbedTimeout { batch })
                } else {
                    Attempt::Transient(service(e.to_string()))
                }
            })?;
        let status = response.status();
        if status.is_server_error() {
            return Err(Attempt::Transient(service(format!("HTTP {status}"))));
        }
        if status.as_u16() >= 400 {
            return Err(Attempt::Fatal(service(format!("HTTP {status}"))));
        }
        let body = response.bytes().map_err(|e| {
            if e.is_timeout() {
                Attempt::Transient(Error::EmbedTimeout { batch })
            } else {
                Attempt::Transient(service(e.to_string()))
            }
        })?;
        let malformed = |reason: String| Attempt::Fatal(Error::EmbedMalformed { batch, reason });
        let parsed: EmbedResponse =
            serde_json::from_slice(&body).map_err(|e| malformed(e.to_string()))?;
        if parsed.embeddings.len() != texts.len() {
            return Err(malformed(format!(
                "{} embeddings for {} texts",
                parsed.embeddings.len(),
                texts.len()
            )));
        }
        for v in &parsed.embeddings {
            if v.len() != self.config.dim {
                return Err(Attempt::Fatal(Error::EmbedDimension {
                    batch,
                    expected: self.config.dim,
                    actual: v.len(),
                }));
            }
        }
        Ok(parsed.embeddings)
    }
}

impl Embedder for RemoteEmbedder {
    fn id(&self) -> String {
        format!("remote-{}-{}", self.url, self.config.dim)
    }

    fn dim(&self) -> usize {
        self.config.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(texts.len());
        for (batch, chunk) in texts.chunks(self.config.batch_size).enumerate() {
            let mut tries = 0;
            let vectors = loop {
                match self.attempt(batch, chunk) {
                    Ok(v) => break v,
                    Err(Attempt::Fatal(e)) => return Err(e),
                    Err(Attempt::Transient(e)) => {
                        if tries >= self.config.retries {
                            return Err(e);
                        }
                        tries += 1;
                        log::warn!("embedding batch {batch} failed ({e}); retry {tries}");
                    }
                }
            };
            out.extend(vectors);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn unit_norm_and_deterministic() {
        let a = hash_embed("The tower was built in 1889.", 64).unwrap();
        let b = hash_embed("The tower was built in 1889.", 64).unwrap();
        assert_eq!(a, b);
        assert!((dot(&a, &a) - 1.0).abs() < 1e-9);
        assert!((dot(&a, &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_words_are_nearly_orthogonal() {
        let a = hash_embed("aaa bbb", 4096).unwrap();
        let b = hash_embed("ccc ddd", 4096).unwrap();
        assert_eq!(dot(&a, &b), 0.0);
    }

    #[test]
    fn shared_words_raise_similarity() {
        let q = hash_embed("eiffel tower height", 256).unwrap();
        let near = hash_embed("the eiffel tower is tall", 256).unwrap();
        let far = hash_embed("bananas grow in warm climates", 256).unwrap();
        assert!(dot(&q, &near) > dot(&q, &far));
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(hash_embed("?!", 16), Err(Error::DegenerateEmbedding(_))));
        assert!(matches!(hash_embed("a", 4), Err(Error::Config(_))));
        let cfg = EmbedderConfig {
            kind: EmbedderKind::Remote,
            ..EmbedderConfig::default()
        };
        assert!(cfg.build().is_err());
    }
}
