//! Text embeddings: fixed-dimension vectors, an exact Euclidean distance
//! primitive, and a content-addressed disk cache for replayable runs.

mod cache;

pub use cache::EmbeddingCache;

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::transport::{Transport, TransportError};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("embedding gateway unavailable and no cache entry for the text")]
    GatewayUnavailable,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("model mismatch: {a} vs {b}")]
    ModelMismatch { a: String, b: String },
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("non-finite component in embedding vector")]
    NonFinite,
    #[error("duplicate item id: {0}")]
    DuplicateItemId(String),
    #[error("embedding item {item_id} failed: {source}")]
    ItemFailed {
        item_id: String,
        #[source]
        source: Box<EmbeddingError>,
    },
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("cache I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt cache entry: {0}")]
    CorruptCache(String),
}

/// SHA-256 hash of the UTF-8 text, hex-encoded. Cache key component.
pub fn text_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    hex_encode(&digest)
}

pub(crate) fn hex_encode(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// A fixed-length embedding of one text under one model.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    model_id: String,
    text_hash: String,
}

impl EmbeddingVector {
    pub fn new(
        values: Vec<f64>,
        model_id: impl Into<String>,
        text_hash: impl Into<String>,
    ) -> Result<EmbeddingVector, EmbeddingError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        Ok(EmbeddingVector {
            values,
            model_id: model_id.into(),
            text_hash: text_hash.into(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn text_hash(&self) -> &str {
        &self.text_hash
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Euclidean distance `‖a − b‖₂` with a fixed summation order so results are
/// bit-stable across runs.
pub fn distance(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    if a.model_id != b.model_id {
        return Err(EmbeddingError::ModelMismatch {
            a: a.model_id.clone(),
            b: b.model_id.clone(),
        });
    }
    if a.values.len() != b.values.len() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: a.values.len(),
            got: b.values.len(),
        });
    }
    let mut sum = 0.0f64;
    for (x, y) in a.values.iter().zip(b.values.iter()) {
        let d = x - y;
        sum += d * d;
    }
    Ok(sum.sqrt())
}

/// An exact-search store of (item id, vector) pairs sharing one model.
#[derive(Debug, Clone)]
pub struct EmbeddingIndex {
    entries: Vec<(String, EmbeddingVector)>,
    model_id: String,
}

impl EmbeddingIndex {
    pub fn new(model_id: impl Into<String>) -> EmbeddingIndex {
        EmbeddingIndex {
            entries: Vec::new(),
            model_id: model_id.into(),
        }
    }

    pub fn push(&mut self, item_id: String, vector: EmbeddingVector) -> Result<(), EmbeddingError> {
        if vector.model_id != self.model_id {
            return Err(EmbeddingError::ModelMismatch {
                a: self.model_id.clone(),
                b: vector.model_id,
            });
        }
        if let Some((_, first)) = self.entries.first() {
            if first.dim() != vector.dim() {
                return Err(EmbeddingError::DimensionMismatch {
                    expected: first.dim(),
                    got: vector.dim(),
                });
            }
        }
        if self.entries.iter().any(|(id, _)| id == &item_id) {
            return Err(EmbeddingError::DuplicateItemId(item_id));
        }
        self.entries.push((item_id, vector));
        Ok(())
    }

    pub fn entries(&self) -> &[(String, EmbeddingVector)] {
        &self.entries
    }

    pub fn get(&self, item_id: &str) -> Option<&EmbeddingVector> {
        self.entries
            .iter()
            .find(|(id, _)| id == item_id)
            .map(|(_, v)| v)
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Obtains embeddings, serving from the cache when possible and fetching via
/// the transport otherwise. With no transport configured the embedder is
/// fully offline and a cache miss is an error.
pub struct Embedder {
    cache: EmbeddingCache,
    transport: Option<Transport>,
    dimensions: BTreeMap<String, usize>,
}

impl Embedder {
    pub fn new(cache: EmbeddingCache, transport: Option<Transport>) -> Embedder {
        let mut dimensions = BTreeMap::new();
        dimensions.insert("text-embedding-3-large".to_string(), 3072);
        dimensions.insert("text-embedding-3-small".to_string(), 1536);
        Embedder {
            cache,
            transport,
            dimensions,
        }
    }

    /// Registers (or overrides) the expected dimension for a model id.
    pub fn with_dimension(mut self, model_id: impl Into<String>, dim: usize) -> Embedder {
        self.dimensions.insert(model_id.into(), dim);
        self
    }

    pub fn expected_dim(&self, model_id: &str) -> Option<usize> {
        self.dimensions.get(model_id).copied()
    }

    pub fn cache(&self) -> &EmbeddingCache {
        &self.cache
    }

    /// Returns the embedding for `text`, from cache when warm. Deterministic
    /// given a warm cache: the stored 64-bit values are returned bitwise.
    pub fn embed(&self, text: &str, model_id: &str) -> Result<EmbeddingVector, EmbeddingError> {
        if text.is_empty() {
            return Err(EmbeddingError::EmptyText);
        }
        let hash = text_hash(text);
        if let Some(values) = self.cache.read(model_id, &hash)? {
            self.check_dim(model_id, values.len())?;
            return EmbeddingVector::new(values, model_id, hash);
        }
        let Some(transport) = &self.transport else {
            return Err(EmbeddingError::GatewayUnavailable);
        };

        let body = serde_json::json!({ "model": model_id, "input": [text] });
        let response = transport.post_json("/embeddings", &body)?;
        let values: Vec<f64> = response["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| {
                EmbeddingError::Transport(TransportError::BadResponse(
                    "missing data[0].embedding".into(),
                ))
            })?
            .iter()
            .map(|v| v.as_f64().unwrap_or(f64::NAN))
            .collect();
        self.check_dim(model_id, values.len())?;
        let vector = EmbeddingVector::new(values, model_id, hash.clone())?;
        self.cache.write(model_id, &hash, text.len(), vector.values())?;
        Ok(vector)
    }

    /// Embeds every item in order. Propagates failures with the offending id.
    pub fn build_index(
        &self,
        items: &[(String, String)],
        model_id: &str,
    ) -> Result<EmbeddingIndex, EmbeddingError> {
        let mut index = EmbeddingIndex::new(model_id);
        for (item_id, text) in items {
            let vector = self
                .embed(text, model_id)
                .map_err(|source| EmbeddingError::ItemFailed {
                    item_id: item_id.clone(),
                    source: Box::new(source),
                })?;
            index.push(item_id.clone(), vector)?;
        }
        Ok(index)
    }

    fn check_dim(&self, model_id: &str, got: usize) -> Result<(), EmbeddingError> {
        if let Some(expected) = self.expected_dim(model_id) {
            if got != expected {
                return Err(EmbeddingError::DimensionMismatch { expected, got });
            }
        }
        Ok(())
    }
}
