//! Run manifest: everything needed to re-execute a run bit-identically in
//! replay mode (config snapshot, dataset checksum, per-document request
//! hashes, cache checksums) plus wall-clock bookkeeping.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ExperimentConfig;
use crate::corpus::Dataset;
use crate::embedding::hex_encode;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentTrace {
    pub doc_id: String,
    pub request_hash: String,
    pub response_sha256: Option<String>,
    pub prompt_tokens: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub dataset_sha256: String,
    pub documents: Vec<DocumentTrace>,
    /// Combined digest over (request hash, response digest) pairs.
    pub completions_checksum: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub artifacts: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let data = serde_json::to_vec_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(path, data)
    }

    pub fn load(path: &Path) -> std::io::Result<RunManifest> {
        let data = std::fs::read_to_string(path)?;
        serde_json::from_str(&data).map_err(std::io::Error::other)
    }
}

/// Content digest of a dataset: documents and annotations in load order.
pub fn dataset_checksum(dataset: &Dataset) -> String {
    let mut hasher = Sha256::new();
    for doc in dataset.documents() {
        hasher.update(doc.id.as_bytes());
        hasher.update([0]);
        hasher.update(doc.split.as_str().as_bytes());
        hasher.update([0]);
        hasher.update(doc.text.as_bytes());
        hasher.update([0]);
    }
    for ann in dataset.annotations() {
        hasher.update(ann.doc_id.as_bytes());
        hasher.update([0]);
        hasher.update(ann.entity_type.as_str().as_bytes());
        hasher.update([0]);
        hasher.update(ann.surface.as_bytes());
        hasher.update([0]);
        hasher.update(format!("{:?}-{:?}", ann.start, ann.end).as_bytes());
        hasher.update([0]);
    }
    hex_encode(&hasher.finalize())
}

/// Digest over the sorted (request hash, response digest) pairs of a run.
pub fn completions_checksum(documents: &[DocumentTrace]) -> String {
    let mut lines: Vec<String> = documents
        .iter()
        .map(|d| {
            format!(
                "{}:{}",
                d.request_hash,
                d.response_sha256.as_deref().unwrap_or("-")
            )
        })
        .collect();
    lines.sort();
    let mut hasher = Sha256::new();
    for line in lines {
        hasher.update(line.as_bytes());
        hasher.update(b"\n");
    }
    hex_encode(&hasher.finalize())
}

pub fn now_unix() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
