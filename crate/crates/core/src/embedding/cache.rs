//! Content-addressed embedding cache.
//!
//! Layout: `<root>/<model_id>/<text-sha256>.vec` holding raw little-endian
//! f64 components, plus `<root>/<model_id>/manifest.jsonl` with one record
//! per stored vector. Writes go through a temp file and an atomic rename.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::EmbeddingError;

static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

#[derive(Serialize, Deserialize)]
struct ManifestRecord {
    hash: String,
    text_len: usize,
    created_at: u64,
}

#[derive(Debug, Clone)]
pub struct EmbeddingCache {
    root: PathBuf,
}

impl EmbeddingCache {
    pub fn new(root: impl AsRef<Path>) -> EmbeddingCache {
        EmbeddingCache {
            root: root.as_ref().to_path_buf(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn vec_path(&self, model_id: &str, hash: &str) -> PathBuf {
        self.root.join(sanitize(model_id)).join(format!("{hash}.vec"))
    }

    pub fn contains(&self, model_id: &str, hash: &str) -> bool {
        self.vec_path(model_id, hash).is_file()
    }

    /// Reads a cached vector, or `None` on a miss.
    pub fn read(&self, model_id: &str, hash: &str) -> Result<Option<Vec<f64>>, EmbeddingError> {
        let path = self.vec_path(model_id, hash);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        if bytes.len() % 8 != 0 {
            return Err(EmbeddingError::CorruptCache(path.display().to_string()));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::CorruptCache(path.display().to_string()));
        }
        Ok(Some(values))
    }

    /// Stores a vector atomically and appends a manifest record.
    pub fn write(
        &self,
        model_id: &str,
        hash: &str,
        text_len: usize,
        values: &[f64],
    ) -> Result<(), EmbeddingError> {
        let dir = self.root.join(sanitize(model_id));
        fs::create_dir_all(&dir)?;

        let mut bytes = Vec::with_capacity(values.len() * 8);
        for v in values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let tmp = dir.join(format!(
            ".{}.{}.{}.tmp",
            hash,
            std::process::id(),
            TEMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        fs::write(&tmp, &bytes)?;
        fs::rename(&tmp, self.vec_path(model_id, hash))?;

        let record = ManifestRecord {
            hash: hash.to_string(),
            text_len,
            created_at: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        let mut line = serde_json::to_string(&record).map_err(std::io::Error::other)?;
        line.push('\n');
        let mut manifest = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(dir.join("manifest.jsonl"))?;
        manifest.write_all(line.as_bytes())?;
        Ok(())
    }
}

/// Model ids become directory names; keep them filesystem-safe.
fn sanitize(model_id: &str) -> String {
    model_id
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '-' || c == '.' || c == '_' { c } else { '_' })
        .collect()
}
