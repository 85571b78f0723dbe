//! Provider-agnostic chat-completion gateway with a replay cache.
//!
//! Requests are content-addressed by (model id, prompt text, temperature).
//! `record` mode persists live responses under that hash; `replay` mode serves
//! them back byte-identically and never touches the network.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{normalize_entity, Dataset, EntityType, Split};
use crate::embedding::hex_encode;
use crate::prompt::{assemble_with, PromptError, PromptSpec, PromptTemplates, PromptText};
use crate::tokenizer::Tokenizer;
use crate::transport::{Transport, TransportError};

static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("no cached response for request hash {0}")]
    CacheMiss(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("malformed completion response: {0}")]
    BadResponse(String),
    #[error("transport not configured for {0} mode")]
    NoTransport(&'static str),
    #[error("split {0} has no documents")]
    EmptySplit(Split),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Transport mode for [`Gateway::complete`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Live,
    Record,
    Replay,
}

/// One completion request; the hash is a deterministic function of
/// (model id, prompt text, temperature).
#[derive(Debug, Clone)]
pub struct CompletionRequest {
    pub model_id: String,
    pub prompt: PromptText,
    pub temperature: f64,
    pub max_output_tokens: u32,
    request_hash: String,
}

impl CompletionRequest {
    pub fn new(
        model_id: impl Into<String>,
        prompt: PromptText,
        temperature: f64,
        max_output_tokens: u32,
    ) -> CompletionRequest {
        let model_id = model_id.into();
        let request_hash = request_hash(&model_id, &prompt.text, temperature);
        CompletionRequest {
            model_id,
            prompt,
            temperature,
            max_output_tokens,
            request_hash,
        }
    }

    pub fn request_hash(&self) -> &str {
        &self.request_hash
    }
}

pub fn request_hash(model_id: &str, prompt_text: &str, temperature: f64) -> String {
    let mut hasher = Sha256::new();
    hasher.update(model_id.as_bytes());
    hasher.update([0u8]);
    hasher.update(prompt_text.as_bytes());
    hasher.update([0u8]);
    hasher.update(format!("{temperature:?}").as_bytes());
    hex_encode(&hasher.finalize())
}

#[derive(Serialize, Deserialize)]
struct CacheRecord {
    model_id: String,
    temperature: f64,
    prompt_sha256: String,
    response: String,
}

/// Chat-completion transport with a content-addressed response cache at
/// `<cache>/completions/<request_hash>.json`.
pub struct Gateway {
    cache_dir: PathBuf,
    transport: Option<Transport>,
    mode: Mode,
}

impl Gateway {
    pub fn new(cache_root: impl AsRef<Path>, transport: Option<Transport>, mode: Mode) -> Gateway {
        Gateway {
            cache_dir: cache_root.as_ref().join("completions"),
            transport,
            mode,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    fn cache_path(&self, hash: &str) -> PathBuf {
        self.cache_dir.join(format!("{hash}.json"))
    }

    pub fn cached(&self, hash: &str) -> bool {
        self.cache_path(hash).is_file()
    }

    fn read_cache(&self, hash: &str) -> Result<Option<String>, GatewayError> {
        let path = self.cache_path(hash);
        match fs::read_to_string(&path) {
            Ok(data) => {
                let record: CacheRecord = serde_json::from_str(&data)
                    .map_err(|e| GatewayError::BadResponse(format!("{}: {e}", path.display())))?;
                Ok(Some(record.response))
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    fn write_cache(&self, request: &CompletionRequest, response: &str) -> Result<(), GatewayError> {
        fs::create_dir_all(&self.cache_dir)?;
        let record = CacheRecord {
            model_id: request.model_id.clone(),
            temperature: request.temperature,
            prompt_sha256: crate::embedding::text_hash(&request.prompt.text),
            response: response.to_string(),
        };
        let tmp = self.cache_dir.join(format!(
            ".{}.{}.{}.tmp",
            request.request_hash,
            std::process::id(),
            TEMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        fs::write(&tmp, serde_json::to_vec_pretty(&record).map_err(std::io::Error::other)?)?;
        fs::rename(&tmp, self.cache_path(&request.request_hash))?;
        Ok(())
    }

    /// Seeds a cache entry directly; used to build offline fixtures.
    pub fn seed_cache(&self, request: &CompletionRequest, response: &str) -> Result<(), GatewayError> {
        self.write_cache(request, response)
    }

    fn call_provider(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        let transport = self
            .transport
            .as_ref()
            .ok_or(GatewayError::NoTransport("live/record"))?;
        // A single user-role message carrying the full prompt keeps token
        // accounting aligned with the prompt text.
        let body = serde_json::json!({
            "model": request.model_id,
            "messages": [{ "role": "user", "content": request.prompt.text }],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        });
        let response = transport.post_json("/chat/completions", &body)?;
        response["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| {
                GatewayError::BadResponse("missing choices[0].message.content".into())
            })
    }

    /// Returns the raw completion text for the request under the gateway mode.
    pub fn complete(&self, request: &CompletionRequest) -> Result<String, GatewayError> {
        match self.mode {
            Mode::Replay => self
                .read_cache(request.request_hash())?
                .ok_or_else(|| GatewayError::CacheMiss(request.request_hash().to_string())),
            Mode::Record => {
                if let Some(hit) = self.read_cache(request.request_hash())? {
                    return Ok(hit);
                }
                let response = self.call_provider(request)?;
                self.write_cache(request, &response)?;
                Ok(response)
            }
            Mode::Live => self.call_provider(request),
        }
    }
}

/// Normalized model outputs for one document and entity type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub doc_id: String,
    pub entity_type: EntityType,
    pub entities: BTreeSet<String>,
    pub raw_output: String,
}

impl PredictionSet {
    pub fn from_raw(doc_id: impl Into<String>, entity_type: EntityType, raw: &str) -> PredictionSet {
        PredictionSet {
            doc_id: doc_id.into(),
            entity_type,
            entities: parse_output(raw),
            raw_output: raw.to_string(),
        }
    }
}

/// Parses a comma-separated entity listing, preserving the model's output
/// order. Items are trimmed, empties dropped, one terminal period is stripped
/// from the final item, every item is normalized, duplicates collapse, and a
/// lone "none" yields the empty list.
pub fn parse_output_ordered(raw: &str) -> Vec<String> {
    let mut items: Vec<&str> = raw
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if let Some(last) = items.last() {
        if let Some(stripped) = last.strip_suffix('.') {
            *items.last_mut().unwrap() = stripped.trim_end();
        }
    }

    let mut seen = BTreeSet::new();
    let ordered: Vec<String> = items
        .into_iter()
        .map(normalize_entity)
        .filter(|s| !s.is_empty())
        .filter(|s| seen.insert(s.clone()))
        .collect();
    if ordered.len() == 1 && ordered[0] == "none" {
        return Vec::new();
    }
    ordered
}

/// Parses a comma-separated entity listing into a normalized set.
///
/// Total over arbitrary strings; see [`parse_output_ordered`] for the exact
/// item handling.
pub fn parse_output(raw: &str) -> BTreeSet<String> {
    parse_output_ordered(raw).into_iter().collect()
}

/// Renders a set of entities back into the comma-separated output contract.
pub fn format_entity_list(entities: &BTreeSet<String>) -> String {
    if entities.is_empty() {
        "none".to_string()
    } else {
        entities.iter().cloned().collect::<Vec<_>>().join(", ")
    }
}

#[derive(Serialize, Deserialize)]
struct FinetuneMessage {
    role: String,
    content: String,
}

#[derive(Serialize, Deserialize)]
struct FinetuneRecord {
    messages: Vec<FinetuneMessage>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FinetuneExport {
    pub train_path: PathBuf,
    pub val_path: PathBuf,
    pub train_records: usize,
    pub val_records: usize,
}

/// Exports fine-tuning JSONL for the train and validation splits: one record
/// per document, a user message holding the rendered prompt and an assistant
/// message holding the flattened gold list (or "none").
pub fn export_finetune_dataset(
    dataset: &Dataset,
    entity_type: EntityType,
    template_spec: &PromptSpec,
    templates: &PromptTemplates,
    tokenizer: &Tokenizer,
    out_dir: &Path,
) -> Result<FinetuneExport, GatewayError> {
    fs::create_dir_all(out_dir)?;
    let mut export = FinetuneExport {
        train_path: out_dir.join(format!("finetune_{entity_type}.train.jsonl")),
        val_path: out_dir.join(format!("finetune_{entity_type}.val.jsonl")),
        train_records: 0,
        val_records: 0,
    };
    export.train_records = export_split(
        dataset,
        Split::Train,
        entity_type,
        template_spec,
        templates,
        tokenizer,
        &export.train_path,
    )?;
    export.val_records = export_split(
        dataset,
        Split::Val,
        entity_type,
        template_spec,
        templates,
        tokenizer,
        &export.val_path,
    )?;
    Ok(export)
}

fn export_split(
    dataset: &Dataset,
    split: Split,
    entity_type: EntityType,
    template_spec: &PromptSpec,
    templates: &PromptTemplates,
    tokenizer: &Tokenizer,
    path: &Path,
) -> Result<usize, GatewayError> {
    use std::io::Write;

    let ids = dataset.split_ids(split);
    if ids.is_empty() {
        return Err(GatewayError::EmptySplit(split));
    }
    let mut out = fs::File::create(path)?;
    for id in &ids {
        let doc = dataset.document(id).expect("split ids resolve");
        let spec = PromptSpec {
            entity_type,
            include_guidance: template_spec.include_guidance,
            include_disambiguation: template_spec.include_disambiguation,
            shots: Vec::new(),
            snippets: Vec::new(),
            inquiry_text: doc.text.clone(),
        };
        let prompt = assemble_with(&spec, templates, tokenizer)?;

        let mut labels = Vec::new();
        for ann in dataset.annotations_for(id) {
            if ann.entity_type != entity_type {
                continue;
            }
            let normalized = normalize_entity(&ann.surface);
            if !labels.contains(&normalized) {
                labels.push(normalized);
            }
        }
        let answer = if labels.is_empty() {
            "none".to_string()
        } else {
            labels.join(", ")
        };

        let record = FinetuneRecord {
            messages: vec![
                FinetuneMessage {
                    role: "user".into(),
                    content: prompt.text,
                },
                FinetuneMessage {
                    role: "assistant".into(),
                    content: answer,
                },
            ],
        };
        serde_json::to_writer(&mut out, &record).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
    }
    Ok(ids.len())
}
