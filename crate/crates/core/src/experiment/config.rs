//! Declarative experiment configuration with validation of the supported
//! parameter grids.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{DatasetFormat, EntityType};
use crate::gateway::Mode;
use crate::rag::RagAdapter;

/// k values accepted by the configuration validator (0 means zero-shot).
pub const K_GRID: [usize; 10] = [0, 1, 2, 4, 6, 8, 10, 12, 14, 16];
/// Cluster counts accepted for Cluster-KNN.
pub const C_GRID: [usize; 2] = [32, 64];
/// Snippet counts accepted without the large-K escape hatch.
pub const RAG_K_GRID: [usize; 2] = [1, 2];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("k = {0} is not in the supported grid {K_GRID:?}")]
    InvalidK(usize),
    #[error("cluster_knn requires C in {C_GRID:?}, got {0:?}")]
    InvalidC(Option<usize>),
    #[error("rag.k_snippets = {0} outside {RAG_K_GRID:?}; set rag.allow_large_k to override")]
    InvalidRagK(usize),
    #[error("rag enabled but paths.rag_corpus is not set")]
    MissingRagCorpus,
    #[error("temperature must be a finite non-negative number, got {0}")]
    InvalidTemperature(f64),
    #[error("pricing must be non-negative, got {0}")]
    InvalidPricing(f64),
    #[error("gateway.in_flight must be at least 1")]
    InvalidInFlight,
    #[error("cannot read config {path}: {message}")]
    Unreadable { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMethod {
    Random,
    Knn,
    ClusterKnn,
}

impl SelectionMethod {
    /// Label used in sweep reports; Cluster-KNN is suffixed with C.
    pub fn label(&self, c: Option<usize>) -> String {
        match self {
            SelectionMethod::Random => "inquiry_random".to_string(),
            SelectionMethod::Knn => "inquiry_knn".to_string(),
            SelectionMethod::ClusterKnn => match c {
                Some(c) => format!("cluster_knn_{c}"),
                None => "cluster_knn".to_string(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptFlags {
    pub guidance: bool,
    pub disambiguation: bool,
}

impl Default for PromptFlags {
    fn default() -> Self {
        PromptFlags {
            guidance: true,
            disambiguation: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub method: SelectionMethod,
    pub k: usize,
    pub c: Option<usize>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            method: SelectionMethod::Knn,
            k: 0,
            c: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RagSettings {
    pub enabled: bool,
    pub k_snippets: usize,
    pub allow_large_k: bool,
}

impl Default for RagSettings {
    fn default() -> Self {
        RagSettings {
            enabled: false,
            k_snippets: 1,
            allow_large_k: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Pricing {
    /// April 2025 input rate: $5 per million input tokens.
    pub dollars_per_million_input_tokens: f64,
}

impl Default for Pricing {
    fn default() -> Self {
        Pricing {
            dollars_per_million_input_tokens: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewaySettings {
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub in_flight: usize,
}

impl Default for GatewaySettings {
    fn default() -> Self {
        GatewaySettings {
            temperature: 0.0,
            max_output_tokens: 512,
            in_flight: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingSettings {
    pub model_id: String,
    /// Dimension override for models outside the builtin registry.
    pub dimension: Option<usize>,
}

impl Default for EmbeddingSettings {
    fn default() -> Self {
        EmbeddingSettings {
            model_id: "text-embedding-3-large".to_string(),
            dimension: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    pub dataset: PathBuf,
    pub dataset_format: DatasetFormat,
    pub rag_corpus: Option<PathBuf>,
    pub rag_format: RagAdapter,
    pub cache: PathBuf,
    pub output: PathBuf,
    pub prompt_templates: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            dataset: PathBuf::from("data/raredis.jsonl"),
            dataset_format: DatasetFormat::CanonicalJsonl,
            rag_corpus: None,
            rag_format: RagAdapter::CanonicalJsonl,
            cache: PathBuf::from("cache"),
            output: PathBuf::from("runs"),
            prompt_templates: None,
        }
    }
}

/// Full declarative description of one experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub entity_type: EntityType,
    pub model_id: String,
    pub tokenizer_id: String,
    pub mode: Mode,
    pub seed: u64,
    pub prompt: PromptFlags,
    pub selection: SelectionConfig,
    pub rag: RagSettings,
    pub pricing: Pricing,
    pub gateway: GatewaySettings,
    pub embedding: EmbeddingSettings,
    pub paths: PathsConfig,
    /// When set, rendered prompts are persisted under `prompts/` in the run
    /// directory.
    pub persist_prompts: bool,
    /// Fixed run directory name; a timestamp-hash name is generated otherwise.
    pub run_label: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            entity_type: EntityType::RareDisease,
            model_id: "gpt-4o".to_string(),
            tokenizer_id: "o200k_base".to_string(),
            mode: Mode::Replay,
            seed: 42,
            prompt: PromptFlags::default(),
            selection: SelectionConfig::default(),
            rag: RagSettings::default(),
            pricing: Pricing::default(),
            gateway: GatewaySettings::default(),
            embedding: EmbeddingSettings::default(),
            paths: PathsConfig::default(),
            persist_prompts: false,
            run_label: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load_toml(path: &Path) -> Result<ExperimentConfig, ConfigError> {
        let data = std::fs::read_to_string(path).map_err(|e| ConfigError::Unreadable {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        toml::from_str(&data).map_err(|e| ConfigError::Unreadable {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !K_GRID.contains(&self.selection.k) {
            return Err(ConfigError::InvalidK(self.selection.k));
        }
        if self.selection.method == SelectionMethod::ClusterKnn
            && !self.selection.c.is_some_and(|c| C_GRID.contains(&c))
        {
            return Err(ConfigError::InvalidC(self.selection.c));
        }
        if self.rag.enabled {
            if self.paths.rag_corpus.is_none() {
                return Err(ConfigError::MissingRagCorpus);
            }
            if !RAG_K_GRID.contains(&self.rag.k_snippets) {
                if !self.rag.allow_large_k {
                    return Err(ConfigError::InvalidRagK(self.rag.k_snippets));
                }
                log::warn!(
                    "rag.k_snippets = {} is outside {:?}; larger K often adds semantic noise",
                    self.rag.k_snippets,
                    RAG_K_GRID
                );
            }
        }
        if !self.gateway.temperature.is_finite() || self.gateway.temperature < 0.0 {
            return Err(ConfigError::InvalidTemperature(self.gateway.temperature));
        }
        if self.pricing.dollars_per_million_input_tokens < 0.0 {
            return Err(ConfigError::InvalidPricing(
                self.pricing.dollars_per_million_input_tokens,
            ));
        }
        if self.gateway.in_flight == 0 {
            return Err(ConfigError::InvalidInFlight);
        }
        Ok(())
    }
}
