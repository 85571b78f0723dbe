//! Experiment execution: plan prompts for every test document, complete them
//! through the gateway, and persist predictions, scores, taxonomy, and cost
//! summaries into a self-describing run directory.
//!
//! Replay runs install the network guard for their whole duration and verify
//! cache completeness before touching a single request, so a published run
//! directory plus caches plus the dataset reproduces every result file
//! bit-identically.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::config::{ExperimentConfig, SelectionMethod};
use super::manifest::{
    completions_checksum, dataset_checksum, now_unix, DocumentTrace, RunManifest,
};
use crate::corpus::{
    load_raredis, normalize_entity, CorpusError, Dataset, EntityType, Split,
};
use crate::costfit::{cost_per_query, CostFitError};
use crate::embedding::{text_hash, Embedder, EmbeddingCache, EmbeddingError, EmbeddingIndex};
use crate::eval::{
    align, categorize_pair, classify, merge_counts, score, Alignment, ErrorCounts,
    ErrorDistribution, EvalError, ScoreReport,
};
use crate::gateway::{
    parse_output, parse_output_ordered, CompletionRequest, Gateway, GatewayError, Mode,
    PredictionSet,
};
use crate::prompt::{assemble_with, PromptError, PromptSpec, PromptTemplates, PromptText};
use crate::rag::{embed_corpus, ingest_orphanet, retrieve, KnowledgeCorpus, RagError};
use crate::selection::{
    ids as ranked_ids, kmeans, materialize_examples, select_cluster_knn, select_knn,
    select_random, Ranked, SelectionError,
};
use crate::tokenizer::{Tokenizer, TokenizerError};
use crate::transport::{guard, Transport, TransportError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] super::config::ConfigError),
    #[error("replay cache incomplete; {n} request hashes missing", n = .0.len())]
    CacheIncomplete(Vec<String>),
    #[error("run directory already exists: {0}")]
    RunDirExists(PathBuf),
    #[error("document {doc_id}: {source}")]
    Document {
        doc_id: String,
        #[source]
        source: Box<ExperimentError>,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Rag(#[from] RagError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    CostFit(#[from] CostFitError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ExperimentError {
    fn for_doc(doc_id: &str, source: ExperimentError) -> ExperimentError {
        ExperimentError::Document {
            doc_id: doc_id.to_string(),
            source: Box::new(source),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostSummary {
    pub documents: usize,
    pub avg_input_tokens: f64,
    pub cost_cents_per_query: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SelectionTrace {
    inquiry_id: String,
    method: String,
    k: usize,
    #[serde(rename = "C")]
    c: Option<usize>,
    seed: u64,
    selected: Vec<String>,
    distances: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PredictionRecord {
    doc_id: String,
    entity_type: EntityType,
    entities: Vec<String>,
    raw_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
struct DocDiagnostics<'a> {
    doc_id: &'a str,
    aligned: Vec<AlignedDiagnostic>,
    spurious: Vec<String>,
    missed: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
struct AlignedDiagnostic {
    pred: String,
    gold: String,
    gold_type: EntityType,
    overlap: usize,
    category: &'static str,
}

struct PlannedDoc {
    doc_id: String,
    prompt: PromptText,
    request: CompletionRequest,
    trace: SelectionTrace,
}

pub struct RunOutput {
    pub run_dir: PathBuf,
    pub manifest: RunManifest,
    pub score: ScoreReport,
    pub errors: ErrorDistribution,
    pub cost: CostSummary,
}

/// Bounded-worker map preserving input order in the output.
fn parallel_map<T: Sync, R: Send>(
    items: &[T],
    workers: usize,
    f: impl Fn(&T) -> R + Sync,
) -> Vec<R> {
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = (0..items.len()).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers.min(items.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let result = f(&items[i]);
                *slots[i].lock().unwrap() = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("worker filled slot"))
        .collect()
}

/// Per-inquiry seed for Inquiry-Random: the base seed mixed with the document
/// id, so draws differ per inquiry but stay reproducible.
fn derive_doc_seed(seed: u64, doc_id: &str) -> u64 {
    let digest = Sha256::digest(doc_id.as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    seed ^ u64::from_le_bytes(bytes)
}

fn env_transport() -> Option<Transport> {
    Transport::from_env().ok()
}

fn config_digest(config: &ExperimentConfig) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    crate::embedding::text_hash(&json)
}

/// Executes one experiment end to end and persists all artifacts.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput, ExperimentError> {
    config.validate()?;
    let started = now_unix();

    let tokenizer = Tokenizer::by_id(&config.tokenizer_id)?;
    let templates = match &config.paths.prompt_templates {
        Some(dir) => PromptTemplates::with_overrides(dir)?,
        None => PromptTemplates::builtin().clone(),
    };
    let dataset = load_raredis(&config.paths.dataset, config.paths.dataset_format)?;

    // Replay runs must never reach the network; the guard makes violations loud.
    let _net_guard = (config.mode == Mode::Replay).then(guard::forbid_network);

    let gateway = Gateway::new(
        &config.paths.cache,
        match config.mode {
            Mode::Replay => None,
            Mode::Live | Mode::Record => env_transport(),
        },
        config.mode,
    );
    let mut embedder = Embedder::new(
        EmbeddingCache::new(&config.paths.cache),
        match config.mode {
            Mode::Replay => None,
            Mode::Live | Mode::Record => env_transport(),
        },
    );
    if let Some(dim) = config.embedding.dimension {
        embedder = embedder.with_dimension(&config.embedding.model_id, dim);
    }

    let planned = plan_documents(config, &dataset, &embedder, &templates, &tokenizer)?;

    if config.mode == Mode::Replay {
        let mut missing: Vec<String> = planned
            .iter()
            .filter(|p| !gateway.cached(p.request.request_hash()))
            .map(|p| p.request.request_hash().to_string())
            .collect();
        if !missing.is_empty() {
            missing.sort();
            return Err(ExperimentError::CacheIncomplete(missing));
        }
    }

    // Completion phase, bounded by the configured in-flight budget.
    let raw_results: Vec<Result<String, GatewayError>> =
        parallel_map(&planned, config.gateway.in_flight, |doc| {
            gateway.complete(&doc.request)
        });

    let mut predictions = Vec::with_capacity(planned.len());
    let mut traces = Vec::with_capacity(planned.len());
    for (doc, raw) in planned.iter().zip(raw_results) {
        let (raw_text, error) = match raw {
            Ok(text) => (text, None),
            Err(e @ (GatewayError::CacheMiss(_) | GatewayError::NoTransport(_))) => {
                return Err(ExperimentError::for_doc(&doc.doc_id, e.into()));
            }
            Err(e) => {
                // Provider hiccups after retries degrade to an empty
                // prediction with a visible marker; scoring stays total.
                log::warn!("document {}: {e}", doc.doc_id);
                (String::new(), Some(e.to_string()))
            }
        };
        predictions.push((doc, raw_text, error));
        traces.push(&doc.trace);
    }

    let prediction_sets: Vec<PredictionSet> = predictions
        .iter()
        .map(|(doc, raw, _)| PredictionSet::from_raw(doc.doc_id.clone(), config.entity_type, raw))
        .collect();

    let report = score(&prediction_sets, &dataset, config.entity_type)?;
    let (error_distribution, diagnostics) =
        taxonomy(&dataset, &predictions, config.entity_type)?;

    let avg_tokens = if planned.is_empty() {
        0.0
    } else {
        planned.iter().map(|p| p.prompt.token_count as f64).sum::<f64>() / planned.len() as f64
    };
    let cost = CostSummary {
        documents: planned.len(),
        avg_input_tokens: avg_tokens,
        cost_cents_per_query: cost_per_query(
            avg_tokens,
            config.pricing.dollars_per_million_input_tokens,
        )?,
    };

    // Persist everything.
    let label = config
        .run_label
        .clone()
        .unwrap_or_else(|| format!("{started}-{}", &config_digest(config)[..8]));
    let run_dir = config.paths.output.join(label);
    if run_dir.exists() {
        return Err(ExperimentError::RunDirExists(run_dir));
    }
    let results_dir = run_dir.join("results");
    std::fs::create_dir_all(&results_dir)?;

    write_jsonl(
        &results_dir.join("predictions.jsonl"),
        predictions.iter().map(|(doc, raw, error)| PredictionRecord {
            doc_id: doc.doc_id.clone(),
            entity_type: config.entity_type,
            entities: parse_output(raw).into_iter().collect(),
            raw_sha256: text_hash(raw),
            error: error.clone(),
        }),
    )?;
    write_jsonl(
        &results_dir.join("raw_outputs.jsonl"),
        predictions.iter().map(|(doc, raw, _)| {
            serde_json::json!({ "doc_id": doc.doc_id, "raw": raw })
        }),
    )?;
    write_jsonl(&results_dir.join("selection_trace.jsonl"), traces.into_iter())?;
    write_jsonl(&results_dir.join("diagnostics.jsonl"), diagnostics.iter())?;
    write_json(&results_dir.join("score.json"), &report)?;
    write_score_csv(&results_dir.join("score.csv"), &report)?;
    write_json(&results_dir.join("errors.json"), &error_distribution)?;
    write_errors_csv(&results_dir.join("errors.csv"), &error_distribution)?;
    write_json(&results_dir.join("cost.json"), &cost)?;

    if config.persist_prompts {
        let prompts_dir = run_dir.join("prompts");
        std::fs::create_dir_all(&prompts_dir)?;
        for (doc, _, _) in &predictions {
            std::fs::write(
                prompts_dir.join(format!("{}.txt", doc.doc_id)),
                &doc.prompt.text,
            )?;
        }
    }

    let documents: Vec<DocumentTrace> = predictions
        .iter()
        .map(|(doc, raw, error)| DocumentTrace {
            doc_id: doc.doc_id.clone(),
            request_hash: doc.request.request_hash().to_string(),
            response_sha256: error.is_none().then(|| text_hash(raw)),
            prompt_tokens: doc.prompt.token_count,
            error: error.clone(),
        })
        .collect();
    let manifest = RunManifest {
        config: config.clone(),
        dataset_sha256: dataset_checksum(&dataset),
        completions_checksum: completions_checksum(&documents),
        documents,
        started_unix: started,
        finished_unix: now_unix(),
        artifacts: artifact_map(config.persist_prompts),
    };
    manifest.save(&run_dir.join("manifest.json"))?;

    Ok(RunOutput {
        run_dir,
        manifest,
        score: report,
        errors: error_distribution,
        cost,
    })
}

fn artifact_map(persist_prompts: bool) -> BTreeMap<String, String> {
    let mut map = BTreeMap::new();
    for name in [
        "predictions.jsonl",
        "raw_outputs.jsonl",
        "selection_trace.jsonl",
        "diagnostics.jsonl",
        "score.json",
        "score.csv",
        "errors.json",
        "errors.csv",
        "cost.json",
    ] {
        map.insert(name.to_string(), format!("results/{name}"));
    }
    if persist_prompts {
        map.insert("prompts".to_string(), "prompts/".to_string());
    }
    map
}

/// Builds the prompt, request, and selection trace for every test document,
/// in sorted document order.
fn plan_documents(
    config: &ExperimentConfig,
    dataset: &Dataset,
    embedder: &Embedder,
    templates: &PromptTemplates,
    tokenizer: &Tokenizer,
) -> Result<Vec<PlannedDoc>, ExperimentError> {
    let entity_type = config.entity_type;
    let k = config.selection.k;
    let train_ids = dataset.split_ids(Split::Train);
    let mut test_ids = dataset.split_ids(Split::Test);
    test_ids.sort();

    let needs_train_index =
        k > 0 && matches!(config.selection.method, SelectionMethod::Knn | SelectionMethod::ClusterKnn);
    let needs_inquiry_embedding = config.rag.enabled
        || (k > 0 && config.selection.method == SelectionMethod::Knn)
        || (k > 0 && config.selection.method == SelectionMethod::ClusterKnn);

    let train_index: Option<EmbeddingIndex> = if needs_train_index {
        let items: Vec<(String, String)> = train_ids
            .iter()
            .map(|id| (id.clone(), dataset.document(id).unwrap().text.clone()))
            .collect();
        Some(embedder.build_index(&items, &config.embedding.model_id)?)
    } else {
        None
    };

    let test_index: Option<EmbeddingIndex> = if needs_inquiry_embedding {
        let items: Vec<(String, String)> = test_ids
            .iter()
            .map(|id| (id.clone(), dataset.document(id).unwrap().text.clone()))
            .collect();
        Some(embedder.build_index(&items, &config.embedding.model_id)?)
    } else {
        None
    };

    // Cluster-KNN: one shared exemplar list per cluster.
    let mut cluster_lists: BTreeMap<usize, Vec<Ranked>> = BTreeMap::new();
    let mut assignment = None;
    if k > 0 && config.selection.method == SelectionMethod::ClusterKnn {
        let test_index = test_index.as_ref().expect("test index built above");
        let train_index = train_index.as_ref().expect("train index built above");
        let c = config.selection.c.expect("validated");
        let clusters = kmeans(test_index, c, config.seed)?;
        for cluster_id in 0..clusters.num_clusters {
            if clusters.members_of(cluster_id).next().is_none() {
                continue;
            }
            cluster_lists.insert(
                cluster_id,
                select_cluster_knn(&clusters, cluster_id, train_index, test_index, k)?,
            );
        }
        assignment = Some(clusters);
    }

    let rag_corpus: Option<KnowledgeCorpus> = if config.rag.enabled {
        let path = config.paths.rag_corpus.as_ref().expect("validated");
        let (mut corpus, _report) = ingest_orphanet(path, config.paths.rag_format, tokenizer)?;
        embed_corpus(&mut corpus, embedder, &config.embedding.model_id)?;
        Some(corpus)
    } else {
        None
    };

    let method_label = config.selection.method.label(config.selection.c);
    let mut planned = Vec::with_capacity(test_ids.len());
    for doc_id in &test_ids {
        let doc = dataset.document(doc_id).expect("test ids resolve");

        let (selected_ids, distances, doc_seed) = match config.selection.method {
            _ if k == 0 => (Vec::new(), Vec::new(), config.seed),
            SelectionMethod::Random => {
                let doc_seed = derive_doc_seed(config.seed, doc_id);
                let picked = select_random(&train_ids, k, doc_seed)
                    .map_err(|e| ExperimentError::for_doc(doc_id, e.into()))?;
                (picked, Vec::new(), doc_seed)
            }
            SelectionMethod::Knn => {
                let index = test_index.as_ref().expect("built above");
                let inquiry = index.get(doc_id).expect("test doc embedded");
                let ranked = select_knn(inquiry, train_index.as_ref().unwrap(), k)
                    .map_err(|e| ExperimentError::for_doc(doc_id, e.into()))?;
                let distances = ranked.iter().map(|r| r.distance).collect();
                (ranked_ids(&ranked), distances, config.seed)
            }
            SelectionMethod::ClusterKnn => {
                let label = assignment
                    .as_ref()
                    .and_then(|a| a.label_of(doc_id))
                    .expect("every test doc labeled");
                let ranked = cluster_lists.get(&label).expect("cluster list built");
                let distances = ranked.iter().map(|r| r.distance).collect();
                (ranked_ids(ranked), distances, config.seed)
            }
        };

        let shots = materialize_examples(&selected_ids, dataset, entity_type)
            .map_err(|e| ExperimentError::for_doc(doc_id, e.into()))?;

        let snippets = match &rag_corpus {
            Some(corpus) => {
                let index = test_index.as_ref().expect("built above");
                let inquiry = index.get(doc_id).expect("test doc embedded");
                retrieve(inquiry, corpus, config.rag.k_snippets)
                    .map_err(|e| ExperimentError::for_doc(doc_id, e.into()))?
                    .into_iter()
                    .map(|hit| hit.snippet.clone())
                    .collect()
            }
            None => Vec::new(),
        };

        let spec = PromptSpec {
            entity_type,
            include_guidance: config.prompt.guidance,
            include_disambiguation: config.prompt.disambiguation,
            shots,
            snippets,
            inquiry_text: doc.text.clone(),
        };
        let prompt = assemble_with(&spec, templates, tokenizer)
            .map_err(|e| ExperimentError::for_doc(doc_id, e.into()))?;
        let request = CompletionRequest::new(
            &config.model_id,
            prompt.clone(),
            config.gateway.temperature,
            config.gateway.max_output_tokens,
        );

        planned.push(PlannedDoc {
            doc_id: doc_id.clone(),
            prompt,
            request,
            trace: SelectionTrace {
                inquiry_id: doc_id.clone(),
                method: method_label.clone(),
                k,
                c: config.selection.c.filter(|_| {
                    config.selection.method == SelectionMethod::ClusterKnn
                }),
                seed: doc_seed,
                selected: selected_ids,
                distances,
            },
        });
    }
    Ok(planned)
}

type Diagnostics = Vec<serde_json::Value>;

fn taxonomy(
    dataset: &Dataset,
    predictions: &[(&PlannedDoc, String, Option<String>)],
    inquiry_type: EntityType,
) -> Result<(ErrorDistribution, Diagnostics), ExperimentError> {
    let mut totals = ErrorCounts::new();
    let mut diagnostics = Vec::with_capacity(predictions.len());

    for (doc, raw, _) in predictions {
        // The greedy pass visits predictions in the model's output order.
        let preds: Vec<(String, EntityType)> = parse_output_ordered(raw)
            .into_iter()
            .map(|s| (s, inquiry_type))
            .collect();

        // Gold pool spans all four entity types so Type confusions are
        // observable; deduplicated within type, annotation order kept.
        let mut gold: Vec<(String, EntityType)> = Vec::new();
        for ann in dataset.annotations_for(&doc.doc_id) {
            let entry = (normalize_entity(&ann.surface), ann.entity_type);
            if !gold.contains(&entry) {
                gold.push(entry);
            }
        }

        let alignment: Alignment = align(&preds, &gold);
        merge_counts(&mut totals, &classify(&alignment, inquiry_type));

        let diag = DocDiagnostics {
            doc_id: &doc.doc_id,
            aligned: alignment
                .aligned
                .iter()
                .map(|pair| AlignedDiagnostic {
                    pred: pair.pred_surface.clone(),
                    gold: pair.gold_surface.clone(),
                    gold_type: pair.gold_type,
                    overlap: pair.overlap,
                    category: categorize_pair(pair).as_str(),
                })
                .collect(),
            spurious: alignment
                .unmatched_pred
                .iter()
                .map(|(s, _)| s.clone())
                .collect(),
            missed: alignment
                .unmatched_gold
                .iter()
                .filter(|(_, t)| *t == inquiry_type)
                .map(|(s, _)| s.clone())
                .collect(),
        };
        diagnostics.push(serde_json::to_value(diag).map_err(std::io::Error::other)?);
    }

    Ok((
        ErrorDistribution::from_counts(inquiry_type, totals),
        diagnostics,
    ))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExperimentError> {
    let mut data = serde_json::to_vec_pretty(value).map_err(std::io::Error::other)?;
    data.push(b'\n');
    std::fs::write(path, data)?;
    Ok(())
}

fn write_jsonl<T: Serialize>(
    path: &Path,
    rows: impl Iterator<Item = T>,
) -> Result<(), ExperimentError> {
    use std::io::Write;
    let mut out = std::fs::File::create(path)?;
    for row in rows {
        let line = serde_json::to_string(&row).map_err(std::io::Error::other)?;
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn write_score_csv(path: &Path, report: &ScoreReport) -> Result<(), ExperimentError> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_io)?;
    writer
        .write_record([
            "entity_type",
            "tp",
            "pred_total",
            "gold_total",
            "precision",
            "recall",
            "f1",
        ])
        .map_err(csv_io)?;
    writer
        .write_record([
            report.entity_type.as_str().to_string(),
            report.tp.to_string(),
            report.pred_total.to_string(),
            report.gold_total.to_string(),
            format!("{:.6}", report.precision),
            format!("{:.6}", report.recall),
            format!("{:.6}", report.f1),
        ])
        .map_err(csv_io)?;
    writer.flush()?;
    Ok(())
}

fn write_errors_csv(path: &Path, dist: &ErrorDistribution) -> Result<(), ExperimentError> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_io)?;
    writer
        .write_record(["entity_type", "category", "count", "proportion"])
        .map_err(csv_io)?;
    for category in crate::eval::ErrorCategory::ALL {
        writer
            .write_record([
                dist.entity_type.as_str().to_string(),
                category.as_str().to_string(),
                dist.count(category).to_string(),
                format!("{:.6}", dist.proportions.get(&category).copied().unwrap_or(0.0)),
            ])
            .map_err(csv_io)?;
    }
    writer.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> ExperimentError {
    ExperimentError::Io(std::io::Error::other(e))
}

/// One consolidated sweep row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: String,
    pub k: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub avg_input_tokens: f64,
    pub cost_cents: f64,
}

#[derive(Debug, Default)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub failures: Vec<(String, usize, String)>,
}

/// Runs one experiment per (method, k) grid cell against shared caches and
/// consolidates the scores. With `continue_on_error`, failed cells are
/// reported and skipped instead of aborting the sweep.
pub fn sweep(
    base: &ExperimentConfig,
    k_grid: &[usize],
    methods: &[(SelectionMethod, Option<usize>)],
    continue_on_error: bool,
) -> Result<SweepOutcome, ExperimentError> {
    let mut outcome = SweepOutcome::default();
    for (method, c) in methods {
        for &k in k_grid {
            let mut config = base.clone();
            config.selection.method = *method;
            config.selection.c = *c;
            config.selection.k = k;
            let label = method.label(*c);
            config.run_label = Some(format!("{label}-k{k:02}"));

            match run_experiment(&config) {
                Ok(output) => outcome.rows.push(SweepRow {
                    method: label,
                    k,
                    precision: output.score.precision,
                    recall: output.score.recall,
                    f1: output.score.f1,
                    avg_input_tokens: output.cost.avg_input_tokens,
                    cost_cents: output.cost.cost_cents_per_query,
                }),
                Err(e) if continue_on_error => {
                    log::error!("sweep cell ({label}, k={k}) failed: {e}");
                    outcome.failures.push((label, k, e.to_string()));
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(outcome)
}

pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<(), ExperimentError> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_io)?;
    writer
        .write_record([
            "method",
            "k",
            "precision",
            "recall",
            "f1",
            "avg_input_tokens",
            "cost_cents",
        ])
        .map_err(csv_io)?;
    for row in rows {
        writer
            .write_record([
                row.method.clone(),
                row.k.to_string(),
                format!("{:.6}", row.precision),
                format!("{:.6}", row.recall),
                format!("{:.6}", row.f1),
                format!("{:.6}", row.avg_input_tokens),
                format!("{:.6}", row.cost_cents),
            ])
            .map_err(csv_io)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>, ExperimentError> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_io)?;
    let mut rows = Vec::new();
    for record in reader.deserialize() {
        let row: SweepRow = record.map_err(csv_io)?;
        rows.push(row);
    }
    Ok(rows)
}

/// Reads predictions back from a run directory for re-scoring.
pub fn load_predictions(path: &Path) -> Result<Vec<PredictionSet>, ExperimentError> {
    use std::io::BufRead;
    let file = std::fs::File::open(path)?;
    let mut predictions = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PredictionRecord =
            serde_json::from_str(&line).map_err(std::io::Error::other)?;
        predictions.push(PredictionSet {
            doc_id: record.doc_id,
            entity_type: record.entity_type,
            entities: record.entities.into_iter().collect(),
            raw_output: String::new(),
        });
    }
    Ok(predictions)
}

/// Raw outputs indexed by document, for taxonomy over stored runs.
pub fn load_raw_outputs(path: &Path) -> Result<Vec<(String, String)>, ExperimentError> {
    use std::io::BufRead;
    let file = std::fs::File::open(path)?;
    let mut rows = Vec::new();
    for line in std::io::BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line).map_err(std::io::Error::other)?;
        rows.push((
            value["doc_id"].as_str().unwrap_or_default().to_string(),
            value["raw"].as_str().unwrap_or_default().to_string(),
        ));
    }
    Ok(rows)
}
