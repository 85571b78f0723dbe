//! `raredis` — reproducible experiments for prompt-based rare-disease NER.
//!
//! Exit codes: 0 success, 2 configuration error, 3 incomplete replay cache,
//! 4 provider/transport failure, 1 anything else.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use raredis_core::corpus::{
    self, load_raredis, normalize_entity, DatasetFormat, EntityType, Split,
};
use raredis_core::embedding::{Embedder, EmbeddingCache};
use raredis_core::eval::{
    align, classify, merge_counts, score, ErrorCounts, ErrorDistribution,
};
use raredis_core::experiment::{
    cost_points, fit_cost_curve, load_predictions, load_raw_outputs, run_experiment, sweep,
    write_fit_report, write_sweep_csv, ExperimentConfig, ExperimentError, SelectionMethod,
};
use raredis_core::gateway::{export_finetune_dataset, Mode};
use raredis_core::prompt::{PromptSpec, PromptTemplates};
use raredis_core::rag::{ingest_orphanet, save_canonical as save_rag_canonical, RagAdapter};
use raredis_core::tokenizer::Tokenizer;
use raredis_core::transport::Transport;

#[derive(Parser)]
#[command(name = "raredis", version, about = "Prompt-based rare-disease NER experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// Path to the declarative TOML config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override: entity type (rare_disease, disease, sign, symptom).
    #[arg(long)]
    entity_type: Option<String>,
    /// Override: selection method (random, knn, cluster_knn).
    #[arg(long)]
    method: Option<String>,
    /// Override: number of in-context examples.
    #[arg(long)]
    k: Option<usize>,
    /// Override: cluster count for cluster_knn.
    #[arg(long)]
    c: Option<usize>,
    /// Override: transport mode (live, record, replay).
    #[arg(long)]
    mode: Option<String>,
    /// Override: selection seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override: enable retrieval augmentation.
    #[arg(long)]
    rag: Option<bool>,
    /// Override: snippets per inquiry.
    #[arg(long)]
    rag_k: Option<usize>,
    /// Accept K values outside the supported grid.
    #[arg(long)]
    allow_large_k: bool,
    /// Override: run directory label.
    #[arg(long)]
    run_label: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> anyhow::Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load_toml(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(et) = &self.entity_type {
            config.entity_type = EntityType::parse(et)
                .ok_or_else(|| anyhow::anyhow!("unknown entity type: {et}"))?;
        }
        if let Some(method) = &self.method {
            config.selection.method = match method.as_str() {
                "random" => SelectionMethod::Random,
                "knn" => SelectionMethod::Knn,
                "cluster_knn" => SelectionMethod::ClusterKnn,
                other => anyhow::bail!("unknown selection method: {other}"),
            };
        }
        if let Some(k) = self.k {
            config.selection.k = k;
        }
        if let Some(c) = self.c {
            config.selection.c = Some(c);
        }
        if let Some(mode) = &self.mode {
            config.mode = match mode.as_str() {
                "live" => Mode::Live,
                "record" => Mode::Record,
                "replay" => Mode::Replay,
                other => anyhow::bail!("unknown mode: {other}"),
            };
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(rag) = self.rag {
            config.rag.enabled = rag;
        }
        if let Some(rag_k) = self.rag_k {
            config.rag.k_snippets = rag_k;
        }
        if self.allow_large_k {
            config.rag.allow_large_k = true;
        }
        if let Some(label) = &self.run_label {
            config.run_label = Some(label.clone());
        }
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Load a corpus and write it in canonical JSONL, with split statistics.
    Ingest {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_parser = parse_dataset_format, default_value = "brat_standoff")]
        format: DatasetFormat,
        /// Canonical JSONL output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Warm the embedding cache for the configured dataset splits.
    Embed {
        #[command(flatten)]
        config: ConfigArgs,
        /// Splits to embed (train, val, test), comma separated.
        #[arg(long, default_value = "train,test")]
        splits: String,
    },
    /// Ingest a knowledge corpus and write its canonical JSONL form.
    IngestRag {
        #[arg(long)]
        source: PathBuf,
        #[arg(long, value_parser = parse_rag_adapter, default_value = "orphanet_xml")]
        adapter: RagAdapter,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "o200k_base")]
        tokenizer: String,
    },
    /// Execute one experiment run.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run a (method x k) grid and consolidate scores into one CSV.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated k grid, e.g. "0,1,2,4,8".
        #[arg(long, default_value = "0,1,2,4,6,8,10,12,14,16")]
        k_grid: String,
        /// Comma-separated methods: random, knn, cluster_knn_32, cluster_knn_64.
        #[arg(long, default_value = "random,knn,cluster_knn_32,cluster_knn_64")]
        methods: String,
        #[arg(long)]
        out: PathBuf,
        /// Keep sweeping when individual cells fail.
        #[arg(long)]
        continue_on_error: bool,
    },
    /// Score stored predictions against a dataset.
    Score {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_parser = parse_dataset_format, default_value = "canonical_jsonl")]
        format: DatasetFormat,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        entity_type: String,
    },
    /// Error-taxonomy report over stored raw outputs.
    Errors {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_parser = parse_dataset_format, default_value = "canonical_jsonl")]
        format: DatasetFormat,
        #[arg(long)]
        raw_outputs: PathBuf,
        #[arg(long)]
        entity_type: String,
    },
    /// Fit cost-performance curves from a consolidated sweep CSV.
    FitCost {
        #[arg(long)]
        sweep_csv: PathBuf,
        /// Method label to fit (e.g. inquiry_knn).
        #[arg(long, default_value = "inquiry_knn")]
        method: String,
        #[arg(long)]
        entity_type: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export fine-tuning JSONL for the train and validation splits.
    ExportFinetune {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn parse_dataset_format(s: &str) -> Result<DatasetFormat, String> {
    match s {
        "brat_standoff" => Ok(DatasetFormat::BratStandoff),
        "canonical_jsonl" => Ok(DatasetFormat::CanonicalJsonl),
        other => Err(format!("unknown dataset format: {other}")),
    }
}

fn parse_rag_adapter(s: &str) -> Result<RagAdapter, String> {
    match s {
        "orphanet_xml" => Ok(RagAdapter::OrphanetXml),
        "name_definition_csv" => Ok(RagAdapter::NameDefinitionCsv),
        "canonical_jsonl" => Ok(RagAdapter::CanonicalJsonl),
        other => Err(format!("unknown adapter: {other}")),
    }
}

fn parse_entity(s: &str) -> anyhow::Result<EntityType> {
    EntityType::parse(s).ok_or_else(|| anyhow::anyhow!("unknown entity type: {s}"))
}

fn experiment_exit_code(err: &ExperimentError) -> u8 {
    match err {
        ExperimentError::Config(_) => 2,
        ExperimentError::CacheIncomplete(_) => 3,
        ExperimentError::Gateway(_) | ExperimentError::Transport(_) => 4,
        ExperimentError::Document { source, .. } => experiment_exit_code(source),
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err
                .downcast_ref::<ExperimentError>()
                .map(experiment_exit_code)
                .or_else(|| {
                    err.downcast_ref::<raredis_core::experiment::ConfigError>()
                        .map(|_| 2)
                })
                .unwrap_or(1);
            ExitCode::from(code)
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Ingest { dataset, format, out } => {
            let ds = load_raredis(&dataset, format)?;
            let stats = corpus::split_stats(&ds);
            println!("{stats}");
            if let Some(out) = out {
                corpus::save_canonical(&ds, &out)?;
                println!("\nwrote canonical JSONL to {}", out.display());
            }
            Ok(())
        }
        Command::Embed { config, splits } => {
            let config = config.resolve()?;
            config.validate().map_err(ExperimentError::Config)?;
            let ds = load_raredis(&config.paths.dataset, config.paths.dataset_format)?;
            let mut embedder = Embedder::new(
                EmbeddingCache::new(&config.paths.cache),
                Transport::from_env().ok(),
            );
            if let Some(dim) = config.embedding.dimension {
                embedder = embedder.with_dimension(&config.embedding.model_id, dim);
            }
            let mut total = 0usize;
            for split in splits.split(',') {
                let split = match split.trim() {
                    "train" => Split::Train,
                    "val" | "dev" => Split::Val,
                    "test" => Split::Test,
                    other => anyhow::bail!("unknown split: {other}"),
                };
                for id in ds.split_ids(split) {
                    let doc = ds.document(&id).expect("listed id resolves");
                    embedder.embed(&doc.text, &config.embedding.model_id)?;
                    total += 1;
                }
            }
            println!("embedded {total} documents into {}", config.paths.cache.display());
            Ok(())
        }
        Command::IngestRag {
            source,
            adapter,
            out,
            tokenizer,
        } => {
            let tokenizer = Tokenizer::by_id(&tokenizer)?;
            let (corpus, report) = ingest_orphanet(&source, adapter, &tokenizer)?;
            let (min, max, median) = raredis_core::rag::token_length_stats(&corpus);
            println!(
                "loaded {} snippets ({} dropped empty); token lengths [{min}, {max}], median {median}",
                report.loaded, report.dropped_empty
            );
            if let Some(out) = out {
                save_rag_canonical(&corpus, &out)?;
                println!("wrote canonical corpus to {}", out.display());
            }
            Ok(())
        }
        Command::Run { config } => {
            let config = config.resolve()?;
            let output = run_experiment(&config)?;
            println!(
                "run complete: {}\n{}",
                output.run_dir.display(),
                format_score(&output)
            );
            Ok(())
        }
        Command::Sweep {
            config,
            k_grid,
            methods,
            out,
            continue_on_error,
        } => {
            let base = config.resolve()?;
            let k_grid: Vec<usize> = k_grid
                .split(',')
                .map(|s| s.trim().parse::<usize>())
                .collect::<Result<_, _>>()?;
            let methods = parse_methods(&methods)?;
            let outcome = sweep(&base, &k_grid, &methods, continue_on_error)?;
            write_sweep_csv(&outcome.rows, &out)?;
            println!("wrote {} rows to {}", outcome.rows.len(), out.display());
            for (label, k, message) in &outcome.failures {
                eprintln!("cell ({label}, k={k}) failed: {message}");
            }
            Ok(())
        }
        Command::Score {
            dataset,
            format,
            predictions,
            entity_type,
        } => {
            let ds = load_raredis(&dataset, format)?;
            let entity_type = parse_entity(&entity_type)?;
            let preds = load_predictions(&predictions)?;
            let report = score(&preds, &ds, entity_type)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
        Command::Errors {
            dataset,
            format,
            raw_outputs,
            entity_type,
        } => {
            let ds = load_raredis(&dataset, format)?;
            let entity_type = parse_entity(&entity_type)?;
            let rows = load_raw_outputs(&raw_outputs)?;
            let mut totals = ErrorCounts::new();
            for (doc_id, raw) in rows {
                let preds: Vec<(String, EntityType)> =
                    raredis_core::gateway::parse_output_ordered(&raw)
                        .into_iter()
                        .map(|s| (s, entity_type))
                        .collect();
                let mut gold: Vec<(String, EntityType)> = Vec::new();
                for ann in ds.annotations_for(&doc_id) {
                    let entry = (normalize_entity(&ann.surface), ann.entity_type);
                    if !gold.contains(&entry) {
                        gold.push(entry);
                    }
                }
                merge_counts(&mut totals, &classify(&align(&preds, &gold), entity_type));
            }
            let distribution = ErrorDistribution::from_counts(entity_type, totals);
            println!("{}", serde_json::to_string_pretty(&distribution)?);
            Ok(())
        }
        Command::FitCost {
            sweep_csv,
            method,
            entity_type,
            out,
        } => {
            let entity_type = parse_entity(&entity_type)?;
            let rows = raredis_core::experiment::read_sweep_csv(&sweep_csv)?;
            let points = cost_points(&rows, &method);
            let (report, _curve) = fit_cost_curve(entity_type, &points)?;
            write_fit_report(std::slice::from_ref(&report), &out)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
        Command::ExportFinetune { config, out_dir } => {
            let config = config.resolve()?;
            let ds = load_raredis(&config.paths.dataset, config.paths.dataset_format)?;
            let tokenizer = Tokenizer::by_id(&config.tokenizer_id)?;
            let templates = match &config.paths.prompt_templates {
                Some(dir) => PromptTemplates::with_overrides(dir)?,
                None => PromptTemplates::builtin().clone(),
            };
            let template_spec = PromptSpec {
                entity_type: config.entity_type,
                include_guidance: config.prompt.guidance,
                include_disambiguation: config.prompt.disambiguation,
                shots: vec![],
                snippets: vec![],
                inquiry_text: "placeholder".into(),
            };
            let export = export_finetune_dataset(
                &ds,
                config.entity_type,
                &template_spec,
                &templates,
                &tokenizer,
                &out_dir,
            )?;
            println!(
                "wrote {} train records to {}\nwrote {} val records to {}",
                export.train_records,
                export.train_path.display(),
                export.val_records,
                export.val_path.display()
            );
            Ok(())
        }
    }
}

fn parse_methods(spec: &str) -> anyhow::Result<Vec<(SelectionMethod, Option<usize>)>> {
    let mut methods = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        let parsed = match part {
            "random" => (SelectionMethod::Random, None),
            "knn" => (SelectionMethod::Knn, None),
            other => match other.strip_prefix("cluster_knn_") {
                Some(c) => (SelectionMethod::ClusterKnn, Some(c.parse::<usize>()?)),
                None => anyhow::bail!("unknown method: {other}"),
            },
        };
        methods.push(parsed);
    }
    Ok(methods)
}

fn format_score(output: &raredis_core::experiment::RunOutput) -> String {
    format!(
        "entity={} P={:.3} R={:.3} F1={:.3} avg_tokens={:.1} cost={:.4}c",
        output.score.entity_type,
        output.score.precision,
        output.score.recall,
        output.score.f1,
        output.cost.avg_input_tokens,
        output.cost.cost_cents_per_query
    )
}
