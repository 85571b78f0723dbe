//! End-to-end checks of the `raredis` binary: subcommand plumbing and the
//! documented exit codes (0 ok, 2 config error, 3 incomplete replay cache).

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_raredis"))
}

fn core_fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

#[test]
fn ingest_reports_stats_and_writes_canonical() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("canonical.jsonl");
    let output = bin()
        .args(["ingest", "--dataset"])
        .arg(core_fixtures().join("raredis_mini"))
        .args(["--format", "brat_standoff", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success(), "{output:?}");
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("train\t3"), "stats table lists splits: {stdout}");
    assert!(out.exists());

    // The canonical file reloads through the same subcommand.
    let reload = bin()
        .args(["ingest", "--dataset"])
        .arg(&out)
        .args(["--format", "canonical_jsonl"])
        .output()
        .unwrap();
    assert!(reload.status.success());
}

#[test]
fn ingest_rag_reports_snippets() {
    let output = bin()
        .args(["ingest-rag", "--source"])
        .arg(core_fixtures().join("rag/orphanet_mini.xml"))
        .args(["--adapter", "orphanet_xml", "--tokenizer", "whitespace"])
        .output()
        .unwrap();
    assert!(output.status.success(), "{output:?}");
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("loaded 3 snippets"), "{stdout}");
}

#[test]
fn invalid_config_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("bad.toml");
    std::fs::write(&config, "[selection]\nmethod = \"knn\"\nk = 3\n").unwrap();
    let output = bin().args(["run", "--config"]).arg(&config).output().unwrap();
    assert_eq!(output.status.code(), Some(2), "{output:?}");
}

#[test]
fn replay_with_empty_cache_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = tmp.path().join("dataset.jsonl");
    std::fs::write(
        &dataset,
        concat!(
            "{\"id\":\"tr\",\"split\":\"train\",\"text\":\"A training doc.\",\"annotations\":[]}\n",
            "{\"id\":\"va\",\"split\":\"val\",\"text\":\"A val doc.\",\"annotations\":[]}\n",
            "{\"id\":\"te\",\"split\":\"test\",\"text\":\"A test doc.\",\"annotations\":[]}\n",
        ),
    )
    .unwrap();
    let config = tmp.path().join("config.toml");
    std::fs::write(
        &config,
        format!(
            "mode = \"replay\"\n\
             [selection]\nmethod = \"knn\"\nk = 0\n\
             [paths]\ndataset = {dataset:?}\ndataset_format = \"canonical_jsonl\"\n\
             cache = {cache:?}\noutput = {output:?}\n",
            dataset = dataset,
            cache = tmp.path().join("cache"),
            output = tmp.path().join("runs"),
        ),
    )
    .unwrap();
    let output = bin().args(["run", "--config"]).arg(&config).output().unwrap();
    assert_eq!(output.status.code(), Some(3), "{output:?}");
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("cache incomplete"), "{stderr}");
}

#[test]
fn live_mode_without_transport_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    let dataset = tmp.path().join("dataset.jsonl");
    std::fs::write(
        &dataset,
        concat!(
            "{\"id\":\"tr\",\"split\":\"train\",\"text\":\"A training doc.\",\"annotations\":[]}\n",
            "{\"id\":\"te\",\"split\":\"test\",\"text\":\"A test doc.\",\"annotations\":[]}\n",
        ),
    )
    .unwrap();
    let config = tmp.path().join("config.toml");
    std::fs::write(
        &config,
        format!(
            "mode = \"live\"\n\
             [selection]\nmethod = \"random\"\nk = 0\n\
             [paths]\ndataset = {dataset:?}\ndataset_format = \"canonical_jsonl\"\n\
             cache = {cache:?}\noutput = {output:?}\n",
            dataset = dataset,
            cache = tmp.path().join("cache"),
            output = tmp.path().join("runs"),
        ),
    )
    .unwrap();
    let output = bin()
        .args(["run", "--config"])
        .arg(&config)
        .env_remove("LLM_BASE_URL")
        .env_remove("LLM_API_KEY")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(4), "{output:?}");
}

#[test]
fn export_finetune_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let canonical = tmp.path().join("canonical.jsonl");
    let ingest = bin()
        .args(["ingest", "--dataset"])
        .arg(core_fixtures().join("raredis_mini"))
        .args(["--format", "brat_standoff", "--out"])
        .arg(&canonical)
        .output()
        .unwrap();
    assert!(ingest.status.success());

    let config = tmp.path().join("config.toml");
    std::fs::write(
        &config,
        format!(
            "entity_type = \"sign\"\ntokenizer_id = \"whitespace\"\n\
             [paths]\ndataset = {canonical:?}\ndataset_format = \"canonical_jsonl\"\n"
        ),
    )
    .unwrap();
    let out_dir = tmp.path().join("export");
    let output = bin()
        .args(["export-finetune", "--config"])
        .arg(&config)
        .arg("--out-dir")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(output.status.success(), "{output:?}");
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("wrote 3 train records"), "{stdout}");
    assert!(out_dir.join("finetune_sign.train.jsonl").exists());
    assert!(out_dir.join("finetune_sign.val.jsonl").exists());
}

#[test]
fn fit_cost_reports_exponential() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("sweep.csv");
    let mut rows = String::from("method,k,precision,recall,f1,avg_input_tokens,cost_cents\n");
    for (k, cost, f1) in [
        (1, 0.30, 0.720),
        (2, 0.42, 0.740),
        (4, 0.64, 0.755),
        (8, 1.09, 0.7617),
        (16, 1.99, 0.7629),
    ] {
        rows.push_str(&format!("inquiry_knn,{k},0.0,0.0,{f1},0.0,{cost}\n"));
    }
    std::fs::write(&csv, rows).unwrap();
    let out = tmp.path().join("fit.csv");
    let output = bin()
        .args(["fit-cost", "--sweep-csv"])
        .arg(&csv)
        .args(["--method", "inquiry_knn", "--entity-type", "rare_disease", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success(), "{output:?}");
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("exponential"), "{stdout}");
    let report = std::fs::read_to_string(&out).unwrap();
    assert!(report.starts_with("entity_type,model,"), "{report}");
}
