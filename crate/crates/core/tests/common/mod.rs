//! Shared fixture machinery for the integration suites: a small clinical
//! corpus with hand-authored gold annotations, deterministic pseudo
//! embeddings, and cache seeding that mirrors the runner's own planning.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use raredis_core::corpus::{load_raredis, Dataset, DatasetFormat, EntityType, Split};
use raredis_core::embedding::{text_hash, Embedder, EmbeddingCache, EmbeddingIndex};
use raredis_core::experiment::{
    EmbeddingSettings, ExperimentConfig, PathsConfig, SelectionConfig, SelectionMethod,
};
use raredis_core::gateway::{CompletionRequest, Gateway, Mode};
use raredis_core::prompt::{assemble, PromptSpec, PromptText};
use raredis_core::selection::{ids, materialize_examples, select_knn};
use raredis_core::tokenizer::Tokenizer;

pub type DocSpec = (&'static str, &'static str, &'static [(&'static str, EntityType)]);

pub const EMBED_MODEL: &str = "test-embed-8";
pub const EMBED_DIM: usize = 8;

/// Train documents: compact but annotated, usable as demonstrations.
pub const TRAIN_DOCS: [DocSpec; 3] = [
    (
        "train_myhre",
        "Myhre syndrome is a rare connective tissue disorder caused by SMAD4 variants. \
         Affected individuals develop short stature, muscle hypertrophy, and progressive \
         joint stiffness, and many report persistent fatigue during daily activities.",
        &[
            ("Myhre syndrome", EntityType::RareDisease),
            ("short stature", EntityType::Sign),
            ("muscle hypertrophy", EntityType::Sign),
            ("joint stiffness", EntityType::Sign),
            ("fatigue", EntityType::Symptom),
        ],
    ),
    (
        "train_paf",
        "Pure autonomic failure (PAF) is a rare degenerative disorder of the autonomic \
         nervous system. The most prominent signs are orthostatic hypotension, a sudden \
         drastic drop in blood pressure upon standing, and reduced sweating; patients \
         often describe dizziness when rising.",
        &[
            ("Pure autonomic failure", EntityType::RareDisease),
            ("PAF", EntityType::RareDisease),
            ("orthostatic hypotension", EntityType::Sign),
            ("sudden drastic drop in blood pressure", EntityType::Sign),
            ("reduced sweating", EntityType::Sign),
            ("dizziness", EntityType::Symptom),
        ],
    ),
    (
        "train_gaucher",
        "Gaucher disease is a lysosomal storage disorder resulting from glucocerebrosidase \
         deficiency. Common findings include hepatosplenomegaly, anemia, and bone pain, \
         and the condition is sometimes confused with Fabry disease in early stages.",
        &[
            ("Gaucher disease", EntityType::RareDisease),
            ("hepatosplenomegaly", EntityType::Sign),
            ("anemia", EntityType::Sign),
            ("bone pain", EntityType::Symptom),
            ("Fabry disease", EntityType::RareDisease),
        ],
    ),
];

/// Test documents sized so a full zero-shot prompt averages near the
/// 380-token anchor under the vendored tokenizer.
pub const TEST_DOCS: [DocSpec; 5] = [
    (
        "test_t1",
        "Wilson disease is a rare inherited disorder of copper metabolism in which dietary \
         copper accumulates in the liver, brain, and cornea. The condition typically presents \
         between the ages of five and thirty-five, and early recognition is essential because \
         effective chelation therapy exists. Hepatic involvement ranges from asymptomatic \
         elevation of transaminases to fulminant liver failure with coagulopathy and jaundice. \
         Neurologic disease develops insidiously, with dysarthria, clumsiness of the hands, \
         and a characteristic wing-beating tremor that worsens with sustained posture. \
         Ophthalmologic examination frequently reveals Kayser-Fleischer rings, golden-brown \
         deposits of copper at the periphery of the cornea that are best seen on slit-lamp \
         examination. Laboratory evaluation shows a low serum ceruloplasmin together with \
         increased twenty-four hour urinary copper excretion. Untreated patients progress to \
         cirrhosis, and some develop hemolytic anemia during acute copper release. Lifelong \
         therapy with chelating agents or zinc salts stabilizes most patients, and liver \
         transplantation is curative in fulminant cases.",
        &[
            ("Wilson disease", EntityType::RareDisease),
            ("Kayser-Fleischer rings", EntityType::Sign),
            ("jaundice", EntityType::Sign),
            ("wing-beating tremor", EntityType::Sign),
            ("cirrhosis", EntityType::Disease),
            ("hemolytic anemia", EntityType::Disease),
        ],
    ),
    (
        "test_t2",
        "Fabry disease is an X-linked lysosomal storage disorder caused by deficient activity \
         of alpha-galactosidase A and progressive accumulation of globotriaosylceramide in \
         vascular endothelium. Classic presentations begin in childhood with episodes of \
         burning acroparesthesia of the hands and feet that are triggered by fever, exercise, \
         or heat exposure. Clusters of angiokeratomas appear over the bathing-trunk \
         distribution, and corneal opacity in a whorl-like pattern is visible on slit-lamp \
         examination without affecting vision. Hypohidrosis impairs thermoregulation and \
         limits exercise tolerance in many affected males. With advancing age, untreated \
         patients develop proteinuria with progressive renal insufficiency, left ventricular \
         hypertrophy, and an elevated risk of early stroke. Female heterozygotes display a \
         spectrum from asymptomatic carriage to disease as severe as in males owing to random \
         X-inactivation. Enzyme replacement therapy and oral chaperone therapy slow organ \
         damage when started early, which makes timely biochemical and genetic confirmation \
         of the diagnosis important. Niemann-Pick disease can mimic some visceral findings.",
        &[
            ("Fabry disease", EntityType::RareDisease),
            ("Gaucher disease", EntityType::RareDisease),
            ("angiokeratomas", EntityType::Sign),
            ("corneal opacity", EntityType::Sign),
            ("hypohidrosis", EntityType::Sign),
            ("burning acroparesthesia", EntityType::Symptom),
            ("proteinuria", EntityType::Sign),
        ],
    ),
    (
        "test_t3",
        "Myhre syndrome is a rare connective tissue disorder associated with gain-of-function \
         variants in SMAD4 that alter transforming growth factor beta signaling. Affected \
         individuals are usually short for their family background and develop a compact, \
         muscular build with thickened skin that can feel stiff on examination. Progressive \
         joint stiffness limits the range of motion of the large joints and may interfere \
         with writing, dressing, and climbing stairs. Conductive or mixed hearing loss is \
         common and often requires amplification during school years. Some patients develop \
         laryngotracheal stenosis, a narrowing of the airway that becomes apparent as \
         exertional stridor and can be aggravated by intubation or airway surgery. \
         Cardiovascular involvement includes hypertension, aortic stenosis, and pericardial \
         effusion, and several individuals have required pericardiectomy for constrictive \
         physiology. Gastrointestinal strictures and keloid-like scarring after procedures \
         reflect the same fibroproliferative tendency, so elective instrumentation is \
         approached cautiously in these patients.",
        &[
            ("Myhre syndrome", EntityType::RareDisease),
            ("joint stiffness", EntityType::Sign),
            ("hearing loss", EntityType::Sign),
            ("laryngotracheal stenosis", EntityType::Sign),
            ("hypertension", EntityType::Disease),
            ("aortic stenosis", EntityType::Disease),
        ],
    ),
    (
        "test_t4",
        "Routine follow-up of a healthy adult volunteer enrolled in the observation arm of a \
         longitudinal cohort study. The participant reports no complaints and maintains an \
         active lifestyle with regular aerobic exercise three times per week. Physical \
         examination is unremarkable, with normal vital signs, clear lung fields, a regular \
         cardiac rhythm without murmurs, and no organomegaly on abdominal palpation. \
         Neurologic screening shows intact cranial nerves, symmetric reflexes, and normal \
         gait and coordination. Laboratory studies, including a complete blood count, \
         comprehensive metabolic panel, thyroid function tests, and urinalysis, are all \
         within reference ranges for age and sex. Imaging performed at enrollment showed no \
         structural abnormalities, and repeat studies were not indicated at this visit. The \
         participant was counseled on routine preventive care, sun protection, and \
         age-appropriate cancer screening, and will return for the next scheduled assessment \
         in twelve months under the study protocol without any interim monitoring required.",
        &[],
    ),
    (
        "test_t5",
        "Pure autonomic failure is a rare neurodegenerative synucleinopathy restricted to the \
         peripheral autonomic nervous system, and PAF remains a diagnosis of exclusion in \
         early disease. Patients typically present in mid to late adulthood with orthostatic \
         hypotension manifesting as lightheadedness, dimming of vision, and syncope when \
         standing quickly or after large meals. A sudden drastic drop in blood pressure upon \
         standing, in the absence of a compensatory rise in heart rate, is the hallmark \
         finding on tilt-table testing. Thermoregulatory sweat testing demonstrates widespread \
         anhidrosis, and affected individuals often report heat intolerance during warm \
         weather. Additional autonomic features include constipation, urinary retention or \
         incontinence, and erectile dysfunction in men. Supine hypertension complicates \
         treatment because pressor agents that relieve daytime symptoms may aggravate \
         nocturnal blood pressure elevation. Management combines liberal salt and fluid \
         intake, compression garments, head-up sleeping, and careful titration of midodrine \
         or droxidopa, with periodic reassessment for evolving central features.",
        &[
            ("Pure autonomic failure", EntityType::RareDisease),
            ("PAF", EntityType::RareDisease),
            ("orthostatic hypotension", EntityType::Sign),
            ("anhidrosis", EntityType::Sign),
            ("supine hypertension", EntityType::Disease),
            ("heat intolerance", EntityType::Symptom),
            ("syncope", EntityType::Sign),
        ],
    ),
];

/// Hand-authored model responses for the rare-disease replay fixture, and the
/// score they imply (worked out by hand, frozen in the acceptance test):
///
/// - test_t1: gold {wilson disease}, pred {wilson disease}            -> tp 1/1/1
/// - test_t2: gold {fabry disease, gaucher disease},
///   pred {fabry disease, niemann-pick disease} -> tp 1/2/2
/// - test_t3: gold {myhre syndrome}, pred {}                          -> tp 0/0/1
/// - test_t4: gold {}, pred {}                                        -> tp 0/0/0
/// - test_t5: gold {pure autonomic failure, paf},
///   pred {paf, pure autonomic failure, orthostatic hypotension} -> tp 2/3/2
///
/// Totals: tp 4, pred 6, gold 6 -> P = R = F1 = 2/3.
pub const REPLAY_RESPONSES: [(&str, &str); 5] = [
    ("test_t1", "Wilson disease."),
    ("test_t2", "Fabry disease, Niemann-Pick disease."),
    ("test_t3", "none"),
    ("test_t4", "none"),
    ("test_t5", "PAF, pure autonomic failure, orthostatic hypotension."),
];

fn doc_record(id: &str, split: &str, text: &str, anns: &[(&str, EntityType)]) -> serde_json::Value {
    serde_json::json!({
        "id": id,
        "split": split,
        "text": text,
        "annotations": anns
            .iter()
            .map(|(surface, entity_type)| {
                serde_json::json!({
                    "type": entity_type,
                    "surface": surface,
                    "start": null,
                    "end": null,
                })
            })
            .collect::<Vec<_>>(),
    })
}

/// Writes the fixture corpus as canonical JSONL and returns its path.
pub fn write_fixture_dataset(dir: &Path) -> PathBuf {
    let mut lines = Vec::new();
    for (id, text, anns) in TRAIN_DOCS {
        lines.push(doc_record(id, "train", text, anns).to_string());
    }
    lines.push(
        doc_record(
            "val_v1",
            "val",
            "Fanconi anemia is a rare inherited bone marrow failure syndrome with pallor \
             and frequent infections on examination.",
            &[
                ("Fanconi anemia", EntityType::RareDisease),
                ("pallor", EntityType::Sign),
                ("frequent infections", EntityType::Sign),
            ],
        )
        .to_string(),
    );
    for (id, text, anns) in TEST_DOCS {
        lines.push(doc_record(id, "test", text, anns).to_string());
    }
    let path = dir.join("fixture_dataset.jsonl");
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    path
}

/// Deterministic pseudo embedding derived from the text content.
pub fn pseudo_vector(text: &str, dim: usize) -> Vec<f64> {
    let hash = text_hash(text);
    let mut seed_bytes = [0u8; 8];
    seed_bytes.copy_from_slice(&hash.as_bytes()[..8]);
    let mut rng = ChaCha8Rng::seed_from_u64(u64::from_le_bytes(seed_bytes));
    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Seeds the embedding cache for every fixture document.
pub fn seed_embeddings(cache_root: &Path) {
    let cache = EmbeddingCache::new(cache_root);
    for (_, text, _) in TRAIN_DOCS.iter().chain(TEST_DOCS.iter()) {
        cache
            .write(
                EMBED_MODEL,
                &text_hash(text),
                text.len(),
                &pseudo_vector(text, EMBED_DIM),
            )
            .unwrap();
    }
}

/// Offline embedder over a seeded cache.
pub fn offline_embedder(cache_root: &Path) -> Embedder {
    Embedder::new(EmbeddingCache::new(cache_root), None).with_dimension(EMBED_MODEL, EMBED_DIM)
}

/// Replay config over the fixture corpus: Inquiry-KNN, k = 2, full prompt.
pub fn fixture_config(dataset: PathBuf, cache: PathBuf, output: PathBuf) -> ExperimentConfig {
    ExperimentConfig {
        entity_type: EntityType::RareDisease,
        model_id: "gpt-4o".into(),
        tokenizer_id: "o200k_base".into(),
        mode: Mode::Replay,
        seed: 42,
        selection: SelectionConfig {
            method: SelectionMethod::Knn,
            k: 2,
            c: None,
        },
        embedding: EmbeddingSettings {
            model_id: EMBED_MODEL.into(),
            dimension: Some(EMBED_DIM),
        },
        paths: PathsConfig {
            dataset,
            dataset_format: DatasetFormat::CanonicalJsonl,
            cache,
            output,
            ..PathsConfig::default()
        },
        ..ExperimentConfig::default()
    }
}

/// Rebuilds the exact prompt the runner will assemble for one test document
/// (Inquiry-KNN selection over the seeded cache) so responses can be cached
/// by request hash ahead of a replay run.
pub fn plan_fixture_prompt(
    dataset: &Dataset,
    embedder: &Embedder,
    config: &ExperimentConfig,
    doc_id: &str,
) -> PromptText {
    let train_items: Vec<(String, String)> = dataset
        .split_ids(Split::Train)
        .into_iter()
        .map(|id| {
            let text = dataset.document(&id).unwrap().text.clone();
            (id, text)
        })
        .collect();
    let train_index: EmbeddingIndex = embedder
        .build_index(&train_items, &config.embedding.model_id)
        .unwrap();

    let doc = dataset.document(doc_id).unwrap();
    let shots = if config.selection.k > 0 {
        let inquiry = embedder.embed(&doc.text, &config.embedding.model_id).unwrap();
        let ranked = select_knn(&inquiry, &train_index, config.selection.k).unwrap();
        materialize_examples(&ids(&ranked), dataset, config.entity_type).unwrap()
    } else {
        Vec::new()
    };

    let spec = PromptSpec {
        entity_type: config.entity_type,
        include_guidance: config.prompt.guidance,
        include_disambiguation: config.prompt.disambiguation,
        shots,
        snippets: Vec::new(),
        inquiry_text: doc.text.clone(),
    };
    let tokenizer = Tokenizer::by_id(&config.tokenizer_id).unwrap();
    assemble(&spec, &tokenizer).unwrap()
}

/// Caches the hand-authored responses under the hashes the runner will use.
pub fn seed_completions(config: &ExperimentConfig) {
    let dataset = load_raredis(&config.paths.dataset, config.paths.dataset_format).unwrap();
    let embedder = offline_embedder(&config.paths.cache);
    let gateway = Gateway::new(&config.paths.cache, None, Mode::Replay);
    for (doc_id, response) in REPLAY_RESPONSES {
        let prompt = plan_fixture_prompt(&dataset, &embedder, config, doc_id);
        let request = CompletionRequest::new(
            &config.model_id,
            prompt,
            config.gateway.temperature,
            config.gateway.max_output_tokens,
        );
        gateway.seed_cache(&request, response).unwrap();
    }
}

/// Byte-compare two directory trees (same relative paths, same contents).
pub fn assert_trees_identical(a: &Path, b: &Path) {
    let list = |root: &Path| -> Vec<PathBuf> {
        let mut files = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(dir) = stack.pop() {
            for entry in std::fs::read_dir(&dir).unwrap() {
                let path = entry.unwrap().path();
                if path.is_dir() {
                    stack.push(path);
                } else {
                    files.push(path.strip_prefix(root).unwrap().to_path_buf());
                }
            }
        }
        files.sort();
        files
    };
    let files_a = list(a);
    let files_b = list(b);
    assert_eq!(files_a, files_b, "file sets differ between {a:?} and {b:?}");
    for rel in files_a {
        let bytes_a = std::fs::read(a.join(&rel)).unwrap();
        let bytes_b = std::fs::read(b.join(&rel)).unwrap();
        assert_eq!(bytes_a, bytes_b, "file {rel:?} differs");
    }
}

pub fn normalized_set(items: &[&str]) -> BTreeSet<String> {
    items
        .iter()
        .map(|s| raredis_core::corpus::normalize_entity(s))
        .collect()
}

/// Synthetic grid corpus for sweep tests: `n_train` annotated training notes
/// and `n_test` inquiry notes, all with distinct text.
pub fn write_grid_dataset(dir: &Path, n_train: usize, n_test: usize) -> PathBuf {
    let mut lines = Vec::new();
    for i in 0..n_train {
        let condition = format!("condition alpha-{i}");
        let text = format!(
            "Synthetic training note {i}: the patient was diagnosed with {condition} after \
             presenting with finding number {i}."
        );
        let anns = [(condition.as_str(), EntityType::RareDisease)];
        lines.push(doc_record(&format!("grid_train_{i:03}"), "train", &text, &anns).to_string());
    }
    lines.push(
        doc_record(
            "grid_val_0",
            "val",
            "Synthetic validation note used only for split bookkeeping.",
            &[],
        )
        .to_string(),
    );
    for i in 0..n_test {
        let text = format!(
            "Synthetic inquiry note {i}: an undiagnosed patient with overlapping features \
             of several rare conditions, case number {i}."
        );
        lines.push(doc_record(&format!("grid_test_{i:03}"), "test", &text, &[]).to_string());
    }
    let path = dir.join("grid_dataset.jsonl");
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    path
}

/// Seeds pseudo embeddings for every grid document.
pub fn seed_grid_embeddings(cache_root: &Path, dataset_path: &Path) {
    let dataset = load_raredis(dataset_path, DatasetFormat::CanonicalJsonl).unwrap();
    let cache = EmbeddingCache::new(cache_root);
    for doc in dataset.documents() {
        cache
            .write(
                EMBED_MODEL,
                &text_hash(&doc.text),
                doc.text.len(),
                &pseudo_vector(&doc.text, EMBED_DIM),
            )
            .unwrap();
    }
}

/// Minimal HTTP stub for an OpenAI-compatible chat-completions endpoint.
/// Serves the same completion text to every request until the process exits.
pub fn spawn_completion_stub(content: &'static str) -> std::net::SocketAddr {
    use std::io::{Read, Write};
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut buf = vec![0u8; 1 << 20];
            let mut read_total = 0;
            loop {
                match stream.read(&mut buf[read_total..]) {
                    Ok(0) => break,
                    Ok(n) => read_total += n,
                    Err(_) => break,
                }
                let text = String::from_utf8_lossy(&buf[..read_total]);
                if let Some(header_end) = text.find("\r\n\r\n") {
                    let content_length = text
                        .lines()
                        .find(|l| l.to_ascii_lowercase().starts_with("content-length:"))
                        .and_then(|l| l.split(':').nth(1))
                        .and_then(|v| v.trim().parse::<usize>().ok())
                        .unwrap_or(0);
                    if read_total >= header_end + 4 + content_length {
                        break;
                    }
                }
            }
            let payload = serde_json::json!({
                "choices": [{ "message": { "role": "assistant", "content": content } }]
            })
            .to_string();
            let response = format!(
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                payload.len(),
                payload
            );
            let _ = stream.write_all(response.as_bytes());
        }
    });
    addr
}
