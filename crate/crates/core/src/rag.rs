//! External knowledge corpus for retrieval-augmented prompting: rare-disease
//! names paired with definition snippets, embedded and searched by Euclidean
//! distance.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{distance, Embedder, EmbeddingError, EmbeddingIndex, EmbeddingVector};
use crate::tokenizer::Tokenizer;

#[derive(Debug, Error)]
pub enum RagError {
    #[error("malformed source at {0}")]
    MalformedSource(String),
    #[error("knowledge corpus is empty after ingestion")]
    EmptyCorpus,
    #[error("K = {k} exceeds corpus size {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("corpus has no embedding index; embed it first")]
    IndexMissing,
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One knowledge entry: a disease name and its definition snippet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeSnippet {
    pub disease_name: String,
    pub definition: String,
    pub token_length: usize,
}

/// The ingested corpus; `index` is populated by [`embed_corpus`].
#[derive(Debug, Clone)]
pub struct KnowledgeCorpus {
    pub snippets: Vec<KnowledgeSnippet>,
    pub index: Option<EmbeddingIndex>,
    pub provenance: String,
}

/// Source adapter for [`ingest_orphanet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RagAdapter {
    OrphanetXml,
    NameDefinitionCsv,
    CanonicalJsonl,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct IngestReport {
    pub loaded: usize,
    pub dropped_empty: usize,
}

/// Ingests (name, definition) pairs, dropping entries with empty definitions
/// and computing token lengths under the configured tokenizer.
pub fn ingest_orphanet(
    path: &Path,
    adapter: RagAdapter,
    tokenizer: &Tokenizer,
) -> Result<(KnowledgeCorpus, IngestReport), RagError> {
    let pairs = match adapter {
        RagAdapter::OrphanetXml => read_orphanet_xml(path)?,
        RagAdapter::NameDefinitionCsv => read_csv(path)?,
        RagAdapter::CanonicalJsonl => read_jsonl(path)?,
    };

    let mut report = IngestReport::default();
    let mut snippets = Vec::with_capacity(pairs.len());
    for (name, definition) in pairs {
        if definition.trim().is_empty() {
            report.dropped_empty += 1;
            continue;
        }
        snippets.push(KnowledgeSnippet {
            token_length: tokenizer.count(&definition),
            disease_name: name,
            definition,
        });
    }
    report.loaded = snippets.len();
    if snippets.is_empty() {
        return Err(RagError::EmptyCorpus);
    }
    if report.dropped_empty > 0 {
        log::info!("dropped {} entries with empty definitions", report.dropped_empty);
    }

    Ok((
        KnowledgeCorpus {
            snippets,
            index: None,
            provenance: path.display().to_string(),
        },
        report,
    ))
}

/// Token-length summary over the corpus: (min, max, median). The median of an
/// even-sized corpus is the mean of the two central values.
pub fn token_length_stats(corpus: &KnowledgeCorpus) -> (usize, usize, f64) {
    let mut lengths: Vec<usize> = corpus.snippets.iter().map(|s| s.token_length).collect();
    lengths.sort_unstable();
    let n = lengths.len();
    let median = if n % 2 == 1 {
        lengths[n / 2] as f64
    } else {
        (lengths[n / 2 - 1] + lengths[n / 2]) as f64 / 2.0
    };
    (lengths[0], lengths[n - 1], median)
}

/// Writes the canonical JSONL form: one `{"name", "definition"}` per line.
pub fn save_canonical(corpus: &KnowledgeCorpus, path: &Path) -> Result<(), RagError> {
    use std::io::Write;
    let mut out = fs::File::create(path)?;
    for s in &corpus.snippets {
        let line = serde_json::json!({ "name": s.disease_name, "definition": s.definition });
        serde_json::to_writer(&mut out, &line).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Embeds every snippet definition, in corpus order. Index item ids are the
/// zero-padded snippet positions so id order equals corpus order.
pub fn embed_corpus(
    corpus: &mut KnowledgeCorpus,
    embedder: &Embedder,
    model_id: &str,
) -> Result<(), RagError> {
    let items: Vec<(String, String)> = corpus
        .snippets
        .iter()
        .enumerate()
        .map(|(i, s)| (position_id(i), s.definition.clone()))
        .collect();
    corpus.index = Some(embedder.build_index(&items, model_id)?);
    Ok(())
}

pub(crate) fn position_id(position: usize) -> String {
    format!("{position:08}")
}

/// One retrieval hit.
#[derive(Debug, Clone)]
pub struct Retrieved<'a> {
    pub snippet: &'a KnowledgeSnippet,
    pub position: usize,
    pub distance: f64,
}

/// The K snippets nearest to the inquiry embedding, ascending distance, ties
/// broken by ascending corpus position.
pub fn retrieve<'a>(
    inquiry: &EmbeddingVector,
    corpus: &'a KnowledgeCorpus,
    k: usize,
) -> Result<Vec<Retrieved<'a>>, RagError> {
    let index = corpus.index.as_ref().ok_or(RagError::IndexMissing)?;
    let n = index.len();
    if k > n {
        return Err(RagError::KTooLarge { k, n });
    }

    // Bounded max-heap keeps the k best; the test oracle is a full sort.
    let mut heap: std::collections::BinaryHeap<(OrdDist, usize)> =
        std::collections::BinaryHeap::with_capacity(k + 1);
    for (pos, (_, vector)) in index.entries().iter().enumerate() {
        let d = distance(inquiry, vector)?;
        heap.push((OrdDist(d), pos));
        if heap.len() > k {
            heap.pop();
        }
    }
    let mut hits: Vec<(OrdDist, usize)> = heap.into_vec();
    hits.sort();
    Ok(hits
        .into_iter()
        .map(|(d, position)| Retrieved {
            snippet: &corpus.snippets[position],
            position,
            distance: d.0,
        })
        .collect())
}

#[derive(PartialEq)]
struct OrdDist(f64);

impl Eq for OrdDist {}

impl Ord for OrdDist {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl PartialOrd for OrdDist {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

fn read_jsonl(path: &Path) -> Result<Vec<(String, String)>, RagError> {
    #[derive(Deserialize)]
    struct Record {
        name: String,
        definition: String,
    }
    if !path.is_file() {
        return Err(RagError::MalformedSource(format!(
            "{}: not a file",
            path.display()
        )));
    }
    let reader = BufReader::new(fs::File::open(path)?);
    let mut pairs = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| {
            RagError::MalformedSource(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        pairs.push((record.name, record.definition));
    }
    Ok(pairs)
}

fn read_csv(path: &Path) -> Result<Vec<(String, String)>, RagError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| RagError::MalformedSource(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| RagError::MalformedSource(format!("{}: {e}", path.display())))?;
    let find = |want: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(want))
    };
    let (Some(name_col), Some(def_col)) = (find("name"), find("definition")) else {
        return Err(RagError::MalformedSource(format!(
            "{}: expected 'name' and 'definition' columns",
            path.display()
        )));
    };

    let mut pairs = Vec::new();
    for (lineno, row) in reader.records().enumerate() {
        let row =
            row.map_err(|e| RagError::MalformedSource(format!("{}:{}: {e}", path.display(), lineno + 2)))?;
        let name = row.get(name_col).unwrap_or("").to_string();
        let definition = row.get(def_col).unwrap_or("").to_string();
        pairs.push((name, definition));
    }
    Ok(pairs)
}

/// Extracts (disorder name, definition contents) pairs from an Orphanet
/// knowledge export. The disorder name is the `Name` element directly under
/// `Disorder`; the definition is the first `Contents` of its text sections.
fn read_orphanet_xml(path: &Path) -> Result<Vec<(String, String)>, RagError> {
    use quick_xml::events::Event;

    let data = fs::read_to_string(path)?;
    let mut reader = quick_xml::Reader::from_str(&data);
    reader.config_mut().trim_text(true);

    let mut stack: Vec<String> = Vec::new();
    let mut pairs = Vec::new();
    let mut name: Option<String> = None;
    let mut definition: Option<String> = None;

    loop {
        match reader.read_event() {
            Ok(Event::Start(e)) => {
                let tag = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                if tag == "Disorder" {
                    name = None;
                    definition = None;
                }
                stack.push(tag);
            }
            Ok(Event::End(e)) => {
                let tag = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                if tag == "Disorder" {
                    match (name.take(), definition.take()) {
                        (Some(n), Some(d)) => pairs.push((n, d)),
                        // No definition: emitted empty so ingestion counts the drop.
                        (Some(n), None) => pairs.push((n, String::new())),
                        _ => {}
                    }
                }
                stack.pop();
            }
            Ok(Event::Text(t)) => {
                let text = t
                    .decode()
                    .map_err(|e| RagError::MalformedSource(format!("{}: {e}", path.display())))?
                    .into_owned();
                let under_disorder_name = stack.len() >= 2
                    && stack[stack.len() - 1] == "Name"
                    && stack[stack.len() - 2] == "Disorder";
                if under_disorder_name && name.is_none() {
                    name = Some(text);
                } else if stack.last().is_some_and(|t| t == "Contents") && definition.is_none() {
                    definition = Some(text);
                }
            }
            Ok(Event::Eof) => break,
            Ok(_) => {}
            Err(e) => {
                return Err(RagError::MalformedSource(format!(
                    "{}: {e}",
                    path.display()
                )))
            }
        }
    }
    Ok(pairs)
}
