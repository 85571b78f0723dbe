//! RareDis corpus ingestion and its canonical in-memory form.
//!
//! Documents are plain UTF-8 texts assigned to one of three splits; gold
//! annotations are typed surface spans with optional byte offsets. Two source
//! formats are supported: BRAT standoff (the upstream distribution layout)
//! and a canonical JSONL interchange format.

mod brat;
mod canonical;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The four entity types in scope, in their fixed report ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityType {
    RareDisease,
    Disease,
    Sign,
    Symptom,
}

impl EntityType {
    pub const ALL: [EntityType; 4] = [
        EntityType::RareDisease,
        EntityType::Disease,
        EntityType::Sign,
        EntityType::Symptom,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EntityType::RareDisease => "rare_disease",
            EntityType::Disease => "disease",
            EntityType::Sign => "sign",
            EntityType::Symptom => "symptom",
        }
    }

    pub fn parse(s: &str) -> Option<EntityType> {
        match s.to_ascii_lowercase().as_str() {
            "rare_disease" | "raredisease" | "rare disease" => Some(EntityType::RareDisease),
            "disease" => Some(EntityType::Disease),
            "sign" => Some(EntityType::Sign),
            "symptom" => Some(EntityType::Symptom),
            _ => None,
        }
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of mapping a raw annotation label onto the entity vocabulary.
///
/// The upstream corpus carries labels beyond the four in scope; those are
/// dropped with a logged count instead of failing the load. Labels outside
/// the known vocabulary are reported as errors with file context.
pub(crate) enum LabelOutcome {
    Entity(EntityType),
    OutOfScope,
    Unknown,
}

pub(crate) fn map_label(raw: &str) -> LabelOutcome {
    match raw.to_ascii_lowercase().as_str() {
        "raredisease" | "rare_disease" => LabelOutcome::Entity(EntityType::RareDisease),
        // Skin rare diseases are a subtype of rare disease in the source corpus.
        "skinraredisease" | "skin_rare_disease" => LabelOutcome::Entity(EntityType::RareDisease),
        "disease" => LabelOutcome::Entity(EntityType::Disease),
        "sign" => LabelOutcome::Entity(EntityType::Sign),
        "symptom" => LabelOutcome::Entity(EntityType::Symptom),
        "anaphor" => LabelOutcome::OutOfScope,
        _ => LabelOutcome::Unknown,
    }
}

/// Dataset split, ordered train < val < test for deterministic reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub split: Split,
}

/// One expert-annotated entity span. Offsets, when present, are byte offsets
/// into the owning document's text, and the slice at `[start, end)` equals
/// `surface` exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldAnnotation {
    pub doc_id: String,
    pub entity_type: EntityType,
    pub surface: String,
    pub start: Option<usize>,
    pub end: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub format: String,
}

/// A loaded corpus: documents, annotations, and where they came from.
/// Immutable after construction; all invariants are checked in [`Dataset::new`].
#[derive(Debug, Clone)]
pub struct Dataset {
    documents: Vec<Document>,
    annotations: Vec<GoldAnnotation>,
    provenance: Provenance,
    by_id: BTreeMap<String, usize>,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("missing file or directory: {0}")]
    MissingFile(String),
    #[error("malformed annotation line at {file}:{line}: {content}")]
    MalformedAnnotationLine {
        file: String,
        line: usize,
        content: String,
    },
    #[error("unknown entity label {label:?} at {file}:{line}")]
    UnknownEntityLabel {
        label: String,
        file: String,
        line: usize,
    },
    #[error("annotation offsets do not match document text in {doc_id}")]
    OffsetMismatch { doc_id: String },
    #[error("unknown document id: {0}")]
    UnknownDocument(String),
    #[error("duplicate document id: {0}")]
    DuplicateDocument(String),
    #[error("document {0} has empty text")]
    EmptyText(String),
    #[error("empty annotation surface at {file}:{line}")]
    EmptySurface { file: String, line: usize },
    #[error("malformed JSON on line {line}: {source}")]
    MalformedJson {
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Source format accepted by [`load_raredis`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    BratStandoff,
    CanonicalJsonl,
}

impl Dataset {
    /// Builds a dataset and verifies every structural invariant: unique ids,
    /// non-empty texts, resolvable annotation targets, and byte-exact offsets.
    pub fn new(
        documents: Vec<Document>,
        annotations: Vec<GoldAnnotation>,
        provenance: Provenance,
    ) -> Result<Dataset, CorpusError> {
        let mut by_id = BTreeMap::new();
        for (idx, doc) in documents.iter().enumerate() {
            if doc.text.is_empty() {
                return Err(CorpusError::EmptyText(doc.id.clone()));
            }
            if by_id.insert(doc.id.clone(), idx).is_some() {
                return Err(CorpusError::DuplicateDocument(doc.id.clone()));
            }
        }
        for ann in &annotations {
            let Some(&idx) = by_id.get(&ann.doc_id) else {
                return Err(CorpusError::UnknownDocument(ann.doc_id.clone()));
            };
            if let (Some(start), Some(end)) = (ann.start, ann.end) {
                let text = &documents[idx].text;
                if !text.is_char_boundary(start.min(text.len()))
                    || end > text.len()
                    || start > end
                    || !text.is_char_boundary(end)
                    || text[start..end] != ann.surface
                {
                    return Err(CorpusError::OffsetMismatch {
                        doc_id: ann.doc_id.clone(),
                    });
                }
            }
        }
        Ok(Dataset {
            documents,
            annotations,
            provenance,
            by_id,
        })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn annotations(&self) -> &[GoldAnnotation] {
        &self.annotations
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn document(&self, doc_id: &str) -> Option<&Document> {
        self.by_id.get(doc_id).map(|&idx| &self.documents[idx])
    }

    /// Document ids of one split, in load order.
    pub fn split_ids(&self, split: Split) -> Vec<String> {
        self.documents
            .iter()
            .filter(|d| d.split == split)
            .map(|d| d.id.clone())
            .collect()
    }

    pub fn annotations_for<'a>(
        &'a self,
        doc_id: &'a str,
    ) -> impl Iterator<Item = &'a GoldAnnotation> + 'a {
        self.annotations.iter().filter(move |a| a.doc_id == doc_id)
    }
}

/// Loads a corpus from disk in the given format.
pub fn load_raredis(path: &Path, format: DatasetFormat) -> Result<Dataset, CorpusError> {
    match format {
        DatasetFormat::BratStandoff => brat::load(path),
        DatasetFormat::CanonicalJsonl => canonical::load(path),
    }
}

/// Writes a dataset in the canonical JSONL interchange format.
pub fn save_canonical(dataset: &Dataset, path: &Path) -> Result<(), CorpusError> {
    canonical::save(dataset, path)
}

/// Canonical entity string normalization: lowercase, trimmed, internal
/// whitespace runs collapsed to a single space. Idempotent.
pub fn normalize_entity(raw: &str) -> String {
    raw.to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// The normalized ground-truth entity set for one document and entity type.
pub fn gold_set(
    dataset: &Dataset,
    doc_id: &str,
    entity_type: EntityType,
) -> Result<BTreeSet<String>, CorpusError> {
    if dataset.document(doc_id).is_none() {
        return Err(CorpusError::UnknownDocument(doc_id.to_string()));
    }
    Ok(dataset
        .annotations_for(doc_id)
        .filter(|a| a.entity_type == entity_type)
        .map(|a| normalize_entity(&a.surface))
        .collect())
}

/// Per-split document and entity tallies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitStats {
    pub documents: BTreeMap<Split, usize>,
    pub entities: BTreeMap<Split, BTreeMap<EntityType, usize>>,
}

impl SplitStats {
    pub fn total_documents(&self) -> usize {
        self.documents.values().sum()
    }

    pub fn split_documents(&self, split: Split) -> usize {
        self.documents.get(&split).copied().unwrap_or(0)
    }

    pub fn entity_total(&self, entity_type: EntityType) -> usize {
        self.entities
            .values()
            .map(|m| m.get(&entity_type).copied().unwrap_or(0))
            .sum()
    }

    pub fn count(&self, split: Split, entity_type: EntityType) -> usize {
        self.entities
            .get(&split)
            .and_then(|m| m.get(&entity_type))
            .copied()
            .unwrap_or(0)
    }
}

impl fmt::Display for SplitStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "split\tdocs\trare_disease\tdisease\tsign\tsymptom")?;
        for split in Split::ALL {
            write!(f, "{}\t{}", split, self.split_documents(split))?;
            for et in EntityType::ALL {
                write!(f, "\t{}", self.count(split, et))?;
            }
            writeln!(f)?;
        }
        write!(f, "total\t{}", self.total_documents())?;
        for et in EntityType::ALL {
            write!(f, "\t{}", self.entity_total(et))?;
        }
        Ok(())
    }
}

/// Exact tallies of documents and annotations per split and entity type.
pub fn split_stats(dataset: &Dataset) -> SplitStats {
    let mut documents = BTreeMap::new();
    let mut entities: BTreeMap<Split, BTreeMap<EntityType, usize>> = BTreeMap::new();
    for split in Split::ALL {
        documents.insert(split, 0);
        entities.insert(split, BTreeMap::new());
    }
    for doc in dataset.documents() {
        *documents.get_mut(&doc.split).unwrap() += 1;
    }
    for ann in dataset.annotations() {
        let split = dataset
            .document(&ann.doc_id)
            .expect("validated at construction")
            .split;
        *entities
            .get_mut(&split)
            .unwrap()
            .entry(ann.entity_type)
            .or_insert(0) += 1;
    }
    SplitStats {
        documents,
        entities,
    }
}
