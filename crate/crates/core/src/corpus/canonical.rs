//! Canonical JSONL interchange format: one document object per line,
//! `{"id", "split", "text", "annotations": [{"type", "surface", "start", "end"}]}`.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CorpusError, Dataset, Document, EntityType, GoldAnnotation, Provenance, Split};

#[derive(Serialize, Deserialize)]
struct DocRecord {
    id: String,
    split: Split,
    text: String,
    annotations: Vec<AnnRecord>,
}

#[derive(Serialize, Deserialize)]
struct AnnRecord {
    #[serde(rename = "type")]
    entity_type: EntityType,
    surface: String,
    start: Option<usize>,
    end: Option<usize>,
}

pub(super) fn load(path: &Path) -> Result<Dataset, CorpusError> {
    if !path.is_file() {
        return Err(CorpusError::MissingFile(path.display().to_string()));
    }
    let reader = BufReader::new(fs::File::open(path)?);
    let mut documents = Vec::new();
    let mut annotations = Vec::new();

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DocRecord = serde_json::from_str(&line).map_err(|source| {
            CorpusError::MalformedJson {
                line: lineno + 1,
                source,
            }
        })?;
        for ann in record.annotations {
            annotations.push(GoldAnnotation {
                doc_id: record.id.clone(),
                entity_type: ann.entity_type,
                surface: ann.surface,
                start: ann.start,
                end: ann.end,
            });
        }
        documents.push(Document {
            id: record.id,
            text: record.text,
            split: record.split,
        });
    }

    Dataset::new(
        documents,
        annotations,
        Provenance {
            source: path.display().to_string(),
            format: "canonical_jsonl".into(),
        },
    )
}

pub(super) fn save(dataset: &Dataset, path: &Path) -> Result<(), CorpusError> {
    let mut out = fs::File::create(path)?;
    for doc in dataset.documents() {
        let record = DocRecord {
            id: doc.id.clone(),
            split: doc.split,
            text: doc.text.clone(),
            annotations: dataset
                .annotations_for(&doc.id)
                .map(|a| AnnRecord {
                    entity_type: a.entity_type,
                    surface: a.surface.clone(),
                    start: a.start,
                    end: a.end,
                })
                .collect(),
        };
        serde_json::to_writer(&mut out, &record).map_err(std::io::Error::other)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
