//! BRAT standoff loader.
//!
//! Layout: `<root>/{train,dev|val,test}/<id>.txt` paired with `<id>.ann`.
//! Only `T` (text-bound) annotation lines are consumed; relation, event,
//! attribute, and note lines are skipped. Lines look like:
//!
//! ```text
//! T1\tRAREDISEASE 0 14\tMyhre syndrome
//! ```

use std::fs;
use std::path::Path;

use super::{
    map_label, CorpusError, Dataset, Document, GoldAnnotation, LabelOutcome, Provenance, Split,
};

pub(super) fn load(root: &Path) -> Result<Dataset, CorpusError> {
    if !root.is_dir() {
        return Err(CorpusError::MissingFile(root.display().to_string()));
    }

    let mut documents = Vec::new();
    let mut annotations = Vec::new();
    let mut dropped_out_of_scope = 0usize;
    let mut skipped_non_text = 0usize;
    let mut any_split_dir = false;

    for (split, names) in [
        (Split::Train, &["train"][..]),
        (Split::Val, &["val", "dev"][..]),
        (Split::Test, &["test"][..]),
    ] {
        let Some(dir) = names.iter().map(|n| root.join(n)).find(|p| p.is_dir()) else {
            continue;
        };
        any_split_dir = true;
        load_split_dir(
            &dir,
            split,
            &mut documents,
            &mut annotations,
            &mut dropped_out_of_scope,
            &mut skipped_non_text,
        )?;
    }

    if !any_split_dir {
        log::warn!(
            "no train/dev/val/test directories under {}; loaded empty dataset",
            root.display()
        );
    }
    if dropped_out_of_scope > 0 {
        log::info!("dropped {dropped_out_of_scope} out-of-scope annotations");
    }
    if skipped_non_text > 0 {
        log::debug!("skipped {skipped_non_text} non text-bound annotation lines");
    }

    Dataset::new(
        documents,
        annotations,
        Provenance {
            source: root.display().to_string(),
            format: "brat_standoff".into(),
        },
    )
}

fn load_split_dir(
    dir: &Path,
    split: Split,
    documents: &mut Vec<Document>,
    annotations: &mut Vec<GoldAnnotation>,
    dropped: &mut usize,
    skipped: &mut usize,
) -> Result<(), CorpusError> {
    let mut txt_files: Vec<_> = fs::read_dir(dir)?
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .collect();
    txt_files.sort();

    for txt in txt_files {
        let id = txt
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let text = fs::read_to_string(&txt)?;
        if text.is_empty() {
            return Err(CorpusError::EmptyText(id));
        }

        let ann_path = txt.with_extension("ann");
        if ann_path.is_file() {
            parse_ann_file(&ann_path, &id, &text, annotations, dropped, skipped)?;
        } else {
            log::warn!("no .ann file for {}", txt.display());
        }

        documents.push(Document { id, text, split });
    }
    Ok(())
}

fn parse_ann_file(
    path: &Path,
    doc_id: &str,
    text: &str,
    annotations: &mut Vec<GoldAnnotation>,
    dropped: &mut usize,
    skipped: &mut usize,
) -> Result<(), CorpusError> {
    let file = path.display().to_string();
    let contents = fs::read_to_string(path)?;

    for (lineno, line) in contents.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        if !line.starts_with('T') {
            // Relations (R), events (E), attributes (A/M), notes (#), equivs (*).
            *skipped += 1;
            continue;
        }

        let mut fields = line.splitn(3, '\t');
        let _tid = fields.next();
        let (Some(spec), Some(surface)) = (fields.next(), fields.next()) else {
            return Err(CorpusError::MalformedAnnotationLine {
                file,
                line: lineno,
                content: line.to_string(),
            });
        };
        if surface.is_empty() {
            return Err(CorpusError::EmptySurface { file, line: lineno });
        }

        let Some((label, offsets)) = spec.split_once(' ') else {
            return Err(CorpusError::MalformedAnnotationLine {
                file,
                line: lineno,
                content: line.to_string(),
            });
        };

        let entity_type = match map_label(label) {
            LabelOutcome::Entity(et) => et,
            LabelOutcome::OutOfScope => {
                *dropped += 1;
                continue;
            }
            LabelOutcome::Unknown => {
                return Err(CorpusError::UnknownEntityLabel {
                    label: label.to_string(),
                    file,
                    line: lineno,
                });
            }
        };

        if offsets.contains(';') {
            // Discontinuous span: keep the surface, no single offset range.
            annotations.push(GoldAnnotation {
                doc_id: doc_id.to_string(),
                entity_type,
                surface: surface.to_string(),
                start: None,
                end: None,
            });
            continue;
        }

        let (start_s, end_s) =
            offsets
                .split_once(' ')
                .ok_or_else(|| CorpusError::MalformedAnnotationLine {
                    file: file.clone(),
                    line: lineno,
                    content: line.to_string(),
                })?;
        let (start, end) = match (start_s.parse::<usize>(), end_s.parse::<usize>()) {
            (Ok(s), Ok(e)) if s <= e => (s, e),
            _ => {
                return Err(CorpusError::MalformedAnnotationLine {
                    file,
                    line: lineno,
                    content: line.to_string(),
                });
            }
        };

        let (start, end, slice) =
            resolve_span(text, start, end, surface).ok_or(CorpusError::OffsetMismatch {
                doc_id: doc_id.to_string(),
            })?;

        annotations.push(GoldAnnotation {
            doc_id: doc_id.to_string(),
            entity_type,
            // The document slice is authoritative so the byte-offset
            // invariant holds even when the .ann field normalized newlines.
            surface: slice,
            start: Some(start),
            end: Some(end),
        });
    }
    Ok(())
}

/// Resolves an annotated span against the document text.
///
/// Offsets are interpreted as byte offsets first; if that slice does not
/// reproduce the annotated surface, they are re-interpreted as character
/// offsets (some exports count characters). The standoff convention of
/// flattening newlines to spaces inside the surface field is also accepted.
fn resolve_span(text: &str, start: usize, end: usize, surface: &str) -> Option<(usize, usize, String)> {
    if let Some(slice) = slice_at_bytes(text, start, end) {
        if span_matches(slice, surface) {
            return Some((start, end, slice.to_string()));
        }
    }
    let (bstart, bend) = char_to_byte_range(text, start, end)?;
    let slice = &text[bstart..bend];
    span_matches(slice, surface).then(|| (bstart, bend, slice.to_string()))
}

fn slice_at_bytes(text: &str, start: usize, end: usize) -> Option<&str> {
    (end <= text.len() && text.is_char_boundary(start) && text.is_char_boundary(end))
        .then(|| &text[start..end])
}

fn char_to_byte_range(text: &str, start: usize, end: usize) -> Option<(usize, usize)> {
    if start > end {
        return None;
    }
    let mut indices = text.char_indices().map(|(i, _)| i);
    let bstart = indices.by_ref().nth(start).or_else(|| {
        (start == text.chars().count()).then_some(text.len())
    })?;
    let bend = if end == start {
        bstart
    } else {
        text.char_indices()
            .map(|(i, _)| i)
            .nth(end)
            .unwrap_or(text.len())
    };
    (end <= text.chars().count()).then_some((bstart, bend))
}

fn span_matches(slice: &str, surface: &str) -> bool {
    slice == surface || slice.replace(['\n', '\r'], " ") == surface
}
