//! Exact-match scoring and the six-category error taxonomy.
//!
//! Scoring is micro-averaged over the test split: true-positive, prediction,
//! and gold counts are summed per document on normalized entity sets, then
//! precision/recall/F1 are computed once from the sums. The taxonomy aligns
//! predictions to gold spans greedily by token overlap and buckets each
//! outcome into Correct, Boundary, Type, Boundary+Type, Spurious, or Missed.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{gold_set, normalize_entity, CorpusError, Dataset, EntityType, Split};
use crate::gateway::PredictionSet;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("predictions do not cover the test split (missing: {missing:?}, unexpected: {unexpected:?}, duplicated: {duplicated:?})")]
    SplitMismatch {
        missing: Vec<String>,
        unexpected: Vec<String>,
        duplicated: Vec<String>,
    },
    #[error("prediction for {doc_id} has entity type {got}, expected {expected}")]
    WrongEntityType {
        doc_id: String,
        got: EntityType,
        expected: EntityType,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Micro-averaged exact-match metrics for one entity type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub entity_type: EntityType,
    pub tp: usize,
    pub pred_total: usize,
    pub gold_total: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

impl ScoreReport {
    /// Derives the ratio metrics from raw counts. A corpus with no predictions
    /// and no gold is degenerate and reports unit scores; otherwise undefined
    /// ratios are 0.
    pub fn from_counts(
        entity_type: EntityType,
        tp: usize,
        pred_total: usize,
        gold_total: usize,
    ) -> ScoreReport {
        debug_assert!(tp <= pred_total.min(gold_total), "tp exceeds a total");
        let (precision, recall) = if pred_total == 0 && gold_total == 0 {
            (1.0, 1.0)
        } else {
            (
                if pred_total > 0 {
                    tp as f64 / pred_total as f64
                } else {
                    0.0
                },
                if gold_total > 0 {
                    tp as f64 / gold_total as f64
                } else {
                    0.0
                },
            )
        };
        ScoreReport {
            entity_type,
            tp,
            pred_total,
            gold_total,
            precision,
            recall,
            f1: f1_score(precision, recall),
        }
    }
}

/// Scores predictions against the dataset's test split.
///
/// Every test document must appear exactly once in `predictions` (an empty
/// entity set is a valid prediction).
pub fn score(
    predictions: &[PredictionSet],
    dataset: &Dataset,
    entity_type: EntityType,
) -> Result<ScoreReport, EvalError> {
    let test_ids: BTreeSet<String> = dataset.split_ids(Split::Test).into_iter().collect();
    let mut seen = BTreeSet::new();
    let mut duplicated = Vec::new();
    let mut unexpected = Vec::new();
    for p in predictions {
        if p.entity_type != entity_type {
            return Err(EvalError::WrongEntityType {
                doc_id: p.doc_id.clone(),
                got: p.entity_type,
                expected: entity_type,
            });
        }
        if !seen.insert(p.doc_id.clone()) {
            duplicated.push(p.doc_id.clone());
        }
        if !test_ids.contains(&p.doc_id) {
            unexpected.push(p.doc_id.clone());
        }
    }
    let missing: Vec<String> = test_ids.difference(&seen).cloned().collect();
    if !missing.is_empty() || !unexpected.is_empty() || !duplicated.is_empty() {
        return Err(EvalError::SplitMismatch {
            missing,
            unexpected,
            duplicated,
        });
    }

    let mut tp = 0usize;
    let mut pred_total = 0usize;
    let mut gold_total = 0usize;
    for p in predictions {
        let gold = gold_set(dataset, &p.doc_id, entity_type)?;
        tp += p.entities.intersection(&gold).count();
        pred_total += p.entities.len();
        gold_total += gold.len();
    }
    Ok(ScoreReport::from_counts(entity_type, tp, pred_total, gold_total))
}

/// Case-insensitive token set of a surface string: lowercase, whitespace
/// split, leading/trailing punctuation stripped per token.
fn tokens(s: &str) -> BTreeSet<String> {
    s.to_lowercase()
        .split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_string())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Number of shared tokens between two surfaces.
pub fn token_overlap(a: &str, b: &str) -> usize {
    tokens(a).intersection(&tokens(b)).count()
}

/// One prediction aligned to one gold span.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignedPair {
    pub pred_surface: String,
    pub pred_type: EntityType,
    pub gold_surface: String,
    pub gold_type: EntityType,
    pub overlap: usize,
}

/// Output of the greedy one-to-one alignment.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub aligned: Vec<AlignedPair>,
    pub unmatched_pred: Vec<(String, EntityType)>,
    pub unmatched_gold: Vec<(String, EntityType)>,
}

/// Greedy one-to-one alignment: predictions are visited in their given order
/// and each takes the still-unmatched gold span with the highest positive
/// token overlap. Ties prefer a gold span of the same entity type, then the
/// earliest gold position.
pub fn align(
    predictions: &[(String, EntityType)],
    gold: &[(String, EntityType)],
) -> Alignment {
    let mut taken = vec![false; gold.len()];
    let mut result = Alignment::default();

    for (pred_surface, pred_type) in predictions {
        let mut best: Option<(usize, usize, bool)> = None; // (gold idx, overlap, same type)
        for (idx, (gold_surface, gold_type)) in gold.iter().enumerate() {
            if taken[idx] {
                continue;
            }
            let overlap = token_overlap(gold_surface, pred_surface);
            if overlap == 0 {
                continue;
            }
            let same_type = gold_type == pred_type;
            let better = match best {
                None => true,
                Some((_, best_overlap, best_same)) => {
                    overlap > best_overlap || (overlap == best_overlap && same_type && !best_same)
                }
            };
            if better {
                best = Some((idx, overlap, same_type));
            }
        }
        match best {
            Some((idx, overlap, _)) => {
                taken[idx] = true;
                result.aligned.push(AlignedPair {
                    pred_surface: pred_surface.clone(),
                    pred_type: *pred_type,
                    gold_surface: gold[idx].0.clone(),
                    gold_type: gold[idx].1,
                    overlap,
                });
            }
            None => result
                .unmatched_pred
                .push((pred_surface.clone(), *pred_type)),
        }
    }
    for (idx, entry) in gold.iter().enumerate() {
        if !taken[idx] {
            result.unmatched_gold.push(entry.clone());
        }
    }
    result
}

/// The six mutually exclusive outcome categories.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    Correct,
    Boundary,
    Type,
    BoundaryType,
    Spurious,
    Missed,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 6] = [
        ErrorCategory::Correct,
        ErrorCategory::Boundary,
        ErrorCategory::Type,
        ErrorCategory::BoundaryType,
        ErrorCategory::Spurious,
        ErrorCategory::Missed,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorCategory::Correct => "correct",
            ErrorCategory::Boundary => "boundary",
            ErrorCategory::Type => "type",
            ErrorCategory::BoundaryType => "boundary_type",
            ErrorCategory::Spurious => "spurious",
            ErrorCategory::Missed => "missed",
        }
    }
}

/// Category of one aligned pair: exactness of the (normalized) surface match
/// crossed with agreement of the entity types.
pub fn categorize_pair(pair: &AlignedPair) -> ErrorCategory {
    let exact = normalize_entity(&pair.pred_surface) == normalize_entity(&pair.gold_surface);
    let same_type = pair.pred_type == pair.gold_type;
    match (exact, same_type) {
        (true, true) => ErrorCategory::Correct,
        (false, true) => ErrorCategory::Boundary,
        (true, false) => ErrorCategory::Type,
        (false, false) => ErrorCategory::BoundaryType,
    }
}

pub type ErrorCounts = BTreeMap<ErrorCategory, usize>;

/// Category counts and proportions for one entity type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDistribution {
    pub entity_type: EntityType,
    pub counts: ErrorCounts,
    pub total: usize,
    pub proportions: BTreeMap<ErrorCategory, f64>,
}

impl ErrorDistribution {
    pub fn from_counts(entity_type: EntityType, mut counts: ErrorCounts) -> ErrorDistribution {
        for category in ErrorCategory::ALL {
            counts.entry(category).or_insert(0);
        }
        let total: usize = counts.values().sum();
        let proportions = counts
            .iter()
            .map(|(&category, &count)| {
                let p = if total > 0 {
                    count as f64 / total as f64
                } else {
                    0.0
                };
                (category, p)
            })
            .collect();
        ErrorDistribution {
            entity_type,
            counts,
            total,
            proportions,
        }
    }

    pub fn count(&self, category: ErrorCategory) -> usize {
        self.counts.get(&category).copied().unwrap_or(0)
    }
}

/// Buckets an alignment into the taxonomy. Unmatched predictions are
/// spurious; unmatched gold spans count as missed only when they carry the
/// inquiry entity type (the gold pool may include other types so that Type
/// confusions are observable).
pub fn classify(alignment: &Alignment, inquiry_type: EntityType) -> ErrorCounts {
    let mut counts = ErrorCounts::new();
    for pair in &alignment.aligned {
        *counts.entry(categorize_pair(pair)).or_insert(0) += 1;
    }
    *counts.entry(ErrorCategory::Spurious).or_insert(0) += alignment.unmatched_pred.len();
    *counts.entry(ErrorCategory::Missed).or_insert(0) += alignment
        .unmatched_gold
        .iter()
        .filter(|(_, t)| *t == inquiry_type)
        .count();
    counts
}

pub fn merge_counts(into: &mut ErrorCounts, from: &ErrorCounts) {
    for (&category, &count) in from {
        *into.entry(category).or_insert(0) += count;
    }
}
