//! In-context exemplar selection: uniform random, per-inquiry nearest
//! neighbors, and cluster-shared nearest neighbors over a k-means partition
//! of the test split.

mod kmeans;

pub use kmeans::{kmeans, ClusterAssignment};

use std::collections::BinaryHeap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{normalize_entity, Dataset, EntityType, Split};
use crate::embedding::{distance, EmbeddingError, EmbeddingIndex, EmbeddingVector};

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("k = {k} exceeds the {n} available items")]
    KTooLarge { k: usize, n: usize },
    #[error("C = {c} clusters requested for {n} items")]
    CTooLarge { c: usize, n: usize },
    #[error("cluster {0} is empty or unknown")]
    EmptyCluster(usize),
    #[error("unknown document id: {0}")]
    UnknownDocument(String),
    #[error("document {doc_id} is in split {split}, expected train")]
    WrongSplit { doc_id: String, split: Split },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

/// One demonstration pair: a training document and its flattened gold list
/// for the target entity type (normalized; empty renders as "none").
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemonstrationExample {
    pub input_text: String,
    pub output_list: Vec<String>,
}

/// A selected exemplar with the score that ranked it (Euclidean distance for
/// Inquiry-KNN, average distance to cluster members for Cluster-KNN).
#[derive(Debug, Clone, PartialEq)]
pub struct Ranked {
    pub item_id: String,
    pub distance: f64,
}

pub fn ids(ranked: &[Ranked]) -> Vec<String> {
    ranked.iter().map(|r| r.item_id.clone()).collect()
}

/// Draws `k` distinct ids without replacement from a seeded generator.
/// Deterministic for a fixed (id order, k, seed).
pub fn select_random(
    train_ids: &[String],
    k: usize,
    seed: u64,
) -> Result<Vec<String>, SelectionError> {
    let n = train_ids.len();
    if k > n {
        return Err(SelectionError::KTooLarge { k, n });
    }
    let mut ids = train_ids.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Partial Fisher-Yates: the first k slots end up uniformly drawn.
    for i in 0..k {
        let j = rng.random_range(i..n);
        ids.swap(i, j);
    }
    ids.truncate(k);
    Ok(ids)
}

/// Wrapper giving f64 scores a total order for heap-based selection.
#[derive(PartialEq)]
struct Candidate {
    distance: f64,
    item_id: String,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then_with(|| self.item_id.cmp(&other.item_id))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Keeps the k smallest candidates under (distance, id) ordering.
fn select_k_smallest(
    candidates: impl Iterator<Item = Candidate>,
    k: usize,
) -> Vec<Ranked> {
    let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
    for candidate in candidates {
        heap.push(candidate);
        if heap.len() > k {
            heap.pop();
        }
    }
    let mut out: Vec<Candidate> = heap.into_vec();
    out.sort();
    out.into_iter()
        .map(|c| Ranked {
            item_id: c.item_id,
            distance: c.distance,
        })
        .collect()
}

/// The k index items nearest to the inquiry, ascending distance, ties broken
/// by ascending item id.
pub fn select_knn(
    inquiry: &EmbeddingVector,
    index: &EmbeddingIndex,
    k: usize,
) -> Result<Vec<Ranked>, SelectionError> {
    if k > index.len() {
        return Err(SelectionError::KTooLarge { k, n: index.len() });
    }
    let mut candidates = Vec::with_capacity(index.len());
    for (item_id, vector) in index.entries() {
        candidates.push(Candidate {
            distance: distance(inquiry, vector)?,
            item_id: item_id.clone(),
        });
    }
    Ok(select_k_smallest(candidates.into_iter(), k))
}

/// Arithmetic mean of distances from one training item to every member of a
/// cluster.
pub fn cluster_avg_distance(
    train_item: &EmbeddingVector,
    cluster_members: &[&EmbeddingVector],
) -> Result<f64, SelectionError> {
    if cluster_members.is_empty() {
        return Err(SelectionError::EmptyCluster(0));
    }
    let mut sum = 0.0;
    for member in cluster_members {
        sum += distance(train_item, member)?;
    }
    Ok(sum / cluster_members.len() as f64)
}

/// The k training items with the smallest average distance to the members of
/// one cluster. Every inquiry in the cluster shares this list.
pub fn select_cluster_knn(
    assignment: &ClusterAssignment,
    cluster_id: usize,
    train_index: &EmbeddingIndex,
    test_index: &EmbeddingIndex,
    k: usize,
) -> Result<Vec<Ranked>, SelectionError> {
    if k > train_index.len() {
        return Err(SelectionError::KTooLarge {
            k,
            n: train_index.len(),
        });
    }
    let members: Vec<&EmbeddingVector> = assignment
        .members_of(cluster_id)
        .filter_map(|id| test_index.get(id))
        .collect();
    if members.is_empty() {
        return Err(SelectionError::EmptyCluster(cluster_id));
    }

    let mut candidates = Vec::with_capacity(train_index.len());
    for (item_id, vector) in train_index.entries() {
        candidates.push(Candidate {
            distance: cluster_avg_distance(vector, &members)?,
            item_id: item_id.clone(),
        });
    }
    Ok(select_k_smallest(candidates.into_iter(), k))
}

/// Pairs each selected training document with its flattened gold list for the
/// entity type: annotation order, normalized, duplicates removed.
pub fn materialize_examples(
    item_ids: &[String],
    dataset: &Dataset,
    entity_type: EntityType,
) -> Result<Vec<DemonstrationExample>, SelectionError> {
    let mut out = Vec::with_capacity(item_ids.len());
    for id in item_ids {
        let doc = dataset
            .document(id)
            .ok_or_else(|| SelectionError::UnknownDocument(id.clone()))?;
        if doc.split != Split::Train {
            return Err(SelectionError::WrongSplit {
                doc_id: id.clone(),
                split: doc.split,
            });
        }
        let mut output_list = Vec::new();
        for ann in dataset.annotations_for(id) {
            if ann.entity_type != entity_type {
                continue;
            }
            let normalized = normalize_entity(&ann.surface);
            if !output_list.contains(&normalized) {
                output_list.push(normalized);
            }
        }
        out.push(DemonstrationExample {
            input_text: doc.text.clone(),
            output_list,
        });
    }
    Ok(out)
}
