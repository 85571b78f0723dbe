//! Lloyd's k-means with k-means++ seeding, specialized for partitioning the
//! test split in embedding space. Single-threaded and fully deterministic for
//! a fixed (index order, C, seed).

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::SelectionError;
use crate::embedding::EmbeddingIndex;

const MAX_ITERS: usize = 300;

/// A fixed-point partition of the indexed items into C clusters.
#[derive(Debug, Clone)]
pub struct ClusterAssignment {
    pub num_clusters: usize,
    pub labels: BTreeMap<String, usize>,
    pub centroids: Vec<Vec<f64>>,
    pub seed: u64,
    /// Final objective: sum of squared distances to assigned centroids.
    pub inertia: f64,
    /// Objective after each assignment pass, for monotonicity checks.
    pub inertia_history: Vec<f64>,
    pub converged: bool,
}

impl ClusterAssignment {
    pub fn label_of(&self, item_id: &str) -> Option<usize> {
        self.labels.get(item_id).copied()
    }

    pub fn members_of(&self, cluster_id: usize) -> impl Iterator<Item = &str> {
        self.labels
            .iter()
            .filter(move |(_, &label)| label == cluster_id)
            .map(|(id, _)| id.as_str())
    }

    /// Recomputes the objective from labels and centroids; used by tests to
    /// cross-check the stored value.
    pub fn recompute_inertia(&self, index: &EmbeddingIndex) -> f64 {
        let mut total = 0.0;
        for (id, vector) in index.entries() {
            let label = self.labels[id];
            total += sqdist(vector.values(), &self.centroids[label]);
        }
        total
    }
}

fn sqdist(a: &[f64], b: &[f64]) -> f64 {
    let mut sum = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let d = x - y;
        sum += d * d;
    }
    sum
}

/// Partitions the index into `c` clusters.
pub fn kmeans(
    index: &EmbeddingIndex,
    c: usize,
    seed: u64,
) -> Result<ClusterAssignment, SelectionError> {
    let n = index.len();
    if c == 0 || c > n {
        return Err(SelectionError::CTooLarge { c, n });
    }
    let points: Vec<&[f64]> = index.entries().iter().map(|(_, v)| v.values()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centroids = plus_plus_init(&points, c, &mut rng);
    let mut labels = vec![0usize; n];
    let mut prev_labels: Option<Vec<usize>> = None;
    let mut history = Vec::new();
    let mut converged = false;

    for _ in 0..MAX_ITERS {
        assign(&points, &centroids, &mut labels);
        history.push(objective(&points, &centroids, &labels));
        if prev_labels.as_deref() == Some(labels.as_slice()) {
            converged = true;
            break;
        }
        prev_labels = Some(labels.clone());
        update_centroids(&points, &labels, &mut centroids);
    }

    let inertia = *history.last().expect("at least one iteration");
    let labels_map = index
        .entries()
        .iter()
        .zip(labels.iter())
        .map(|((id, _), &label)| (id.clone(), label))
        .collect();

    Ok(ClusterAssignment {
        num_clusters: c,
        labels: labels_map,
        centroids,
        seed,
        inertia,
        inertia_history: history,
        converged,
    })
}

/// k-means++: first centroid uniform, the rest sampled proportionally to the
/// squared distance to the nearest already-chosen centroid.
fn plus_plus_init(points: &[&[f64]], c: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(c);
    centroids.push(points[rng.random_range(0..n)].to_vec());

    let mut best = vec![f64::INFINITY; n];
    while centroids.len() < c {
        let latest = centroids.last().unwrap();
        for (i, p) in points.iter().enumerate() {
            best[i] = best[i].min(sqdist(p, latest));
        }
        let total: f64 = best.iter().sum();
        let chosen = if total > 0.0 {
            let mut r = rng.random_range(0.0..total);
            let mut pick = n - 1;
            for (i, &w) in best.iter().enumerate() {
                if r < w {
                    pick = i;
                    break;
                }
                r -= w;
            }
            pick
        } else {
            // All remaining mass is zero (duplicate points); fall back to uniform.
            rng.random_range(0..n)
        };
        centroids.push(points[chosen].to_vec());
    }
    centroids
}

fn assign(points: &[&[f64]], centroids: &[Vec<f64>], labels: &mut [usize]) {
    for (i, p) in points.iter().enumerate() {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (j, centroid) in centroids.iter().enumerate() {
            let d = sqdist(p, centroid);
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        labels[i] = best;
    }
}

fn objective(points: &[&[f64]], centroids: &[Vec<f64>], labels: &[usize]) -> f64 {
    points
        .iter()
        .zip(labels.iter())
        .map(|(p, &l)| sqdist(p, &centroids[l]))
        .sum()
}

fn update_centroids(points: &[&[f64]], labels: &[usize], centroids: &mut [Vec<f64>]) {
    let dim = points[0].len();
    let c = centroids.len();
    let mut sums = vec![vec![0.0f64; dim]; c];
    let mut counts = vec![0usize; c];
    for (p, &l) in points.iter().zip(labels.iter()) {
        counts[l] += 1;
        for (acc, v) in sums[l].iter_mut().zip(p.iter()) {
            *acc += v;
        }
    }

    let mut taken = vec![false; points.len()];
    for j in 0..c {
        if counts[j] > 0 {
            for (slot, acc) in centroids[j].iter_mut().zip(sums[j].iter()) {
                *slot = acc / counts[j] as f64;
            }
        } else {
            // Reseed an emptied cluster at the point currently farthest from
            // its own centroid, skipping points already used for reseeding.
            let far = points
                .iter()
                .enumerate()
                .filter(|(i, _)| !taken[*i])
                .max_by(|(ia, pa), (ib, pb)| {
                    let da = sqdist(pa, &centroids[labels[*ia]]);
                    let db = sqdist(pb, &centroids[labels[*ib]]);
                    da.total_cmp(&db).then_with(|| ib.cmp(ia))
                })
                .map(|(i, _)| i);
            if let Some(i) = far {
                taken[i] = true;
                centroids[j] = points[i].to_vec();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::EmbeddingVector;
    use rand::Rng;

    fn index_from(vectors: Vec<Vec<f64>>) -> EmbeddingIndex {
        let mut index = EmbeddingIndex::new("m");
        for (i, v) in vectors.into_iter().enumerate() {
            index
                .push(
                    format!("p{i:03}"),
                    EmbeddingVector::new(v, "m", "h").unwrap(),
                )
                .unwrap();
        }
        index
    }

    fn rng_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
        (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn single_cluster_centroid_is_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let vectors: Vec<Vec<f64>> = (0..17).map(|_| rng_vec(&mut rng, 6)).collect();
        let index = index_from(vectors.clone());
        let got = kmeans(&index, 1, 42).unwrap();

        let mut mean = [0.0; 6];
        for v in &vectors {
            for (m, x) in mean.iter_mut().zip(v.iter()) {
                *m += x;
            }
        }
        for m in mean.iter_mut() {
            *m /= vectors.len() as f64;
        }
        for (a, b) in got.centroids[0].iter().zip(mean.iter()) {
            assert!((a - b).abs() <= 1e-9);
        }
        assert!(got.labels.values().all(|&l| l == 0));
    }

    #[test]
    fn n_distinct_points_n_clusters() {
        let vectors: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 * 3.0, 0.0]).collect();
        let index = index_from(vectors);
        let got = kmeans(&index, 6, 9).unwrap();
        let mut labels: Vec<usize> = got.labels.values().copied().collect();
        labels.sort();
        labels.dedup();
        assert_eq!(labels.len(), 6, "each point its own cluster");
        assert!(got.inertia <= 1e-12);
    }

    #[test]
    fn two_blobs_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut vectors = Vec::new();
        for _ in 0..15 {
            let mut v = rng_vec(&mut rng, 4);
            v.iter_mut().for_each(|x| *x *= 0.1);
            vectors.push(v);
        }
        for _ in 0..15 {
            let mut v = rng_vec(&mut rng, 4);
            v.iter_mut().for_each(|x| *x *= 0.1);
            v[0] += 10.0;
            vectors.push(v);
        }
        let index = index_from(vectors);
        let got = kmeans(&index, 2, 3).unwrap();
        let first = got.labels["p000"];
        for i in 0..15 {
            assert_eq!(got.labels[&format!("p{i:03}")], first);
        }
        let second = got.labels["p015"];
        assert_ne!(first, second);
        for i in 15..30 {
            assert_eq!(got.labels[&format!("p{i:03}")], second);
        }
    }

    #[test]
    fn inertia_non_increasing_and_consistent() {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let vectors: Vec<Vec<f64>> = (0..40).map(|_| rng_vec(&mut rng, 8)).collect();
            let index = index_from(vectors);
            let got = kmeans(&index, 5, seed).unwrap();
            for w in got.inertia_history.windows(2) {
                assert!(
                    w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0),
                    "seed {seed}: inertia rose {} -> {}",
                    w[0],
                    w[1]
                );
            }
            let recomputed = got.recompute_inertia(&index);
            assert!((recomputed - got.inertia).abs() <= 1e-9 * got.inertia.max(1.0));
            assert!(got.converged);
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let vectors: Vec<Vec<f64>> = (0..25).map(|_| rng_vec(&mut rng, 5)).collect();
        let index = index_from(vectors);
        let a = kmeans(&index, 4, 11).unwrap();
        let b = kmeans(&index, 4, 11).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.centroids, b.centroids);
        assert_eq!(a.inertia.to_bits(), b.inertia.to_bits());
    }

    #[test]
    fn c_larger_than_n_rejected() {
        let index = index_from(vec![vec![0.0], vec![1.0]]);
        assert!(matches!(
            kmeans(&index, 3, 0),
            Err(SelectionError::CTooLarge { .. })
        ));
    }
}
