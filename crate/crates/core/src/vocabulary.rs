//! Visual vocabulary: k-means clustering of descriptors, appearance
//! frequency matrix, and tf-idf weighting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptors::DescriptorSet;
use crate::imaging::FrameLabel;

/// Cluster count used when nothing else is configured.
pub const DEFAULT_CLUSTERS: usize = 1000;
const MAX_LLOYD_ITERATIONS: usize = 100;

#[derive(Debug, Error)]
pub enum VocabularyError {
    #[error("insufficient data: {points} descriptors for k={k}")]
    InsufficientData { points: usize, k: usize },
}

/// Trained visual vocabulary, serialized inside the model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    /// k rows of descriptor-dimensional centroids.
    pub centroids: Vec<Vec<f64>>,
    pub k: usize,
    /// Inverse document frequency per cluster, from the training corpus.
    pub idf: Vec<f64>,
    pub rng_seed: u64,
}

/// Per-image cluster counts with row labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyMatrix {
    /// m rows (images) of k columns (clusters).
    pub counts: Vec<Vec<u32>>,
    pub labels: Vec<FrameLabel>,
}

/// One image's tf-idf-weighted histogram over the vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct BowVector {
    pub values: Vec<f64>,
}

/// k-means output: centroids plus the trace the tests inspect.
#[derive(Debug, Clone)]
pub struct KmeansResult {
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Objective (sum of squared distances) after every assignment pass.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
}

fn widen(p: &[f32]) -> Vec<f64> {
    p.iter().map(|&v| f64::from(v)).collect()
}

/// Dot product with four independent accumulator lanes. The summation order
/// is fixed (hence deterministic and portable); the independent lanes break
/// the floating-point dependency chain that would otherwise serialize the
/// clustering hot loop.
fn dot4(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    debug_assert_eq!(n, b.len());
    let (mut s0, mut s1, mut s2, mut s3) = (0.0f64, 0.0, 0.0, 0.0);
    let chunks = n / 4;
    for i in 0..chunks {
        let j = i * 4;
        s0 += a[j] * b[j];
        s1 += a[j + 1] * b[j + 1];
        s2 += a[j + 2] * b[j + 2];
        s3 += a[j + 3] * b[j + 3];
    }
    let mut rest = 0.0;
    for j in chunks * 4..n {
        rest += a[j] * b[j];
    }
    (s0 + s1) + (s2 + s3) + rest
}

fn sq_norm(v: &[f64]) -> f64 {
    dot4(v, v)
}

/// Index of the nearest centroid by the expanded squared distance
/// |c|^2 - 2 p.c (the |p|^2 term is constant per point); ties go to the
/// lowest index. One shared implementation keeps training and prediction
/// assignments bit-consistent.
fn nearest(point: &[f64], centroids: &[Vec<f64>], centroid_norms: &[f64]) -> usize {
    let mut best = 0usize;
    let mut best_score = f64::INFINITY;
    for (j, c) in centroids.iter().enumerate() {
        let score = centroid_norms[j] - 2.0 * dot4(point, c);
        if score < best_score {
            best_score = score;
            best = j;
        }
    }
    best
}

/// Definition-form squared Euclidean distance, used for objectives. Same
/// four-lane fixed-order accumulation as `dot4`.
fn sq_dist(p: &[f64], c: &[f64]) -> f64 {
    let n = p.len();
    debug_assert_eq!(n, c.len());
    let (mut s0, mut s1, mut s2, mut s3) = (0.0f64, 0.0, 0.0, 0.0);
    let chunks = n / 4;
    for i in 0..chunks {
        let j = i * 4;
        let d0 = p[j] - c[j];
        let d1 = p[j + 1] - c[j + 1];
        let d2 = p[j + 2] - c[j + 2];
        let d3 = p[j + 3] - c[j + 3];
        s0 += d0 * d0;
        s1 += d1 * d1;
        s2 += d2 * d2;
        s3 += d3 * d3;
    }
    let mut rest = 0.0;
    for j in chunks * 4..n {
        let d = p[j] - c[j];
        rest += d * d;
    }
    (s0 + s1) + (s2 + s3) + rest
}

/// Nearest-centroid index for one descriptor; ties break to the lowest index.
pub fn assign(descriptor: &[f32], centroids: &[Vec<f64>]) -> usize {
    let norms: Vec<f64> = centroids.iter().map(|c| sq_norm(c)).collect();
    nearest(&widen(descriptor), centroids, &norms)
}

fn assign_all(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> Vec<usize> {
    let norms: Vec<f64> = centroids.iter().map(|c| sq_norm(c)).collect();
    points.iter().map(|p| nearest(p, centroids, &norms)).collect()
}

fn objective(points: &[Vec<f64>], centroids: &[Vec<f64>], assignments: &[usize]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &a)| sq_dist(p, &centroids[a]))
        .sum()
}

/// Seeded k-means++ initialization.
fn init_centroids(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let first = rng.gen_range(0..n);
    let mut centroids: Vec<Vec<f64>> = vec![points[first].clone()];
    // Squared distance to the nearest chosen centroid so far.
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let chosen = if total > 0.0 {
            let r = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut idx = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc >= r {
                    idx = i;
                    break;
                }
            }
            idx
        } else {
            // All points coincide with chosen centroids.
            rng.gen_range(0..n)
        };
        let c = points[chosen].clone();
        for (i, p) in points.iter().enumerate() {
            let d = sq_dist(p, &c);
            if d < d2[i] {
                d2[i] = d;
            }
        }
        centroids.push(c);
    }
    centroids
}

/// Lloyd's algorithm with k-means++ initialization. Runs until the
/// assignment reaches a fixpoint or 100 iterations. Empty clusters are
/// re-seeded to the point currently farthest from its assigned centroid.
/// Deterministic given (input order, k, seed).
pub fn kmeans(points: &[&[f32]], k: usize, seed: u64) -> Result<KmeansResult, VocabularyError> {
    if points.len() < k || k == 0 {
        return Err(VocabularyError::InsufficientData {
            points: points.len(),
            k,
        });
    }
    let points: Vec<Vec<f64>> = points.iter().map(|p| widen(p)).collect();
    let dim = points[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = init_centroids(&points, k, &mut rng);

    let mut assignments = assign_all(&points, &centroids);
    let mut history = vec![objective(&points, &centroids, &assignments)];
    let mut iterations = 0;
    for _ in 0..MAX_LLOYD_ITERATIONS {
        iterations += 1;
        // Means of each cluster, accumulated in point-index order.
        let mut sums = vec![vec![0.0f64; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                for (c, s) in centroids[j].iter_mut().zip(&sums[j]) {
                    *c = s / counts[j] as f64;
                }
            }
        }
        // Re-seed empty clusters to the globally worst-fit point.
        for j in 0..k {
            if counts[j] > 0 {
                continue;
            }
            let worst = points
                .iter()
                .zip(&assignments)
                .enumerate()
                .map(|(i, (p, &a))| (i, sq_dist(p, &centroids[a])))
                .max_by(|(ia, da), (ib, db)| da.partial_cmp(db).unwrap().then(ib.cmp(ia)))
                .map(|(i, _)| i)
                .unwrap();
            centroids[j] = points[worst].clone();
            assignments[worst] = j;
            counts[j] = 1;
        }

        let next = assign_all(&points, &centroids);
        history.push(objective(&points, &centroids, &next));
        let converged = next == assignments;
        assignments = next;
        if converged {
            break;
        }
    }
    Ok(KmeansResult {
        centroids,
        assignments,
        objective_history: history,
        iterations,
    })
}

/// A[i][j] = number of image-i descriptors assigned to cluster j.
pub fn build_frequency_matrix(
    sets: &[DescriptorSet],
    labels: &[FrameLabel],
    centroids: &[Vec<f64>],
) -> FrequencyMatrix {
    assert_eq!(sets.len(), labels.len(), "one label per image");
    let norms: Vec<f64> = centroids.iter().map(|c| sq_norm(c)).collect();
    let counts = sets
        .iter()
        .map(|set| {
            let mut row = vec![0u32; centroids.len()];
            for d in &set.descriptors {
                row[nearest(&widen(&d.values), centroids, &norms)] += 1;
            }
            row
        })
        .collect();
    FrequencyMatrix {
        counts,
        labels: labels.to_vec(),
    }
}

/// Term frequency of cluster j within one image's count row; 0 for an
/// image without descriptors.
pub fn tf(row: &[u32], j: usize) -> f64 {
    let total: u64 = row.iter().map(|&c| u64::from(c)).sum();
    if total == 0 {
        0.0
    } else {
        f64::from(row[j]) / total as f64
    }
}

/// Inverse document frequency ln(m / df); 0 for clusters unseen in training
/// (df = 0) so prediction-time weights stay bounded.
pub fn idf(df: usize, m: usize) -> f64 {
    if df == 0 {
        0.0
    } else {
        (m as f64 / df as f64).ln()
    }
}

/// Per-cluster document frequencies of a count matrix.
pub fn document_frequencies(matrix: &FrequencyMatrix) -> Vec<usize> {
    let k = matrix.counts.first().map_or(0, Vec::len);
    (0..k)
        .map(|j| matrix.counts.iter().filter(|row| row[j] > 0).count())
        .collect()
}

/// tf-idf weighting of the whole matrix; returns the weighted rows and the
/// idf vector (which the vocabulary stores for prediction).
pub fn tfidf_weight(matrix: &FrequencyMatrix) -> (Vec<Vec<f64>>, Vec<f64>) {
    let m = matrix.counts.len();
    let idf_vec: Vec<f64> = document_frequencies(matrix)
        .iter()
        .map(|&df| idf(df, m))
        .collect();
    let weighted = matrix
        .counts
        .iter()
        .map(|row| {
            (0..row.len())
                .map(|j| tf(row, j) * idf_vec[j])
                .collect::<Vec<f64>>()
        })
        .collect();
    (weighted, idf_vec)
}

/// One image's tf-idf histogram against a trained vocabulary.
pub fn bow_vector(set: &DescriptorSet, vocab: &Vocabulary) -> BowVector {
    let norms: Vec<f64> = vocab.centroids.iter().map(|c| sq_norm(c)).collect();
    let mut row = vec![0u32; vocab.k];
    for d in &set.descriptors {
        row[nearest(&widen(&d.values), &vocab.centroids, &norms)] += 1;
    }
    let values = (0..vocab.k).map(|j| tf(&row, j) * vocab.idf[j]).collect();
    BowVector { values }
}
