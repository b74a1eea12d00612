//! Seeded k-means++ with Lloyd iterations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::DiscoveryError;
use crate::par;

pub const DEFAULT_MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// Cluster index (0-based) per input vector.
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances after each assignment step.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
}

impl KMeansResult {
    pub fn objective(&self) -> f64 {
        self.objective_history.last().copied().unwrap_or(0.0)
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid, ties to the lowest index.
fn nearest(v: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.iter().enumerate() {
        let d = squared_distance(v, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// Greedy k-means++ seeding: the first center is uniform; each further step
/// draws `2 + ⌊ln k⌋` candidates proportional to squared distance from the
/// closest chosen center and keeps the one giving the lowest potential.
pub fn kmeans_plus_plus(vectors: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = vectors.len();
    let trials = 2 + (k as f64).ln().floor() as usize;
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = vectors
        .iter()
        .map(|v| squared_distance(v, &vectors[chosen[0]]))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        if !(total > 0.0) {
            // Every remaining point coincides with a center.
            let next = (0..n).find(|i| !chosen.contains(i)).unwrap_or(0);
            chosen.push(next);
            continue;
        }
        let candidates: Vec<usize> = (0..trials)
            .map(|_| weighted_pick(&d2, rng.random::<f64>() * total))
            .collect();
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for c in candidates {
            let next_d2: Vec<f64> =
                par::map_range(n, |i| d2[i].min(squared_distance(&vectors[i], &vectors[c])));
            let potential: f64 = next_d2.iter().sum();
            if best.as_ref().is_none_or(|b| potential < b.0) {
                best = Some((potential, c, next_d2));
            }
        }
        let (_, c, next_d2) = best.expect("at least two trials");
        chosen.push(c);
        d2 = next_d2;
    }
    chosen.into_iter().map(|i| vectors[i].clone()).collect()
}

fn weighted_pick(weights: &[f64], mut target: f64) -> usize {
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        if target < w {
            return i;
        }
        target -= w;
    }
    // Rounding can walk past the end; fall back to the last positive weight.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Lloyd iterations from the given centroids until the assignment is a fixed
/// point or `max_iterations` is reached. Empty clusters keep their centroid.
pub fn lloyd(
    vectors: &[Vec<f64>],
    mut centroids: Vec<Vec<f64>>,
    max_iterations: usize,
) -> KMeansResult {
    let dim = vectors.first().map_or(0, Vec::len);
    let k = centroids.len();
    let mut assignment: Vec<usize> = Vec::new();
    let mut history = Vec::new();
    let mut iterations = 0;
    while iterations < max_iterations.max(1) {
        iterations += 1;
        let step = par::map(vectors, |v| nearest(v, &centroids));
        let objective: f64 = step.iter().map(|x| x.1).sum();
        history.push(objective);
        let next: Vec<usize> = step.into_iter().map(|x| x.0).collect();
        let changed = next != assignment;
        assignment = next;
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (v, &a) in vectors.iter().zip(&assignment) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(v) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    KMeansResult {
        assignment,
        centroids,
        objective_history: history,
        iterations,
    }
}

/// Single seeded k-means++ run followed by Lloyd iterations.
pub fn kmeans(vectors: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeansResult, DiscoveryError> {
    kmeans_with(vectors, k, seed, DEFAULT_MAX_ITERATIONS)
}

pub fn kmeans_with(
    vectors: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iterations: usize,
) -> Result<KMeansResult, DiscoveryError> {
    if k == 0 {
        return Err(DiscoveryError::InvalidK {
            k,
            available: vectors.len(),
        });
    }
    if vectors.is_empty() || k > vectors.len() {
        return Err(DiscoveryError::InvalidK {
            k,
            available: vectors.len(),
        });
    }
    let dim = vectors[0].len();
    if let Some(bad) = vectors.iter().position(|v| v.len() != dim) {
        return Err(DiscoveryError::DimensionMismatch {
            expected: dim,
            found: vectors[bad].len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = kmeans_plus_plus(vectors, k, &mut rng);
    Ok(lloyd(vectors, init, max_iterations))
}
