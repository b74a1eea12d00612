//! Multi-restart Lloyd brute force for small k-means instances.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Sum of squared distances from each vector to its closest centroid.
pub fn objective(vectors: &[Vec<f64>], centroids: &[Vec<f64>]) -> f64 {
    vectors
        .iter()
        .map(|v| {
            centroids
                .iter()
                .map(|c| sq(v, c))
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

fn lloyd_from(vectors: &[Vec<f64>], mut centroids: Vec<Vec<f64>>) -> f64 {
    let dim = vectors[0].len();
    let mut labels = vec![usize::MAX; vectors.len()];
    for _ in 0..1000 {
        let mut changed = false;
        for (i, v) in vectors.iter().enumerate() {
            let mut best = 0;
            for c in 1..centroids.len() {
                if sq(v, &centroids[c]) < sq(v, &centroids[best]) {
                    best = c;
                }
            }
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = vectors
                .iter()
                .zip(&labels)
                .filter(|(_, &l)| l == c)
                .map(|(v, _)| v)
                .collect();
            if members.is_empty() {
                continue;
            }
            *centroid = (0..dim)
                .map(|d| members.iter().map(|m| m[d]).sum::<f64>() / members.len() as f64)
                .collect();
        }
    }
    objective(vectors, &centroids)
}

/// Best objective over `restarts` Lloyd runs from uniformly drawn distinct
/// data points.
pub fn best_objective(vectors: &[Vec<f64>], k: usize, restarts: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..restarts)
        .map(|_| {
            let init = sample(&mut rng, vectors.len(), k)
                .into_iter()
                .map(|i| vectors[i].clone())
                .collect();
            lloyd_from(vectors, init)
        })
        .fold(f64::INFINITY, f64::min)
}
