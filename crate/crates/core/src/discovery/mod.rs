//! Mobile-object discovery from appearance clusters.
//!
//! All embedded proposals (static and dynamic, pooled over every scene) are
//! L2-normalized and clustered with k-means. A cluster is mobile when at least
//! a fraction `X` of its member proposals are dynamic; every member of a
//! mobile cluster becomes a mobile object, whatever its own motion state.

mod kmeans;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::appearance::AppearanceEmbedding;
use crate::dataset_io::{read_json, DatasetError};
use crate::motion_estimation::MotionEstimate;

pub use kmeans::{
    kmeans, kmeans_plus_plus, kmeans_with, lloyd, squared_distance, KMeansResult,
    DEFAULT_MAX_ITERATIONS,
};

#[derive(Debug, Error, PartialEq)]
pub enum DiscoveryError {
    #[error("cannot form {k} clusters from {available} vectors")]
    InvalidK { k: usize, available: usize },
    #[error("vector dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("zero-norm vector at index {0}")]
    ZeroNorm(usize),
    #[error("prototype {0} is not unit norm")]
    NotNormalized(String),
}

/// Default dynamic-fraction threshold for a mobile cluster.
pub const DEFAULT_MOBILE_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppearanceCluster {
    /// 1-based.
    pub cluster_id: usize,
    /// Indices of member proposals in the discovery input.
    pub members: Vec<usize>,
    pub centroid: Vec<f32>,
    pub dynamic_count: usize,
    pub dynamic_fraction: f64,
    pub is_mobile: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobileObject {
    pub proposal_id: usize,
    pub motion: MotionEstimate,
    pub embedding: AppearanceEmbedding,
    /// 1-based pseudo-class, once assigned.
    pub pseudo_class: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPrototype {
    pub class_name: String,
    pub vector: Vec<f32>,
}

/// Unit tolerance on stored prototype vectors.
pub const PROTOTYPE_NORM_TOLERANCE: f64 = 1e-6;

fn norm(v: &[f32]) -> f64 {
    v.iter()
        .map(|&x| (x as f64) * (x as f64))
        .sum::<f64>()
        .sqrt()
}

/// L2-normalizes each vector into f64.
pub fn normalize_all(vectors: &[&[f32]]) -> Result<Vec<Vec<f64>>, DiscoveryError> {
    vectors
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let n = norm(v);
            if !(n > 0.0) || !n.is_finite() {
                return Err(DiscoveryError::ZeroNorm(i));
            }
            Ok(v.iter().map(|&x| x as f64 / n).collect())
        })
        .collect()
}

/// Sets `is_mobile ⇔ dynamic_fraction ≥ threshold`.
pub fn classify_clusters(clusters: &mut [AppearanceCluster], threshold: f64) {
    for c in clusters {
        c.is_mobile = c.dynamic_fraction >= threshold;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscoveryOutcome {
    pub clusters: Vec<AppearanceCluster>,
    /// Indices into the discovery input of members of mobile clusters, ascending.
    pub mobile: Vec<usize>,
    /// The k actually used (lowered when there are fewer inputs than requested).
    pub k: usize,
}

/// Joint appearance clustering of static and dynamic proposals.
///
/// `embeddings[i]` and `is_dynamic[i]` describe input proposal `i`; every
/// embedding must have non-zero norm (route unembeddable proposals out first).
pub fn discover(
    embeddings: &[&[f32]],
    is_dynamic: &[bool],
    k1: usize,
    threshold: f64,
    seed: u64,
) -> Result<DiscoveryOutcome, DiscoveryError> {
    assert_eq!(embeddings.len(), is_dynamic.len());
    if embeddings.is_empty() {
        return Ok(DiscoveryOutcome {
            clusters: Vec::new(),
            mobile: Vec::new(),
            k: 0,
        });
    }
    let vectors = normalize_all(embeddings)?;
    let k = if k1 > vectors.len() {
        tracing::warn!(
            "only {} proposals for {k1} appearance clusters; using k = {}",
            vectors.len(),
            vectors.len()
        );
        vectors.len()
    } else {
        k1
    };
    let result = kmeans(&vectors, k, seed)?;
    let mut clusters: Vec<AppearanceCluster> = result
        .centroids
        .iter()
        .enumerate()
        .map(|(c, centroid)| AppearanceCluster {
            cluster_id: c + 1,
            members: Vec::new(),
            centroid: centroid.iter().map(|&x| x as f32).collect(),
            dynamic_count: 0,
            dynamic_fraction: 0.0,
            is_mobile: false,
        })
        .collect();
    for (i, &a) in result.assignment.iter().enumerate() {
        clusters[a].members.push(i);
        if is_dynamic[i] {
            clusters[a].dynamic_count += 1;
        }
    }
    for c in &mut clusters {
        if !c.members.is_empty() {
            c.dynamic_fraction = c.dynamic_count as f64 / c.members.len() as f64;
        }
    }
    classify_clusters(&mut clusters, threshold);
    let mut mobile: Vec<usize> = clusters
        .iter()
        .filter(|c| c.is_mobile)
        .flat_map(|c| c.members.iter().copied())
        .collect();
    mobile.sort_unstable();
    Ok(DiscoveryOutcome {
        clusters,
        mobile,
        k,
    })
}

/// Clusters mobile objects into `k2` appearance pseudo-classes (1-based
/// labels). Returns the pseudo-class centroids in label order.
pub fn assign_pseudo_classes(
    mobiles: &mut [MobileObject],
    k2: usize,
    seed: u64,
) -> Result<Vec<Vec<f32>>, DiscoveryError> {
    if k2 == 0 || k2 > mobiles.len() {
        return Err(DiscoveryError::InvalidK {
            k: k2,
            available: mobiles.len(),
        });
    }
    let refs: Vec<&[f32]> = mobiles
        .iter()
        .map(|m| m.embedding.vector.as_slice())
        .collect();
    let vectors = normalize_all(&refs)?;
    let result = kmeans(&vectors, k2, seed)?;
    for (m, &a) in mobiles.iter_mut().zip(&result.assignment) {
        m.pseudo_class = Some(a + 1);
    }
    Ok(result
        .centroids
        .iter()
        .map(|c| c.iter().map(|&x| x as f32).collect())
        .collect())
}

/// Maps each pseudo-class (1-based, in centroid order) to the real class with
/// the highest cosine similarity; ties go to the lowest prototype index.
pub fn match_prototypes(
    pseudo_centroids: &[Vec<f32>],
    prototypes: &[ClassPrototype],
) -> Result<BTreeMap<usize, String>, DiscoveryError> {
    let mut out = BTreeMap::new();
    if prototypes.is_empty() {
        return Ok(out);
    }
    let dim = prototypes[0].vector.len();
    let protos: Vec<(f64, &ClassPrototype)> = prototypes
        .iter()
        .map(|p| {
            if p.vector.len() != dim {
                return Err(DiscoveryError::DimensionMismatch {
                    expected: dim,
                    found: p.vector.len(),
                });
            }
            let n = norm(&p.vector);
            if !(n > 0.0) {
                return Err(DiscoveryError::NotNormalized(p.class_name.clone()));
            }
            Ok((n, p))
        })
        .collect::<Result<_, _>>()?;
    for (i, c) in pseudo_centroids.iter().enumerate() {
        if c.len() != dim {
            return Err(DiscoveryError::DimensionMismatch {
                expected: dim,
                found: c.len(),
            });
        }
        let cn = norm(c);
        if !(cn > 0.0) {
            return Err(DiscoveryError::ZeroNorm(i));
        }
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (r, (pn, p)) in protos.iter().enumerate() {
            let dot: f64 = c
                .iter()
                .zip(&p.vector)
                .map(|(&a, &b)| a as f64 * b as f64)
                .sum();
            let sim = dot / (cn * pn);
            if sim > best.0 {
                best = (sim, r);
            }
        }
        out.insert(i + 1, protos[best.1].1.class_name.clone());
    }
    Ok(out)
}

/// Reads `prototypes.json` and checks each vector is unit norm.
pub fn load_prototypes(path: &Path) -> Result<Vec<ClassPrototype>, DatasetError> {
    let protos: Vec<ClassPrototype> = read_json(path)?;
    for p in &protos {
        if (norm(&p.vector) - 1.0).abs() > PROTOTYPE_NORM_TOLERANCE {
            return Err(DatasetError::Invalid(format!(
                "{}: prototype {} is not unit norm",
                path.display(),
                p.class_name
            )));
        }
    }
    Ok(protos)
}

/// Per-class BEV footprint used for size-prior class assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizePrototype {
    pub class_name: String,
    pub length: f64,
    pub width: f64,
}

/// IoU of two centered, axis-aligned rectangles.
pub fn centered_rect_iou(a: (f64, f64), b: (f64, f64)) -> f64 {
    let inter = a.0.min(b.0).max(0.0) * a.1.min(b.1).max(0.0);
    let union = a.0 * a.1 + b.0 * b.1 - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// Index of the prototype whose centered footprint has the highest IoU with
/// each `(length, width)`; ties go to the lowest index.
pub fn size_prior_assign(footprints: &[(f64, f64)], prototypes: &[SizePrototype]) -> Vec<usize> {
    footprints
        .iter()
        .map(|&fp| {
            let mut best = (f64::NEG_INFINITY, 0usize);
            for (i, p) in prototypes.iter().enumerate() {
                let iou = centered_rect_iou(fp, (p.length, p.width));
                if iou > best.0 {
                    best = (iou, i);
                }
            }
            best.1
        })
        .collect()
}

/// Per-class prototype: the box with the median BEV area (lower median for
/// even counts). Classes are returned sorted by name.
pub fn median_area_prototypes<'a>(
    boxes: impl IntoIterator<Item = (&'a str, f64, f64)>,
) -> Vec<SizePrototype> {
    let mut by_class: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for (name, l, w) in boxes {
        by_class.entry(name).or_default().push((l, w));
    }
    by_class
        .into_iter()
        .map(|(name, mut dims)| {
            dims.sort_by(|a, b| {
                (a.0 * a.1)
                    .total_cmp(&(b.0 * b.1))
                    .then(a.0.total_cmp(&b.0))
            });
            let (length, width) = dims[(dims.len() - 1) / 2];
            SizePrototype {
                class_name: name.to_string(),
                length,
                width,
            }
        })
        .collect()
}
