//! Camera appearance embeddings for proposals.
//!
//! Each proposal point is projected into every camera of its own source
//! frame; the feature cell under the projection is sampled (nearest patch,
//! no interpolation, no occlusion test). A point's feature is the mean over
//! the cameras that see it, and the embedding is the mean over points.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dataset_io::{project_to_image, DatasetError, FeatureMap, Frame};
use crate::spatial_clustering::{AggregatedCloud, ObjectProposal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppearanceEmbedding {
    pub proposal_id: usize,
    pub vector: Vec<f32>,
    /// Fraction of proposal points seen by at least one camera.
    pub coverage: f64,
}

impl AppearanceEmbedding {
    /// Proposals no camera sees cannot be clustered by appearance.
    pub fn is_embeddable(&self) -> bool {
        self.coverage > 0.0
    }
}

/// Feature cell under pixel `(u, v)`: row `floor(v / patch)`, column
/// `floor(u / patch)`, clamped to the grid.
///
/// # Panics
///
/// Panics when the pixel is negative or non-finite.
pub fn sample_feature(fmap: &FeatureMap, u: f64, v: f64) -> &[f32] {
    assert!(
        u.is_finite() && v.is_finite() && u >= 0.0 && v >= 0.0,
        "pixel ({u}, {v}) outside the image"
    );
    let p = fmap.patch_size() as f64;
    let row = ((v / p).floor() as usize).min(fmap.height().saturating_sub(1));
    let col = ((u / p).floor() as usize).min(fmap.width().saturating_sub(1));
    fmap.cell(row, col)
}

/// Feature maps for `(sequence position, camera slot)` pairs.
pub trait FeatureSource {
    fn feature_map(&self, frame: usize, camera: usize) -> Option<&FeatureMap>;
}

/// Eagerly loaded feature maps.
#[derive(Debug, Default)]
pub struct FeatureCache {
    maps: HashMap<(usize, usize), FeatureMap>,
}

impl FeatureCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, frame: usize, camera: usize, map: FeatureMap) {
        self.maps.insert((frame, camera), map);
    }

    /// Loads and validates every camera's feature map for the given frames.
    pub fn load(
        frames: &[Frame],
        positions: impl IntoIterator<Item = usize>,
    ) -> Result<Self, DatasetError> {
        let mut cache = Self::new();
        for f in positions {
            for (slot, cam) in frames[f].cameras.iter().enumerate() {
                let map = cam.feature.load()?;
                map.check_image_size(cam.calib.width, cam.calib.height)
                    .map_err(|e| {
                        DatasetError::Invalid(format!("{}: {e}", cam.feature.path.display()))
                    })?;
                cache.insert(f, slot, map);
            }
        }
        Ok(cache)
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }
}

impl FeatureSource for FeatureCache {
    fn feature_map(&self, frame: usize, camera: usize) -> Option<&FeatureMap> {
        self.maps.get(&(frame, camera))
    }
}

/// Averages sampled camera features over a proposal's points.
///
/// Returns a zero vector of `channels` entries with coverage 0 when no point
/// lands in any camera.
pub fn embed_proposal(
    proposal: &ObjectProposal,
    agg: &AggregatedCloud,
    frames: &[Frame],
    features: &dyn FeatureSource,
    channels: usize,
) -> AppearanceEmbedding {
    let mut sum = vec![0.0f64; channels];
    let mut contributing = 0usize;
    let mut point_sum = vec![0.0f64; channels];
    for (&f, idx) in &proposal.slices {
        let frame = &frames[f];
        let pts: Vec<[f64; 3]> = idx.iter().map(|&i| agg.points[i]).collect();
        let mut hits = vec![0u32; pts.len()];
        let mut per_point = vec![0.0f64; pts.len() * channels];
        for (slot, cam) in frame.cameras.iter().enumerate() {
            let Some(fmap) = features.feature_map(f, slot) else {
                continue;
            };
            for (k, proj) in project_to_image(&pts, &cam.calib, &frame.ego_pose)
                .into_iter()
                .enumerate()
            {
                let Some(pr) = proj else { continue };
                let cell = sample_feature(fmap, pr.u, pr.v);
                for (acc, &x) in per_point[k * channels..(k + 1) * channels]
                    .iter_mut()
                    .zip(cell)
                {
                    *acc += x as f64;
                }
                hits[k] += 1;
            }
        }
        for (k, &h) in hits.iter().enumerate() {
            if h == 0 {
                continue;
            }
            contributing += 1;
            for (c, acc) in point_sum.iter_mut().enumerate() {
                *acc = per_point[k * channels + c] / h as f64;
            }
            for (s, x) in sum.iter_mut().zip(&point_sum) {
                *s += x;
            }
        }
    }
    let total = proposal.point_indices.len();
    let vector = if contributing > 0 {
        sum.iter()
            .map(|s| (s / contributing as f64) as f32)
            .collect()
    } else {
        vec![0.0; channels]
    };
    AppearanceEmbedding {
        proposal_id: proposal.id,
        vector,
        coverage: if total > 0 {
            contributing as f64 / total as f64
        } else {
            0.0
        },
    }
}
