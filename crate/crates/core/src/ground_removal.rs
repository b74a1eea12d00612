//! RANSAC ground-plane fitting and non-ground point extraction.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par;

#[derive(Debug, Error, PartialEq)]
pub enum GroundError {
    #[error("degenerate geometry: {0}")]
    Degenerate(String),
}

/// Plane `normal · p = offset` with a unit, upward-facing normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneModel {
    pub normal: [f64; 3],
    pub offset: f64,
}

impl PlaneModel {
    pub fn horizontal(height: f64) -> Self {
        PlaneModel {
            normal: [0.0, 0.0, 1.0],
            offset: height,
        }
    }

    /// Builds a canonical plane (unit normal, `normal.z > 0`).
    pub fn new(normal: [f64; 3], offset: f64) -> Option<Self> {
        let n = Vector3::from(normal);
        let len = n.norm();
        if !(len > 0.0) || !offset.is_finite() {
            return None;
        }
        let (mut n, mut offset) = (n / len, offset / len);
        if n.z < 0.0 {
            n = -n;
            offset = -offset;
        }
        (n.z > 0.0).then_some(PlaneModel {
            normal: [n.x, n.y, n.z],
            offset,
        })
    }

    pub fn signed_height(&self, p: &[f64; 3]) -> f64 {
        self.normal[0] * p[0] + self.normal[1] * p[1] + self.normal[2] * p[2] - self.offset
    }

    /// z of the plane at `(x, y)`.
    pub fn z_at(&self, x: f64, y: f64) -> f64 {
        (self.offset - self.normal[0] * x - self.normal[1] * y) / self.normal[2]
    }

    /// Angle between the normal and +z, radians.
    pub fn tilt(&self) -> f64 {
        self.normal[2].clamp(-1.0, 1.0).acos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RansacParams {
    /// Inlier band half-width, meters.
    pub inlier_threshold: f64,
    pub max_iterations: usize,
    /// Candidates tilted further than this from +z are rejected, degrees.
    pub max_tilt_deg: f64,
}

impl Default for RansacParams {
    fn default() -> Self {
        RansacParams {
            inlier_threshold: 0.05,
            max_iterations: 200,
            max_tilt_deg: 30.0,
        }
    }
}

/// Indices of the non-ground points of one frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NonGroundCloud {
    /// Sequence position of the source frame.
    pub frame: usize,
    /// Strictly increasing indices into the source cloud.
    pub indices: Vec<u32>,
}

fn plane_through(a: &[f64; 3], b: &[f64; 3], c: &[f64; 3]) -> Option<PlaneModel> {
    let (a, b, c) = (Vector3::from(*a), Vector3::from(*b), Vector3::from(*c));
    let n = (b - a).cross(&(c - a));
    let scale = (b - a).norm() * (c - a).norm();
    if !(n.norm() > 1e-12 * scale.max(f64::MIN_POSITIVE)) {
        return None;
    }
    PlaneModel::new([n.x, n.y, n.z], n.dot(&a))
}

fn all_collinear(points: &[[f64; 3]]) -> bool {
    let a = Vector3::from(points[0]);
    let Some(b) = points
        .iter()
        .map(|p| Vector3::from(*p))
        .find(|p| (p - a).norm() > 1e-12)
    else {
        return true;
    };
    let dir = (b - a).normalize();
    points.iter().all(|p| {
        let d = Vector3::from(*p) - a;
        d.cross(&dir).norm() <= 1e-9 * d.norm().max(1.0)
    })
}

/// Total least-squares plane through `points` (normal = smallest principal axis).
pub fn least_squares_plane(points: &[[f64; 3]]) -> Option<PlaneModel> {
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let centroid = points
        .iter()
        .fold(Vector3::zeros(), |acc, p| acc + Vector3::from(*p))
        / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = Vector3::from(*p) - centroid;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let (imin, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    let normal = eig.eigenvectors.column(imin).into_owned();
    PlaneModel::new([normal.x, normal.y, normal.z], normal.dot(&centroid))
}

/// RANSAC plane fit with a least-squares refit on the winning inlier set.
///
/// Candidate planes are drawn from a seeded ChaCha stream, so the result is a
/// pure function of `(points, params, seed)`. Ties in inlier count keep the
/// earliest candidate.
pub fn fit_ground_plane(
    points: &[[f64; 3]],
    params: &RansacParams,
    seed: u64,
) -> Result<PlaneModel, GroundError> {
    if points.len() < 3 {
        return Err(GroundError::Degenerate(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    if all_collinear(points) {
        return Err(GroundError::Degenerate("all points are collinear".into()));
    }
    let max_tilt = params.max_tilt_deg.to_radians();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = points.len();
    let candidates: Vec<Option<PlaneModel>> = (0..params.max_iterations)
        .map(|_| {
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            let mut k = rng.random_range(0..n - 2);
            for taken in [i.min(j), i.max(j)] {
                if k >= taken {
                    k += 1;
                }
            }
            plane_through(&points[i], &points[j], &points[k]).filter(|p| p.tilt() <= max_tilt)
        })
        .collect();
    let counts = par::map(&candidates, |cand| {
        cand.map(|plane| {
            points
                .iter()
                .filter(|p| plane.signed_height(p).abs() <= params.inlier_threshold)
                .count()
        })
    });
    let best = candidates
        .iter()
        .zip(&counts)
        .filter_map(|(c, n)| Some((c.as_ref()?, (*n)?)))
        .fold(None::<(&PlaneModel, usize)>, |best, (c, n)| match best {
            Some((_, bn)) if bn >= n => best,
            _ => Some((c, n)),
        });
    let Some((plane, _)) = best else {
        return Err(GroundError::Degenerate(
            "no admissible (near-horizontal, non-collinear) candidate plane".into(),
        ));
    };
    let inliers: Vec<[f64; 3]> = points
        .iter()
        .filter(|p| plane.signed_height(p).abs() <= params.inlier_threshold)
        .copied()
        .collect();
    Ok(least_squares_plane(&inliers).unwrap_or(*plane))
}

/// Points strictly more than `height_cutoff` above `plane`.
pub fn extract_non_ground(
    points: &[[f64; 3]],
    frame: usize,
    plane: &PlaneModel,
    height_cutoff: f64,
) -> NonGroundCloud {
    NonGroundCloud {
        frame,
        indices: points
            .iter()
            .enumerate()
            .filter(|(_, p)| plane.signed_height(p) > height_cutoff)
            .map(|(i, _)| i as u32)
            .collect(),
    }
}
