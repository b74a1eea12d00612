use nalgebra::{Isometry3, Quaternion, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::DatasetError;

/// Tolerance accepted on a stored quaternion's norm before renormalizing.
pub const QUATERNION_NORM_TOLERANCE: f64 = 1e-6;

/// Rigid transform: unit quaternion rotation followed by a translation in meters.
///
/// `Pose` maps points from a child frame into its parent frame; e.g. an ego
/// pose maps ego coordinates into the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseRecord", into = "PoseRecord")]
pub struct Pose {
    iso: Isometry3<f64>,
}

/// On-disk pose: `q` is `[w, x, y, z]`, `t` is `[x, y, z]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub q: [f64; 4],
    pub t: [f64; 3],
}

impl TryFrom<PoseRecord> for Pose {
    type Error = DatasetError;

    fn try_from(r: PoseRecord) -> Result<Self, Self::Error> {
        Pose::from_parts(r.q, r.t)
    }
}

impl From<Pose> for PoseRecord {
    fn from(p: Pose) -> Self {
        PoseRecord {
            q: p.quaternion(),
            t: p.translation(),
        }
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            iso: Isometry3::identity(),
        }
    }

    /// Builds a pose from a `[w, x, y, z]` quaternion and translation.
    pub fn from_parts(q: [f64; 4], t: [f64; 3]) -> Result<Self, DatasetError> {
        if q.iter().chain(t.iter()).any(|v| !v.is_finite()) {
            return Err(DatasetError::Invalid("pose has non-finite entries".into()));
        }
        let quat = Quaternion::new(q[0], q[1], q[2], q[3]);
        let norm = quat.norm();
        if (norm - 1.0).abs() > QUATERNION_NORM_TOLERANCE {
            return Err(DatasetError::Invalid(format!(
                "pose quaternion norm {norm} is not 1"
            )));
        }
        Ok(Pose {
            iso: Isometry3::from_parts(
                Translation3::new(t[0], t[1], t[2]),
                UnitQuaternion::new_normalize(quat),
            ),
        })
    }

    /// Rotation about +z by `yaw` radians, then translation.
    pub fn from_yaw(yaw: f64, t: [f64; 3]) -> Self {
        Pose {
            iso: Isometry3::from_parts(
                Translation3::new(t[0], t[1], t[2]),
                UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw),
            ),
        }
    }

    pub fn from_isometry(iso: Isometry3<f64>) -> Self {
        Pose { iso }
    }

    pub fn isometry(&self) -> &Isometry3<f64> {
        &self.iso
    }

    /// `[w, x, y, z]`.
    pub fn quaternion(&self) -> [f64; 4] {
        let q = self.iso.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn translation(&self) -> [f64; 3] {
        let t = self.iso.translation.vector;
        [t.x, t.y, t.z]
    }

    pub fn yaw(&self) -> f64 {
        self.iso.rotation.euler_angles().2
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            iso: self.iso * other.iso,
        }
    }

    pub fn inverse(&self) -> Pose {
        Pose {
            iso: self.iso.inverse(),
        }
    }

    pub fn transform_point(&self, p: [f64; 3]) -> [f64; 3] {
        let q = self
            .iso
            .transform_point(&nalgebra::Point3::new(p[0], p[1], p[2]));
        [q.x, q.y, q.z]
    }

    /// Largest absolute entry difference between two poses' homogeneous matrices.
    pub fn max_abs_diff(&self, other: &Pose) -> f64 {
        let a = self.iso.to_homogeneous();
        let b = other.iso.to_homogeneous();
        (a - b).abs().max()
    }
}
