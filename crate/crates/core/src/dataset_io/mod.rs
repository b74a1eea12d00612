//! On-disk dataset layout, in-memory frame model and frame transforms.
//!
//! A scene lives in `scene_<id>/`:
//!
//! ```text
//! frames.json           ordered frame records (poses, calibrations, file refs)
//! lidar/<n>.bin         UNPC point cloud, ego frame unless `lidar_extrinsic` is set
//! feat/<n>_<cam>.bin    UNFT feature map, channels-last
//! gt.json               ground-truth boxes per keyframe (evaluation only)
//! ```

mod binary;
mod pose;

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use binary::{
    encode_feature_map, encode_point_cloud, parse_feature_map, parse_point_cloud, read_feature_map,
    read_point_cloud, write_feature_map, write_point_cloud, FEATURE_MAP_MAGIC, POINT_CLOUD_MAGIC,
};
pub use pose::{Pose, PoseRecord, QUATERNION_NORM_TOLERANCE};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed data at byte {offset}: {message}")]
    Format {
        path: PathBuf,
        offset: usize,
        message: String,
    },
    #[error("{path}: invalid JSON: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

impl DatasetError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DatasetError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// One LiDAR sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct LidarCloud {
    pub points: Vec<[f32; 3]>,
    pub timestamp_us: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraCalib {
    pub camera_id: String,
    /// Row-major pinhole intrinsics.
    pub intrinsic: [[f64; 3]; 3],
    /// Camera → ego. Camera axes follow the optical convention (z forward, x right, y down).
    pub extrinsic: Pose,
    pub width: u32,
    pub height: u32,
}

impl CameraCalib {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let k = &self.intrinsic;
        if !(k[0][0] > 0.0 && k[1][1] > 0.0) {
            return Err(DatasetError::Invalid(format!(
                "camera {}: focal lengths must be positive",
                self.camera_id
            )));
        }
        if k[1][0] != 0.0 || k[2][0] != 0.0 || k[2][1] != 0.0 {
            return Err(DatasetError::Invalid(format!(
                "camera {}: intrinsic lower triangle must be zero",
                self.camera_id
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(DatasetError::Invalid(format!(
                "camera {}: image size must be positive",
                self.camera_id
            )));
        }
        Ok(())
    }

    fn intrinsic_matrix(&self) -> Matrix3<f64> {
        let k = &self.intrinsic;
        Matrix3::new(
            k[0][0], k[0][1], k[0][2], k[1][0], k[1][1], k[1][2], k[2][0], k[2][1], k[2][2],
        )
    }
}

/// Dense per-patch feature map `H_F × W_F × C_F`, channels-last.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    patch_size: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        patch_size: usize,
        data: Vec<f32>,
    ) -> Result<Self, DatasetError> {
        if height * width * channels != data.len() {
            return Err(DatasetError::Invalid(format!(
                "feature map {height}x{width}x{channels} does not match {} values",
                data.len()
            )));
        }
        if patch_size == 0 {
            return Err(DatasetError::Invalid("patch_size must be positive".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(DatasetError::Invalid(
                "feature map has non-finite values".into(),
            ));
        }
        Ok(FeatureMap {
            height,
            width,
            channels,
            patch_size,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn patch_size(&self) -> usize {
        self.patch_size
    }
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn cell(&self, row: usize, col: usize) -> &[f32] {
        let start = (row * self.width + col) * self.channels;
        &self.data[start..start + self.channels]
    }

    /// Checks `H_F = ceil(H / patch)` and `W_F = ceil(W / patch)` for an image.
    pub fn check_image_size(&self, width: u32, height: u32) -> Result<(), DatasetError> {
        let p = self.patch_size;
        let want_h = (height as usize).div_ceil(p);
        let want_w = (width as usize).div_ceil(p);
        if self.height != want_h || self.width != want_w {
            return Err(DatasetError::Invalid(format!(
                "feature grid {}x{} does not cover a {width}x{height} image at patch {p} (expected {want_h}x{want_w})",
                self.height, self.width
            )));
        }
        Ok(())
    }
}

/// Lazily loadable reference to a UNFT file.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRef {
    pub path: PathBuf,
}

impl FeatureRef {
    pub fn load(&self) -> Result<FeatureMap, DatasetError> {
        read_feature_map(&self.path)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraEntry {
    pub calib: CameraCalib,
    pub feature: FeatureRef,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    /// Index as recorded in `frames.json`.
    pub index: usize,
    pub is_keyframe: bool,
    pub cloud: LidarCloud,
    /// Ego → world.
    pub ego_pose: Pose,
    /// LiDAR → ego.
    pub lidar_pose: Pose,
    pub cameras: Vec<CameraEntry>,
}

impl Frame {
    pub fn timestamp_us(&self) -> i64 {
        self.cloud.timestamp_us
    }

    pub fn time_s(&self) -> f64 {
        self.cloud.timestamp_us as f64 * 1e-6
    }

    /// The sweep in world coordinates.
    pub fn world_points(&self) -> Vec<[f64; 3]> {
        to_world(&self.cloud, &self.lidar_pose, &self.ego_pose)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub id: String,
    pub root: PathBuf,
    /// Sorted by timestamp, strictly increasing.
    pub frames: Vec<Frame>,
}

impl Scene {
    pub fn keyframe_positions(&self) -> Vec<usize> {
        (0..self.frames.len())
            .filter(|&i| self.frames[i].is_keyframe)
            .collect()
    }
}

// ----- on-disk records -----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub id: String,
    pub intrinsic: [f64; 9],
    pub extrinsic: Pose,
    pub width: u32,
    pub height: u32,
    pub feature_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub index: usize,
    pub timestamp_us: i64,
    pub ego_pose: Pose,
    pub is_keyframe: bool,
    pub lidar_file: String,
    pub cameras: Vec<CameraRecord>,
    /// LiDAR → ego; identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lidar_extrinsic: Option<Pose>,
}

/// Ground-truth box in world coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtBox {
    pub center: [f64; 3],
    /// `[l, w, h]`.
    pub size: [f64; 3],
    pub yaw: f64,
    pub velocity: [f64; 2],
    pub class_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtFrame {
    pub index: usize,
    pub boxes: Vec<GtBox>,
}

pub fn scene_dir(root: &Path, scene_id: &str) -> PathBuf {
    root.join(format!("scene_{scene_id}"))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, DatasetError> {
    let text = fs::read_to_string(path).map_err(|e| DatasetError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| DatasetError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), DatasetError> {
    let text = serde_json::to_string_pretty(value).map_err(|source| DatasetError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, text).map_err(|e| DatasetError::io(path, e))
}

/// Lists scene ids (`scene_<id>` directories) under `root`, sorted.
pub fn list_scenes(root: &Path) -> Result<Vec<String>, DatasetError> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| DatasetError::io(root, e))? {
        let entry = entry.map_err(|e| DatasetError::io(root, e))?;
        if !entry.path().is_dir() {
            continue;
        }
        if let Some(id) = entry
            .file_name()
            .to_str()
            .and_then(|n| n.strip_prefix("scene_"))
        {
            ids.push(id.to_string());
        }
    }
    ids.sort();
    Ok(ids)
}

/// Loads all frames of `scene_<id>` under `root`. Point clouds are read
/// eagerly; feature maps are left as [`FeatureRef`]s.
pub fn load_scene(root: &Path, scene_id: &str) -> Result<Scene, DatasetError> {
    let dir = scene_dir(root, scene_id);
    let records: Vec<FrameRecord> = read_json(&dir.join("frames.json"))?;
    let mut frames = Vec::with_capacity(records.len());
    for rec in records {
        frames.push(frame_from_record(&dir, rec)?);
    }
    frames.sort_by_key(|f| (f.cloud.timestamp_us, f.index));
    for pair in frames.windows(2) {
        if pair[1].cloud.timestamp_us <= pair[0].cloud.timestamp_us {
            return Err(DatasetError::Invalid(format!(
                "scene {scene_id}: frames {} and {} share timestamp {}",
                pair[0].index, pair[1].index, pair[1].cloud.timestamp_us
            )));
        }
    }
    Ok(Scene {
        id: scene_id.to_string(),
        root: dir,
        frames,
    })
}

fn frame_from_record(dir: &Path, rec: FrameRecord) -> Result<Frame, DatasetError> {
    let points = read_point_cloud(&dir.join(&rec.lidar_file))?;
    let mut cameras: Vec<CameraEntry> = Vec::with_capacity(rec.cameras.len());
    for cam in rec.cameras {
        if cameras.iter().any(|c| c.calib.camera_id == cam.id) {
            return Err(DatasetError::Invalid(format!(
                "frame {}: duplicate camera id {}",
                rec.index, cam.id
            )));
        }
        let k = cam.intrinsic;
        let calib = CameraCalib {
            camera_id: cam.id,
            intrinsic: [[k[0], k[1], k[2]], [k[3], k[4], k[5]], [k[6], k[7], k[8]]],
            extrinsic: cam.extrinsic,
            width: cam.width,
            height: cam.height,
        };
        calib.validate()?;
        let path = dir.join(&cam.feature_file);
        if !path.is_file() {
            return Err(DatasetError::io(
                &path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "feature file missing"),
            ));
        }
        cameras.push(CameraEntry {
            calib,
            feature: FeatureRef { path },
        });
    }
    Ok(Frame {
        index: rec.index,
        is_keyframe: rec.is_keyframe,
        cloud: LidarCloud {
            points,
            timestamp_us: rec.timestamp_us,
        },
        ego_pose: rec.ego_pose,
        lidar_pose: rec.lidar_extrinsic.unwrap_or_default(),
        cameras,
    })
}

/// Loads `gt.json` for a scene.
pub fn load_ground_truth(root: &Path, scene_id: &str) -> Result<Vec<GtFrame>, DatasetError> {
    read_json(&scene_dir(root, scene_id).join("gt.json"))
}

/// Applies `ego_pose ∘ sensor_pose` to each point.
pub fn to_world(cloud: &LidarCloud, sensor_pose: &Pose, ego_pose: &Pose) -> Vec<[f64; 3]> {
    let world_from_sensor = ego_pose.compose(sensor_pose);
    cloud
        .points
        .iter()
        .map(|p| world_from_sensor.transform_point([p[0] as f64, p[1] as f64, p[2] as f64]))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

/// Pinhole projection of world points into a camera mounted on the ego
/// vehicle. A point projects iff `depth > 0`, `0 ≤ u < W` and `0 ≤ v < H`.
pub fn project_to_image(
    points_world: &[[f64; 3]],
    calib: &CameraCalib,
    ego_pose: &Pose,
) -> Vec<Option<Projection>> {
    let camera_from_world = ego_pose.compose(&calib.extrinsic).inverse();
    let k = calib.intrinsic_matrix();
    let (w, h) = (calib.width as f64, calib.height as f64);
    points_world
        .iter()
        .map(|&p| {
            let c = camera_from_world.transform_point(p);
            let depth = c[2];
            if !(depth > 0.0) {
                return None;
            }
            let uvw = k * Vector3::new(c[0], c[1], c[2]);
            let (u, v) = (uvw.x / uvw.z, uvw.y / uvw.z);
            (u >= 0.0 && u < w && v >= 0.0 && v < h).then_some(Projection { u, v, depth })
        })
        .collect()
}
