//! Synthetic scene generation: box-shaped objects sampled into LiDAR sweeps,
//! ring cameras whose feature maps paint each object's archetype vector.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset_io::{
    scene_dir, write_feature_map, write_json, write_point_cloud, CameraRecord, DatasetError,
    FeatureMap, FrameRecord, GtBox, GtFrame, Pose,
};
use crate::par;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarSpec {
    /// Mounting height above the ego origin, meters.
    pub height: f64,
    pub range: f64,
    pub ground_points: usize,
    pub ground_noise: f64,
    /// Surface points per square meter per sweep.
    pub surface_density: f64,
    pub min_points: usize,
    pub point_noise: f64,
}

impl Default for LidarSpec {
    fn default() -> Self {
        LidarSpec {
            height: 1.8,
            range: 40.0,
            ground_points: 3000,
            ground_noise: 0.01,
            surface_density: 3.0,
            min_points: 20,
            point_noise: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSpec {
    pub count: usize,
    pub width: u32,
    pub height: u32,
    pub hfov_deg: f64,
    pub patch_size: usize,
    pub channels: usize,
    /// Mounting height above the ego origin, meters.
    pub mount_height: f64,
    /// Standard deviation of per-cell Gaussian feature noise.
    pub feature_noise: f64,
}

impl Default for CameraSpec {
    fn default() -> Self {
        CameraSpec {
            count: 6,
            width: 320,
            height: 192,
            hfov_deg: 70.0,
            patch_size: 16,
            channels: 16,
            mount_height: 1.6,
            feature_noise: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub archetype: String,
    pub class_name: String,
    /// `[l, w, h]`.
    pub size: [f64; 3],
    /// BEV center at time 0.
    pub start: [f64; 2],
    pub yaw: f64,
    #[serde(default)]
    pub velocity: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundSpec {
    pub archetype: String,
    pub size: [f64; 3],
    pub center: [f64; 2],
    #[serde(default)]
    pub yaw: f64,
}

/// Scenario file for `gen-synthetic`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub scene_id: String,
    pub num_keyframes: usize,
    pub keyframe_hz: f64,
    /// Non-key sweeps between consecutive keyframes.
    pub sweeps_between_keyframes: usize,
    pub ego_velocity: [f64; 2],
    pub lidar: LidarSpec,
    pub cameras: CameraSpec,
    /// Mobile objects; they receive ground truth.
    pub objects: Vec<ObjectSpec>,
    /// Static scenery; listed in `background.json` only.
    pub background: Vec<BackgroundSpec>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            scene_id: "0000".into(),
            num_keyframes: 30,
            keyframe_hz: 2.0,
            sweeps_between_keyframes: 0,
            ego_velocity: [0.0, 0.0],
            lidar: LidarSpec::default(),
            cameras: CameraSpec::default(),
            objects: Vec::new(),
            background: Vec::new(),
        }
    }
}

const CAR: [f64; 3] = [4.5, 1.9, 1.6];
const PEDESTRIAN: [f64; 3] = [0.6, 0.6, 1.75];

impl Scenario {
    /// Two moving and four parked cars sharing one archetype, three
    /// pedestrians (one walking), and six static background objects with
    /// distinct archetypes.
    pub fn benchmark() -> Self {
        let car = |start: [f64; 2], yaw: f64, velocity: [f64; 2]| ObjectSpec {
            archetype: "car".into(),
            class_name: "car".into(),
            size: CAR,
            start,
            yaw,
            velocity,
        };
        let ped = |start: [f64; 2], velocity: [f64; 2]| ObjectSpec {
            archetype: "pedestrian".into(),
            class_name: "pedestrian".into(),
            size: PEDESTRIAN,
            start,
            yaw: 0.0,
            velocity,
        };
        let bg = |archetype: &str, size: [f64; 3], center: [f64; 2], yaw: f64| BackgroundSpec {
            archetype: archetype.into(),
            size,
            center,
            yaw,
        };
        Scenario {
            scene_id: "0001".into(),
            objects: vec![
                car([-20.0, 2.0], 0.0, [3.0, 0.0]),
                car([20.0, -2.0], PI, [-3.0, 0.0]),
                car([-12.0, 6.0], 0.0, [0.0, 0.0]),
                car([4.0, 6.0], 0.0, [0.0, 0.0]),
                car([-6.0, -6.0], 0.0, [0.0, 0.0]),
                car([12.0, -6.0], 0.0, [0.0, 0.0]),
                ped([-16.0, 10.0], [1.2, 0.0]),
                ped([6.0, 9.0], [0.0, 0.0]),
                ped([-2.0, -9.0], [0.0, 0.0]),
            ],
            background: vec![
                bg("building", [10.0, 5.0, 6.0], [-15.0, 17.0], 0.0),
                bg("wall", [12.0, 1.0, 3.0], [5.0, 16.0], 0.0),
                bg("kiosk", [3.0, 3.0, 3.0], [18.0, 15.0], 0.3),
                bg("shelter", [4.0, 2.0, 2.8], [-18.0, -16.0], 0.0),
                bg("tree", [1.0, 1.0, 5.0], [0.0, -15.0], 0.0),
                bg("container", [6.0, 2.5, 2.6], [15.0, -16.0], -0.2),
            ],
            ..Scenario::default()
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if self.scene_id.is_empty() || self.scene_id.contains(['/', '\\']) {
            return bad(format!(
                "scene_id {:?} is not a valid directory suffix",
                self.scene_id
            ));
        }
        if !(self.keyframe_hz > 0.0) {
            return bad("keyframe_hz must be positive".into());
        }
        let c = &self.cameras;
        if c.width == 0 || c.height == 0 || c.patch_size == 0 || c.channels == 0 {
            return bad("camera width, height, patch_size and channels must be positive".into());
        }
        if !(c.hfov_deg > 0.0 && c.hfov_deg < 180.0) {
            return bad("cameras.hfov_deg must lie in (0, 180)".into());
        }
        if !(self.lidar.range > 0.0) || self.lidar.surface_density < 0.0 {
            return bad("lidar.range must be positive and surface_density non-negative".into());
        }
        for (i, o) in self.objects.iter().enumerate() {
            if o.size.iter().any(|s| !(*s > 0.0)) {
                return bad(format!("objects[{i}].size must be positive"));
            }
        }
        for (i, b) in self.background.iter().enumerate() {
            if b.size.iter().any(|s| !(*s > 0.0)) {
                return bad(format!("background[{i}].size must be positive"));
            }
        }
        Ok(())
    }

    fn sweep_count(&self) -> usize {
        if self.num_keyframes == 0 {
            0
        } else {
            (self.num_keyframes - 1) * (self.sweeps_between_keyframes + 1) + 1
        }
    }

    fn sweep_time(&self, k: usize) -> f64 {
        k as f64 / (self.keyframe_hz * (self.sweeps_between_keyframes + 1) as f64)
    }

    /// Archetype names: `ground`, `sky`, then first appearance in objects and
    /// background.
    pub fn archetypes(&self) -> Vec<String> {
        let mut names = vec!["ground".to_string(), "sky".to_string()];
        for a in self
            .objects
            .iter()
            .map(|o| &o.archetype)
            .chain(self.background.iter().map(|b| &b.archetype))
        {
            if !names.contains(a) {
                names.push(a.clone());
            }
        }
        names
    }
}

/// Deterministic unit-variance feature vector of archetype `index`.
pub fn archetype_vector(index: usize, channels: usize) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + index as u64);
    let n = Normal::new(0.0, 1.0).expect("valid normal");
    (0..channels).map(|_| n.sample(&mut rng) as f32).collect()
}

/// An upright box at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Placed {
    center: [f64; 2],
    size: [f64; 3],
    yaw: f64,
    archetype: usize,
}

impl Placed {
    fn to_local(&self, p: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.yaw.sin_cos();
        let (dx, dy) = (p[0] - self.center[0], p[1] - self.center[1]);
        [c * dx + s * dy, -s * dx + c * dy, p[2]]
    }

    fn to_world(&self, q: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.yaw.sin_cos();
        [
            self.center[0] + c * q[0] - s * q[1],
            self.center[1] + s * q[0] + c * q[1],
            q[2],
        ]
    }

    /// Ray parameter of the first hit, slab method in the box frame.
    fn ray_hit(&self, origin: [f64; 3], dir: [f64; 3]) -> Option<f64> {
        let o = self.to_local(origin);
        let (s, c) = self.yaw.sin_cos();
        let d = [c * dir[0] + s * dir[1], -s * dir[0] + c * dir[1], dir[2]];
        let lo = [-self.size[0] / 2.0, -self.size[1] / 2.0, 0.0];
        let hi = [self.size[0] / 2.0, self.size[1] / 2.0, self.size[2]];
        let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
        for a in 0..3 {
            if d[a].abs() < 1e-12 {
                if o[a] < lo[a] || o[a] > hi[a] {
                    return None;
                }
                continue;
            }
            let (mut ta, mut tb) = ((lo[a] - o[a]) / d[a], (hi[a] - o[a]) / d[a]);
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return None;
            }
        }
        Some(t0)
    }

    /// Uniform samples on the four sides and the top.
    fn sample_surface(&self, n: usize, noise: f64, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
        let [l, w, h] = self.size;
        let faces = [l * h, l * h, w * h, w * h, l * w];
        let total: f64 = faces.iter().sum();
        let gauss = Normal::new(0.0, noise.max(0.0)).expect("valid normal");
        (0..n)
            .map(|_| {
                let mut pick = rng.random::<f64>() * total;
                let mut face = 0;
                while face < 4 && pick >= faces[face] {
                    pick -= faces[face];
                    face += 1;
                }
                let (a, b) = (rng.random::<f64>() - 0.5, rng.random::<f64>());
                let q = match face {
                    0 => [a * l, w / 2.0, b * h],
                    1 => [a * l, -w / 2.0, b * h],
                    2 => [l / 2.0, a * w, b * h],
                    3 => [-l / 2.0, a * w, b * h],
                    _ => [a * l, (b - 0.5) * w, h],
                };
                let p = self.to_world(q);
                [
                    p[0] + gauss.sample(rng),
                    p[1] + gauss.sample(rng),
                    p[2] + gauss.sample(rng),
                ]
            })
            .collect()
    }

    fn surface_area(&self) -> f64 {
        let [l, w, h] = self.size;
        2.0 * (l + w) * h + l * w
    }
}

/// Camera → ego rotation for a camera looking along ego yaw `yaw`.
fn camera_pose(yaw: f64, height: f64) -> Pose {
    let base = nalgebra::Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0);
    let rot =
        nalgebra::Rotation3::from_axis_angle(&nalgebra::Vector3::z_axis(), yaw).into_inner() * base;
    let q = nalgebra::UnitQuaternion::from_matrix(&rot);
    Pose::from_isometry(nalgebra::Isometry3::from_parts(
        nalgebra::Translation3::new(0.0, 0.0, height),
        q,
    ))
}

struct SweepOutput {
    record: FrameRecord,
    points: Vec<[f32; 3]>,
    features: Vec<FeatureMap>,
    gt: Option<GtFrame>,
}

/// Files written by [`generate`].
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedScene {
    pub scene_id: String,
    pub sweeps: usize,
    pub keyframes: usize,
    pub gt_boxes: usize,
}

/// Writes `scene_<id>/` (frames, LiDAR sweeps, feature maps, `gt.json`, and
/// `background.json`) under `root`. Geometry depends only on the scenario;
/// `seed` drives sampling and feature noise.
pub fn generate(
    scenario: &Scenario,
    root: &Path,
    seed: u64,
) -> Result<GeneratedScene, ScenarioError> {
    scenario.validate()?;
    let dir = scene_dir(root, &scenario.scene_id);
    for sub in ["lidar", "feat"] {
        fs::create_dir_all(dir.join(sub)).map_err(|e| DatasetError::io(&dir.join(sub), e))?;
    }
    let names = scenario.archetypes();
    let index_of = |a: &str| names.iter().position(|n| n == a).expect("archetype listed");
    let vectors: Vec<Vec<f32>> = (0..names.len())
        .map(|i| archetype_vector(i, scenario.cameras.channels))
        .collect();
    let mobile_arch: Vec<usize> = scenario
        .objects
        .iter()
        .map(|o| index_of(&o.archetype))
        .collect();
    let bg_arch: Vec<usize> = scenario
        .background
        .iter()
        .map(|b| index_of(&b.archetype))
        .collect();

    let outputs = par::map_range(scenario.sweep_count(), |k| {
        sweep(scenario, seed, k, &vectors, &mobile_arch, &bg_arch)
    });
    let mut records = Vec::with_capacity(outputs.len());
    let mut gt = Vec::new();
    for out in outputs {
        write_point_cloud(&dir.join(&out.record.lidar_file), &out.points)?;
        for (cam, map) in out.record.cameras.iter().zip(&out.features) {
            write_feature_map(&dir.join(&cam.feature_file), map)?;
        }
        if let Some(g) = out.gt {
            gt.push(g);
        }
        records.push(out.record);
    }
    write_json(&dir.join("frames.json"), &records)?;
    write_json(&dir.join("gt.json"), &gt)?;
    let background: Vec<GtBox> = scenario
        .background
        .iter()
        .map(|b| GtBox {
            center: [b.center[0], b.center[1], b.size[2] / 2.0],
            size: b.size,
            yaw: b.yaw,
            velocity: [0.0, 0.0],
            class_name: b.archetype.clone(),
        })
        .collect();
    write_json(&dir.join("background.json"), &background)?;
    Ok(GeneratedScene {
        scene_id: scenario.scene_id.clone(),
        sweeps: records.len(),
        keyframes: gt.len(),
        gt_boxes: gt.iter().map(|g| g.boxes.len()).sum(),
    })
}

fn sweep(
    sc: &Scenario,
    seed: u64,
    k: usize,
    vectors: &[Vec<f32>],
    mobile_arch: &[usize],
    bg_arch: &[usize],
) -> SweepOutput {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let t = sc.sweep_time(k);
    let is_key = k.is_multiple_of(sc.sweeps_between_keyframes + 1);
    let ego_xy = [sc.ego_velocity[0] * t, sc.ego_velocity[1] * t];
    let ego = Pose::from_yaw(0.0, [ego_xy[0], ego_xy[1], 0.0]);
    let lidar = Pose::from_yaw(0.0, [0.0, 0.0, sc.lidar.height]);
    let world_to_lidar = ego.compose(&lidar).inverse();

    let mobiles: Vec<Placed> = sc
        .objects
        .iter()
        .zip(mobile_arch)
        .map(|(o, &a)| Placed {
            center: [
                o.start[0] + o.velocity[0] * t,
                o.start[1] + o.velocity[1] * t,
            ],
            size: o.size,
            yaw: o.yaw,
            archetype: a,
        })
        .collect();
    let scenery: Vec<Placed> = sc
        .background
        .iter()
        .zip(bg_arch)
        .map(|(b, &a)| Placed {
            center: b.center,
            size: b.size,
            yaw: b.yaw,
            archetype: a,
        })
        .collect();
    let in_range =
        |p: &Placed| (p.center[0] - ego_xy[0]).hypot(p.center[1] - ego_xy[1]) <= sc.lidar.range;

    let mut world: Vec<[f64; 3]> = Vec::new();
    let ground_noise = Normal::new(0.0, sc.lidar.ground_noise.max(0.0)).expect("valid normal");
    for _ in 0..sc.lidar.ground_points {
        let r = sc.lidar.range * rng.random::<f64>().sqrt();
        let a = rng.random::<f64>() * 2.0 * PI;
        world.push([
            ego_xy[0] + r * a.cos(),
            ego_xy[1] + r * a.sin(),
            ground_noise.sample(&mut rng),
        ]);
    }
    for p in mobiles.iter().chain(&scenery).filter(|p| in_range(p)) {
        let n = ((sc.lidar.surface_density * p.surface_area()).round() as usize)
            .max(sc.lidar.min_points);
        world.extend(p.sample_surface(n, sc.lidar.point_noise, &mut rng));
    }
    let points: Vec<[f32; 3]> = world
        .iter()
        .map(|&p| {
            let q = world_to_lidar.transform_point(p);
            [q[0] as f32, q[1] as f32, q[2] as f32]
        })
        .collect();

    let cs = &sc.cameras;
    let fx = (cs.width as f64 / 2.0) / (cs.hfov_deg.to_radians() / 2.0).tan();
    let (cx, cy) = (cs.width as f64 / 2.0, cs.height as f64 / 2.0);
    let hf = (cs.height as usize).div_ceil(cs.patch_size);
    let wf = (cs.width as usize).div_ceil(cs.patch_size);
    let feat_noise = Normal::new(0.0, cs.feature_noise.max(0.0)).expect("valid normal");
    let mut cameras = Vec::with_capacity(cs.count);
    let mut features = Vec::with_capacity(cs.count);
    for c in 0..cs.count {
        let extrinsic = camera_pose(c as f64 * 2.0 * PI / cs.count as f64, cs.mount_height);
        let cam_to_world = ego.compose(&extrinsic);
        let origin = cam_to_world.transform_point([0.0, 0.0, 0.0]);
        let mut data = Vec::with_capacity(hf * wf * cs.channels);
        for row in 0..hf {
            for col in 0..wf {
                let u = ((col * cs.patch_size) as f64 + cs.patch_size as f64 / 2.0)
                    .min(cs.width as f64 - 0.5);
                let v = ((row * cs.patch_size) as f64 + cs.patch_size as f64 / 2.0)
                    .min(cs.height as f64 - 0.5);
                let tip = cam_to_world.transform_point([(u - cx) / fx, (v - cy) / fx, 1.0]);
                let dir = [tip[0] - origin[0], tip[1] - origin[1], tip[2] - origin[2]];
                let mut best = (f64::INFINITY, if dir[2] < 0.0 { 0 } else { 1 });
                if dir[2] < 0.0 {
                    best.0 = -origin[2] / dir[2];
                }
                for p in mobiles.iter().chain(&scenery) {
                    if let Some(hit) = p.ray_hit(origin, dir) {
                        if hit < best.0 {
                            best = (hit, p.archetype);
                        }
                    }
                }
                data.extend(
                    vectors[best.1]
                        .iter()
                        .map(|&x| x + feat_noise.sample(&mut rng) as f32),
                );
            }
        }
        features.push(
            FeatureMap::new(hf, wf, cs.channels, cs.patch_size, data).expect("consistent shape"),
        );
        cameras.push(CameraRecord {
            id: format!("CAM_{c}"),
            intrinsic: [fx, 0.0, cx, 0.0, fx, cy, 0.0, 0.0, 1.0],
            extrinsic,
            width: cs.width,
            height: cs.height,
            feature_file: format!("feat/{k}_CAM_{c}.bin"),
        });
    }

    let gt = is_key.then(|| GtFrame {
        index: k,
        boxes: sc
            .objects
            .iter()
            .zip(&mobiles)
            .filter(|(_, p)| in_range(p))
            .map(|(o, p)| GtBox {
                center: [p.center[0], p.center[1], o.size[2] / 2.0],
                size: o.size,
                yaw: o.yaw,
                velocity: o.velocity,
                class_name: o.class_name.clone(),
            })
            .collect(),
    });
    SweepOutput {
        record: FrameRecord {
            index: k,
            timestamp_us: 1_000_000 + (t * 1e6).round() as i64,
            ego_pose: ego,
            is_keyframe: is_key,
            lidar_file: format!("lidar/{k}.bin"),
            cameras,
            lidar_extrinsic: Some(lidar),
        },
        points,
        features,
        gt,
    }
}

/// Reads `background.json` written by [`generate`].
pub fn load_background(root: &Path, scene_id: &str) -> Result<Vec<GtBox>, DatasetError> {
    crate::dataset_io::read_json(&scene_dir(root, scene_id).join("background.json"))
}

/// Counts of GT boxes per class in a generated scene.
pub fn gt_class_counts(gt: &[GtFrame]) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for f in gt {
        for b in &f.boxes {
            *m.entry(b.class_name.clone()).or_insert(0) += 1;
        }
    }
    m
}
