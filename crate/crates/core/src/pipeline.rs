//! End-to-end pseudo-label generation over every scene of a dataset.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::appearance::{embed_proposal, AppearanceEmbedding, FeatureCache};
use crate::box_fitting::{
    assemble_labels, fit_box, BoxError, FittedObject, KeyframeSlot, LabelFrame, PseudoLabelFile,
    SceneLabels,
};
use crate::dataset_io::{list_scenes, load_scene, read_json, write_json, DatasetError, Scene};
use crate::discovery::{
    assign_pseudo_classes, discover, load_prototypes, match_prototypes, DiscoveryError,
    MobileObject,
};
use crate::ground_removal::{
    extract_non_ground, fit_ground_plane, NonGroundCloud, PlaneModel, RansacParams,
};
use crate::motion_estimation::{compensate_motion, estimate_motion, MotionEstimate, MotionParams};
use crate::par;
use crate::spatial_clustering::{
    aggregate, build_proposals, hdbscan, AggregatedCloud, HdbscanParams, ObjectProposal,
};

/// Which ablation of the pipeline to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    /// Every spatial cluster becomes a static box.
    #[serde(rename = "spatial")]
    Spatial,
    /// Every spatial cluster, with dynamic ones motion-compensated.
    #[serde(rename = "+motion")]
    Motion,
    /// Mobile objects only, found by appearance clustering.
    #[serde(rename = "+appearance")]
    Appearance,
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "spatial" => Ok(Stage::Spatial),
            "+motion" | "motion" => Ok(Stage::Motion),
            "+appearance" | "appearance" => Ok(Stage::Appearance),
            other => Err(format!(
                "unknown stage {other:?} (expected spatial, +motion or +appearance)"
            )),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Spatial => "spatial",
            Stage::Motion => "+motion",
            Stage::Appearance => "+appearance",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub inlier_threshold: f64,
    pub ransac_iterations: usize,
    pub max_tilt_deg: f64,
    pub height_cutoff: f64,
    /// Frames aggregated on each side of a window center (M).
    pub window_half_width: usize,
    /// Spacing of window centers in aggregation frames; 0 means `2M + 1`.
    pub window_stride: usize,
    /// Aggregate every sweep instead of keyframes only.
    pub include_sweeps: bool,
    pub min_cluster_size: usize,
    pub min_samples: usize,
    pub cluster_selection_epsilon: f64,
    pub dynamic_speed_threshold: f64,
    pub icp_max_iterations: usize,
    pub icp_tolerance: f64,
    pub icp_trim_quantile: f64,
    pub min_points_per_half: usize,
    pub icp_yaw_search_deg: f64,
    pub icp_yaw_step_deg: f64,
    /// Appearance clusters (K₁).
    pub k1: usize,
    /// Dynamic fraction at which a cluster is mobile (X).
    pub mobile_fraction: f64,
    /// Pseudo-classes (K₂).
    pub k2: usize,
    pub seed: u64,
    /// Optional `prototypes.json` used to name pseudo-classes.
    pub prototypes: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            inlier_threshold: 0.05,
            ransac_iterations: 200,
            max_tilt_deg: 30.0,
            height_cutoff: 0.30,
            window_half_width: 7,
            window_stride: 0,
            include_sweeps: false,
            min_cluster_size: 16,
            min_samples: 16,
            cluster_selection_epsilon: 0.5,
            dynamic_speed_threshold: 0.5,
            icp_max_iterations: 50,
            icp_tolerance: 1e-4,
            icp_trim_quantile: 0.9,
            min_points_per_half: 5,
            icp_yaw_search_deg: 45.0,
            icp_yaw_step_deg: 7.5,
            k1: 20,
            mobile_fraction: 0.05,
            k2: 1,
            seed: 0,
            prototypes: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error in field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("{context}: {source}")]
    Dataset {
        context: String,
        #[source]
        source: DatasetError,
    },
    #[error("{context}: {source}")]
    Discovery {
        context: String,
        #[source]
        source: DiscoveryError,
    },
    #[error("{context}: {source}")]
    BoxFit {
        context: String,
        #[source]
        source: BoxError,
    },
}

fn config_error(field: &str, message: impl Into<String>) -> PipelineError {
    PipelineError::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let positive = [
            ("inlier_threshold", self.inlier_threshold),
            ("cluster_selection_epsilon", self.cluster_selection_epsilon),
            ("icp_tolerance", self.icp_tolerance),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(config_error(field, format!("must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("height_cutoff", self.height_cutoff),
            ("dynamic_speed_threshold", self.dynamic_speed_threshold),
            ("icp_yaw_search_deg", self.icp_yaw_search_deg),
            ("icp_yaw_step_deg", self.icp_yaw_step_deg),
        ];
        for (field, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(config_error(
                    field,
                    format!("must be non-negative, got {v}"),
                ));
            }
        }
        let counts = [
            ("ransac_iterations", self.ransac_iterations),
            ("min_cluster_size", self.min_cluster_size),
            ("min_samples", self.min_samples),
            ("icp_max_iterations", self.icp_max_iterations),
            ("k1", self.k1),
            ("k2", self.k2),
        ];
        for (field, v) in counts {
            if v == 0 {
                return Err(config_error(field, "must be at least 1"));
            }
        }
        if !(0.0..=90.0).contains(&self.max_tilt_deg) {
            return Err(config_error("max_tilt_deg", "must lie in [0, 90]"));
        }
        if !(self.icp_trim_quantile > 0.0 && self.icp_trim_quantile <= 1.0) {
            return Err(config_error("icp_trim_quantile", "must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.mobile_fraction) {
            return Err(config_error("mobile_fraction", "must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Reads and validates a JSON config; absent fields take defaults.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Dataset {
            context: "reading config".into(),
            source: DatasetError::Io {
                path: path.to_path_buf(),
                source: e,
            },
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let cfg: PipelineConfig = serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            let field = msg
                .split('`')
                .nth(1)
                .filter(|_| msg.starts_with("unknown field") || msg.starts_with("missing field"))
                .map(str::to_string)
                .or_else(|| json_error_field(text, &e))
                .unwrap_or_else(|| "<root>".into());
            config_error(&field, msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn ransac(&self) -> RansacParams {
        RansacParams {
            inlier_threshold: self.inlier_threshold,
            max_iterations: self.ransac_iterations,
            max_tilt_deg: self.max_tilt_deg,
        }
    }

    pub fn hdbscan(&self) -> HdbscanParams {
        HdbscanParams {
            min_cluster_size: self.min_cluster_size,
            min_samples: self.min_samples,
            cluster_selection_epsilon: self.cluster_selection_epsilon,
        }
    }

    pub fn motion(&self) -> MotionParams {
        MotionParams {
            dynamic_threshold: self.dynamic_speed_threshold,
            max_iterations: self.icp_max_iterations,
            tolerance: self.icp_tolerance,
            trim_quantile: self.icp_trim_quantile,
            min_points_per_half: self.min_points_per_half,
            yaw_search_deg: self.icp_yaw_search_deg,
            yaw_search_step_deg: self.icp_yaw_step_deg,
        }
    }

    fn stride(&self) -> usize {
        if self.window_stride == 0 {
            2 * self.window_half_width + 1
        } else {
            self.window_stride
        }
    }
}

/// Names the object key whose value failed to parse, by locating the error
/// position in the source text.
fn json_error_field(text: &str, e: &serde_json::Error) -> Option<String> {
    let line = text.lines().nth(e.line().checked_sub(1)?)?;
    let prefix = &line[..e.column().min(line.len())];
    let end = prefix.rfind("\":")?;
    let start = prefix[..end].rfind('"')?;
    Some(prefix[start + 1..end].to_string())
}

/// One aggregation window and what was found in it.
#[derive(Debug, Clone)]
pub struct WindowResult {
    /// Sequence position of the center frame.
    pub center: usize,
    /// Keyframe positions whose labels this window emits.
    pub owned: Vec<usize>,
    pub agg: AggregatedCloud,
    pub proposals: Vec<ObjectProposal>,
    /// Empty for the spatial stage.
    pub motions: Vec<MotionEstimate>,
    /// Empty before the appearance stage.
    pub embeddings: Vec<AppearanceEmbedding>,
}

/// Per-scene intermediate state.
#[derive(Debug, Clone)]
pub struct SceneResult {
    pub scene: Scene,
    /// Seconds since the first frame.
    pub frame_times: Vec<f64>,
    pub planes: Vec<PlaneModel>,
    pub windows: Vec<WindowResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneStats {
    pub scene_id: String,
    pub keyframes: usize,
    pub windows: usize,
    pub proposals: usize,
    pub dynamic: usize,
    pub unembeddable: usize,
    pub mobile: usize,
    pub boxes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub cluster_id: usize,
    pub members: usize,
    pub dynamic: usize,
    pub dynamic_fraction: f64,
    pub is_mobile: bool,
}

/// Contents of `stats.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub stage: Stage,
    pub seed: u64,
    pub scenes: Vec<SceneStats>,
    pub mobile_fraction_threshold: f64,
    /// K₁ actually used (0 when nothing was clustered).
    pub k1_used: usize,
    pub clusters: Vec<ClusterStats>,
    /// Pseudo-class → real class from prototype matching.
    pub pseudo_class_names: BTreeMap<usize, String>,
}

impl RunStats {
    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        read_json(path)
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub labels: PseudoLabelFile,
    pub stats: RunStats,
    pub scenes: Vec<SceneResult>,
}

impl PipelineOutput {
    /// Writes `pseudo_labels.json`, `stats.json`, and `resolved_config.json`.
    pub fn write(&self, out_dir: &Path, config: &PipelineConfig) -> Result<(), DatasetError> {
        std::fs::create_dir_all(out_dir).map_err(|e| DatasetError::Io {
            path: out_dir.to_path_buf(),
            source: e,
        })?;
        self.labels.save(&out_dir.join("pseudo_labels.json"))?;
        write_json(&out_dir.join("stats.json"), &self.stats)?;
        write_json(&out_dir.join("resolved_config.json"), config)
    }
}

fn frame_seed(seed: u64, position: usize) -> u64 {
    seed ^ (position as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Window centers (indices into `order`) tiling the sequence.
pub fn window_centers(len: usize, m: usize, stride: usize) -> Vec<usize> {
    let mut centers = Vec::new();
    let mut k = 0;
    while len > 0 && k * stride < len {
        let c = (m + k * stride).min(len - 1);
        if centers.last() != Some(&c) {
            centers.push(c);
        }
        k += 1;
    }
    centers
}

fn ground_and_non_ground(
    scene: &Scene,
    positions: &[usize],
    config: &PipelineConfig,
) -> (Vec<Vec<[f64; 3]>>, Vec<PlaneModel>, Vec<NonGroundCloud>) {
    let n = scene.frames.len();
    let ransac = config.ransac();
    let fitted = par::map(positions, |&f| {
        let world = scene.frames[f].world_points();
        let plane = match fit_ground_plane(&world, &ransac, frame_seed(config.seed, f)) {
            Ok(p) => p,
            Err(e) => {
                let floor = world.iter().map(|p| p[2]).fold(f64::INFINITY, f64::min);
                let z = if floor.is_finite() {
                    floor
                } else {
                    scene.frames[f].ego_pose.translation()[2]
                };
                tracing::warn!(
                    "scene {} frame {}: {e}; using a horizontal plane at z = {z}",
                    scene.id,
                    scene.frames[f].index
                );
                PlaneModel::horizontal(z)
            }
        };
        let ng = extract_non_ground(&world, f, &plane, config.height_cutoff);
        (world, plane, ng)
    });
    let mut world = vec![Vec::new(); n];
    let mut planes = vec![PlaneModel::horizontal(0.0); n];
    let mut non_ground: Vec<NonGroundCloud> = (0..n)
        .map(|f| NonGroundCloud {
            frame: f,
            indices: Vec::new(),
        })
        .collect();
    for (&f, (w, p, ng)) in positions.iter().zip(fitted) {
        world[f] = w;
        planes[f] = p;
        non_ground[f] = ng;
    }
    (world, planes, non_ground)
}

/// Runs ground removal, windowed clustering, and (per stage) motion and
/// appearance for one scene.
pub fn process_scene(
    scene: Scene,
    config: &PipelineConfig,
    stage: Stage,
) -> Result<SceneResult, PipelineError> {
    let t0 = scene.frames.first().map_or(0, |f| f.timestamp_us());
    let frame_times: Vec<f64> = scene
        .frames
        .iter()
        .map(|f| (f.timestamp_us() - t0) as f64 * 1e-6)
        .collect();
    let keyframes = scene.keyframe_positions();
    let order: Vec<usize> = if config.include_sweeps {
        (0..scene.frames.len()).collect()
    } else {
        keyframes.clone()
    };
    let (world, planes, non_ground) = ground_and_non_ground(&scene, &order, config);

    let centers = window_centers(order.len(), config.window_half_width, config.stride());
    let center_times: Vec<f64> = centers.iter().map(|&c| frame_times[order[c]]).collect();
    let mut owned = vec![Vec::new(); centers.len()];
    for &k in &keyframes {
        let owner = (0..centers.len())
            .min_by(|&a, &b| {
                (center_times[a] - frame_times[k])
                    .abs()
                    .total_cmp(&(center_times[b] - frame_times[k]).abs())
            })
            .expect("keyframes imply at least one window");
        owned[owner].push(k);
    }

    let hdb = config.hdbscan();
    let motion = config.motion();
    let windows = par::map_range(centers.len(), |w| -> Result<WindowResult, PipelineError> {
        let agg = aggregate(
            &world,
            &non_ground,
            &order,
            centers[w],
            config.window_half_width,
        );
        let clusters = hdbscan(&agg.points, &hdb).clusters;
        let proposals = build_proposals(&agg, &clusters, 0);
        let motions = if stage >= Stage::Motion {
            par::map(&proposals, |p| {
                estimate_motion(p, &agg, &frame_times, &motion)
            })
        } else {
            Vec::new()
        };
        let embeddings = if stage >= Stage::Appearance && !proposals.is_empty() {
            let cache = FeatureCache::load(&scene.frames, agg.frames()).map_err(|source| {
                PipelineError::Dataset {
                    context: format!("scene {}: loading feature maps", scene.id),
                    source,
                }
            })?;
            let channels = (0..scene.frames.len())
                .flat_map(|f| (0..scene.frames[f].cameras.len()).map(move |c| (f, c)))
                .find_map(|(f, c)| {
                    crate::appearance::FeatureSource::feature_map(&cache, f, c)
                        .map(|m| m.channels())
                })
                .unwrap_or(0);
            par::map(&proposals, |p| {
                embed_proposal(p, &agg, &scene.frames, &cache, channels)
            })
        } else {
            Vec::new()
        };
        Ok(WindowResult {
            center: order[centers[w]],
            owned: owned[w].clone(),
            agg,
            proposals,
            motions,
            embeddings,
        })
    });
    let windows = windows.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(SceneResult {
        scene,
        frame_times,
        planes,
        windows,
    })
}

/// Reference to one proposal: scene, window, proposal.
type ProposalRef = (usize, usize, usize);

struct Selected {
    pseudo_class: usize,
}

/// Runs the pipeline over every scene under `dataset_root`.
pub fn run_pipeline(
    config: &PipelineConfig,
    dataset_root: &Path,
    stage: Stage,
) -> Result<PipelineOutput, PipelineError> {
    config.validate()?;
    let ids = list_scenes(dataset_root).map_err(|source| PipelineError::Dataset {
        context: "listing scenes".into(),
        source,
    })?;
    let scenes = par::map(&ids, |id| -> Result<SceneResult, PipelineError> {
        let scene = load_scene(dataset_root, id).map_err(|source| PipelineError::Dataset {
            context: format!("loading scene {id}"),
            source,
        })?;
        process_scene(scene, config, stage)
    });
    let mut scenes = scenes.into_iter().collect::<Result<Vec<_>, _>>()?;

    // Global proposal ids in scene, window, cluster order.
    let mut refs: Vec<ProposalRef> = Vec::new();
    for (s, sr) in scenes.iter_mut().enumerate() {
        for (w, win) in sr.windows.iter_mut().enumerate() {
            for (p, prop) in win.proposals.iter_mut().enumerate() {
                prop.id = refs.len();
                if let Some(e) = win.embeddings.get_mut(p) {
                    e.proposal_id = prop.id;
                }
                refs.push((s, w, p));
            }
        }
    }
    let motion_of = |r: &ProposalRef| scenes[r.0].windows[r.1].motions.get(r.2).copied();

    let mut stats_clusters = Vec::new();
    let mut k1_used = 0;
    let mut names = BTreeMap::new();
    let mut selected: BTreeMap<usize, Selected> = BTreeMap::new();
    let mut unembeddable = vec![0usize; scenes.len()];
    let mut mobile_count = vec![0usize; scenes.len()];
    if stage == Stage::Appearance {
        let embeddable: Vec<usize> = (0..refs.len())
            .filter(|&i| {
                let r = refs[i];
                let ok = scenes[r.0].windows[r.1].embeddings[r.2].is_embeddable();
                if !ok {
                    unembeddable[r.0] += 1;
                }
                ok
            })
            .collect();
        let vectors: Vec<&[f32]> = embeddable
            .iter()
            .map(|&i| {
                scenes[refs[i].0].windows[refs[i].1].embeddings[refs[i].2]
                    .vector
                    .as_slice()
            })
            .collect();
        let dynamic: Vec<bool> = embeddable
            .iter()
            .map(|&i| motion_of(&refs[i]).is_some_and(|m| m.is_dynamic))
            .collect();
        let outcome = discover(
            &vectors,
            &dynamic,
            config.k1,
            config.mobile_fraction,
            config.seed,
        )
        .map_err(|source| PipelineError::Discovery {
            context: "appearance clustering".into(),
            source,
        })?;
        k1_used = outcome.k;
        stats_clusters = outcome
            .clusters
            .iter()
            .map(|c| ClusterStats {
                cluster_id: c.cluster_id,
                members: c.members.len(),
                dynamic: c.dynamic_count,
                dynamic_fraction: c.dynamic_fraction,
                is_mobile: c.is_mobile,
            })
            .collect();
        let mut mobiles: Vec<MobileObject> = outcome
            .mobile
            .iter()
            .map(|&j| {
                let r = refs[embeddable[j]];
                MobileObject {
                    proposal_id: embeddable[j],
                    motion: motion_of(&r).unwrap_or_else(MotionEstimate::low_evidence),
                    embedding: scenes[r.0].windows[r.1].embeddings[r.2].clone(),
                    pseudo_class: None,
                }
            })
            .collect();
        if !mobiles.is_empty() {
            let k2 = if config.k2 > mobiles.len() {
                tracing::warn!(
                    "only {} mobile objects for {} pseudo-classes; using {}",
                    mobiles.len(),
                    config.k2,
                    mobiles.len()
                );
                mobiles.len()
            } else {
                config.k2
            };
            let centroids = assign_pseudo_classes(&mut mobiles, k2, config.seed.wrapping_add(1))
                .map_err(|source| PipelineError::Discovery {
                    context: "pseudo-class assignment".into(),
                    source,
                })?;
            if let Some(path) = &config.prototypes {
                let protos = load_prototypes(path).map_err(|source| PipelineError::Dataset {
                    context: "loading prototypes".into(),
                    source,
                })?;
                names = match_prototypes(&centroids, &protos).map_err(|source| {
                    PipelineError::Discovery {
                        context: "prototype matching".into(),
                        source,
                    }
                })?;
            }
        }
        for m in &mobiles {
            mobile_count[refs[m.proposal_id].0] += 1;
            selected.insert(
                m.proposal_id,
                Selected {
                    pseudo_class: m.pseudo_class.unwrap_or(1),
                },
            );
        }
    } else {
        for i in 0..refs.len() {
            selected.insert(i, Selected { pseudo_class: 1 });
        }
    }

    let chosen: Vec<(usize, usize)> = selected
        .iter()
        .map(|(&id, s)| (id, s.pseudo_class))
        .collect();
    let fitted = par::map(
        &chosen,
        |&(id, pseudo_class)| -> Result<(usize, FittedObject), PipelineError> {
            let r = refs[id];
            let sr = &scenes[r.0];
            let win = &sr.windows[r.1];
            let prop = &win.proposals[r.2];
            let motion = win.motions.get(r.2).copied();
            let reference_time = sr.frame_times[win.center];
            let moving = stage >= Stage::Motion && motion.is_some_and(|m| m.is_dynamic);
            let points = match (moving, motion) {
                (true, Some(m)) => {
                    compensate_motion(prop, &win.agg, &sr.frame_times, reference_time, &m)
                }
                _ => prop.points(&win.agg).collect(),
            };
            let velocity = if moving {
                motion.map_or([0.0, 0.0], |m| m.box_velocity())
            } else {
                [0.0, 0.0]
            };
            let fit = fit_box(&points, &sr.planes[win.center], moving.then_some(velocity))
                .map_err(|source| PipelineError::BoxFit {
                    context: format!("scene {} proposal {id}", sr.scene.id),
                    source,
                })?;
            let times: Vec<f64> = prop.slices.keys().map(|&f| sr.frame_times[f]).collect();
            let span = (
                times.iter().copied().fold(f64::INFINITY, f64::min),
                times.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            );
            Ok((
                id,
                FittedObject {
                    fit,
                    velocity,
                    pseudo_class,
                    num_points: prop.point_indices.len(),
                    reference_time,
                    span,
                },
            ))
        },
    );
    let fitted = fitted.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut per_window: BTreeMap<(usize, usize), Vec<FittedObject>> = BTreeMap::new();
    for (id, obj) in fitted {
        per_window
            .entry((refs[id].0, refs[id].1))
            .or_default()
            .push(obj);
    }

    let mut labels = PseudoLabelFile::default();
    let mut scene_stats = Vec::new();
    for (s, sr) in scenes.iter().enumerate() {
        let mut by_frame: BTreeMap<usize, Vec<_>> = BTreeMap::new();
        for (w, win) in sr.windows.iter().enumerate() {
            let slots: Vec<KeyframeSlot> = win
                .owned
                .iter()
                .map(|&k| KeyframeSlot {
                    index: k,
                    time_s: sr.frame_times[k],
                })
                .collect();
            let objs = per_window.remove(&(s, w)).unwrap_or_default();
            for set in assemble_labels(&objs, &slots) {
                by_frame.entry(set.frame).or_default().extend(set.boxes);
            }
        }
        let mut frames = Vec::new();
        for k in sr.scene.keyframe_positions() {
            let f = &sr.scene.frames[k];
            let mut boxes = by_frame.remove(&k).unwrap_or_default();
            for b in &mut boxes {
                b.frame = f.index;
            }
            frames.push(LabelFrame {
                index: f.index,
                timestamp_us: f.timestamp_us(),
                ego_pose: f.ego_pose,
                boxes,
            });
        }
        let proposals: usize = sr.windows.iter().map(|w| w.proposals.len()).sum();
        let dynamic: usize = sr
            .windows
            .iter()
            .map(|w| w.motions.iter().filter(|m| m.is_dynamic).count())
            .sum();
        scene_stats.push(SceneStats {
            scene_id: sr.scene.id.clone(),
            keyframes: frames.len(),
            windows: sr.windows.len(),
            proposals,
            dynamic,
            unembeddable: unembeddable[s],
            mobile: if stage == Stage::Appearance {
                mobile_count[s]
            } else {
                proposals
            },
            boxes: frames.iter().map(|f| f.boxes.len()).sum(),
        });
        labels.scenes.push(SceneLabels {
            scene_id: sr.scene.id.clone(),
            frames,
        });
    }
    for (name, b) in labels
        .scenes
        .iter_mut()
        .flat_map(|s| s.frames.iter_mut())
        .flat_map(|f| f.boxes.iter_mut())
        .map(|b| (names.get(&b.pseudo_class).cloned(), b))
    {
        b.class_name = name;
    }

    Ok(PipelineOutput {
        labels,
        stats: RunStats {
            stage,
            seed: config.seed,
            scenes: scene_stats,
            mobile_fraction_threshold: config.mobile_fraction,
            k1_used,
            clusters: stats_clusters,
            pseudo_class_names: names,
        },
        scenes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalSummary {
    pub id: usize,
    pub num_points: usize,
    /// Keyframe indices (from `frames.json`) contributing points.
    pub frames: Vec<usize>,
    pub centroid: [f64; 3],
    pub speed: Option<f64>,
    pub is_dynamic: Option<bool>,
    pub embedding_coverage: Option<f64>,
}

/// Proposals of one aggregation window, keyed by its center frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSummary {
    pub center_frame: usize,
    pub owned_frames: Vec<usize>,
    pub aggregated_points: usize,
    pub proposals: Vec<ProposalSummary>,
}

/// Clusters one scene and summarizes each window's proposals.
pub fn inspect_scene(
    config: &PipelineConfig,
    dataset_root: &Path,
    scene_id: &str,
    stage: Stage,
) -> Result<Vec<WindowSummary>, PipelineError> {
    config.validate()?;
    let scene = load_scene(dataset_root, scene_id).map_err(|source| PipelineError::Dataset {
        context: format!("loading scene {scene_id}"),
        source,
    })?;
    let result = process_scene(scene, config, stage)?;
    let index = |f: usize| result.scene.frames[f].index;
    let mut next_id = 0;
    Ok(result
        .windows
        .iter()
        .map(|win| WindowSummary {
            center_frame: index(win.center),
            owned_frames: win.owned.iter().map(|&f| index(f)).collect(),
            aggregated_points: win.agg.points.len(),
            proposals: win
                .proposals
                .iter()
                .enumerate()
                .map(|(p, prop)| {
                    let n = prop.point_indices.len() as f64;
                    let mut centroid = [0.0; 3];
                    for q in prop.points(&win.agg) {
                        for a in 0..3 {
                            centroid[a] += q[a] / n;
                        }
                    }
                    let motion = win.motions.get(p);
                    next_id += 1;
                    ProposalSummary {
                        id: next_id - 1,
                        num_points: prop.point_indices.len(),
                        frames: prop.slices.keys().map(|&f| index(f)).collect(),
                        centroid,
                        speed: motion.map(|m| m.speed),
                        is_dynamic: motion.map(|m| m.is_dynamic),
                        embedding_coverage: win.embeddings.get(p).map(|e| e.coverage),
                    }
                })
                .collect(),
        })
        .collect())
}
