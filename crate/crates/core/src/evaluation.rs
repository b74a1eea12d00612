//! Center-distance detection metrics: AP over distance thresholds, true
//! positive errors, and NDS.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset_io::{read_json, DatasetError, GtFrame};
use crate::par;

/// Number of recall grid intervals.
pub const RECALL_STEPS: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("prediction {index} has a non-finite score")]
    BadScore { index: usize },
    #[error("invalid evaluation config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassMode {
    /// Every box is one `object` class.
    Agnostic,
    /// Vehicle / pedestrian / cyclist.
    Grouped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub match_thresholds: Vec<f64>,
    pub clip_min: f64,
    pub class_mode: ClassMode,
    pub aae_fixed: f64,
    /// Threshold at which true-positive errors are measured.
    pub tp_threshold: f64,
    /// Measure orientation error modulo π instead of 2π.
    pub aoe_period_pi: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            match_thresholds: vec![0.5, 1.0, 2.0, 4.0],
            clip_min: 0.1,
            class_mode: ClassMode::Agnostic,
            aae_fixed: 1.0,
            tp_threshold: 2.0,
            aoe_period_pi: false,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.match_thresholds.is_empty()
            || self.match_thresholds.iter().any(|t| !(*t > 0.0))
            || self.match_thresholds.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(EvalError::Config(
                "match_thresholds must be positive and ascending".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.clip_min) {
            return Err(EvalError::Config("clip_min must lie in [0, 1)".into()));
        }
        if !(self.tp_threshold > 0.0) {
            return Err(EvalError::Config("tp_threshold must be positive".into()));
        }
        Ok(())
    }

    fn yaw_period(&self) -> f64 {
        if self.aoe_period_pi {
            PI
        } else {
            2.0 * PI
        }
    }
}

/// Maps a dataset class name to its evaluation class, or `None` when the
/// class is not evaluated.
pub fn eval_class(name: &str, mode: ClassMode) -> Option<&'static str> {
    match mode {
        ClassMode::Agnostic => Some("object"),
        ClassMode::Grouped => {
            let n = name.to_ascii_lowercase();
            if n.contains("pedestrian") {
                Some("pedestrian")
            } else if n.contains("bicycle") || n.contains("motorcycle") || n.contains("cyclist") {
                Some("cyclist")
            } else if ["vehicle", "car", "truck", "bus", "trailer", "construction"]
                .iter()
                .any(|k| n.contains(k))
            {
                Some("vehicle")
            } else {
                None
            }
        }
    }
}

/// Scene id and keyframe index.
pub type FrameKey = (String, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct EvalBox {
    pub frame: FrameKey,
    pub center: [f64; 3],
    /// `[l, w, h]`.
    pub size: [f64; 3],
    pub yaw: f64,
    pub velocity: [f64; 2],
    pub class_name: String,
    /// Ignored for ground truth.
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TpErrors {
    pub ate: f64,
    pub ase: f64,
    pub aoe: f64,
    pub ave: f64,
}

/// Greedy matching outcome for one class at one distance threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub num_gt: usize,
    /// Prediction scores in processing order (descending).
    pub scores: Vec<f64>,
    pub is_tp: Vec<bool>,
    /// Errors of each true positive, in processing order.
    pub errors: Vec<TpErrors>,
}

pub fn center_distance(a: &EvalBox, b: &EvalBox) -> f64 {
    (a.center[0] - b.center[0]).hypot(a.center[1] - b.center[1])
}

/// `1 − IoU` of the two sizes with centers and orientation aligned.
pub fn scale_error(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let inter: f64 = (0..3).map(|i| a[i].min(b[i])).product();
    let union = a.iter().product::<f64>() + b.iter().product::<f64>() - inter;
    1.0 - if union > 0.0 { inter / union } else { 0.0 }
}

/// Smallest absolute difference of two angles modulo `period`.
pub fn yaw_difference(a: f64, b: f64, period: f64) -> f64 {
    let d = (a - b).rem_euclid(period);
    d.min(period - d)
}

fn tp_errors(pred: &EvalBox, gt: &EvalBox, period: f64) -> TpErrors {
    TpErrors {
        ate: center_distance(pred, gt),
        ase: scale_error(&pred.size, &gt.size),
        aoe: yaw_difference(pred.yaw, gt.yaw, period),
        ave: (pred.velocity[0] - gt.velocity[0]).hypot(pred.velocity[1] - gt.velocity[1]),
    }
}

/// Processes predictions of `class` by descending score (input order on ties),
/// matching each to the nearest unmatched ground truth of the same class and
/// frame whose center distance is below `threshold`.
pub fn match_and_accumulate(
    preds: &[EvalBox],
    gts: &[EvalBox],
    class: &str,
    threshold: f64,
    yaw_period: f64,
) -> Result<MatchResult, EvalError> {
    if let Some(index) = preds.iter().position(|p| !p.score.is_finite()) {
        return Err(EvalError::BadScore { index });
    }
    let mut by_frame: BTreeMap<&FrameKey, Vec<usize>> = BTreeMap::new();
    for (i, g) in gts
        .iter()
        .enumerate()
        .filter(|(_, g)| g.class_name == class)
    {
        by_frame.entry(&g.frame).or_default().push(i);
    }
    let num_gt = by_frame.values().map(Vec::len).sum();
    let mut order: Vec<usize> = (0..preds.len())
        .filter(|&i| preds[i].class_name == class)
        .collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score));
    let mut taken = vec![false; gts.len()];
    let mut out = MatchResult {
        num_gt,
        scores: Vec::with_capacity(order.len()),
        is_tp: Vec::with_capacity(order.len()),
        errors: Vec::new(),
    };
    for i in order {
        let p = &preds[i];
        let mut best: Option<(f64, usize)> = None;
        if let Some(candidates) = by_frame.get(&p.frame) {
            for &g in candidates {
                if taken[g] {
                    continue;
                }
                let d = center_distance(p, &gts[g]);
                if best.is_none_or(|b| d < b.0) {
                    best = Some((d, g));
                }
            }
        }
        out.scores.push(p.score);
        match best {
            Some((d, g)) if d < threshold => {
                taken[g] = true;
                out.is_tp.push(true);
                out.errors.push(tp_errors(p, &gts[g], yaw_period));
            }
            _ => out.is_tp.push(false),
        }
    }
    Ok(out)
}

/// Precision on the recall grid `0, 0.01, …, 1`: the highest precision
/// reached at any recall at or above each grid point, zero past the final
/// recall.
pub fn precision_envelope(m: &MatchResult) -> Vec<f64> {
    let mut grid = vec![0.0; RECALL_STEPS + 1];
    if m.num_gt == 0 {
        return grid;
    }
    let mut tp = 0usize;
    let mut tps = Vec::with_capacity(m.is_tp.len());
    let mut suffix_max = Vec::with_capacity(m.is_tp.len());
    for (k, &hit) in m.is_tp.iter().enumerate() {
        if hit {
            tp += 1;
        }
        tps.push(tp);
        suffix_max.push(tp as f64 / (k + 1) as f64);
    }
    for k in (0..suffix_max.len().saturating_sub(1)).rev() {
        suffix_max[k] = suffix_max[k].max(suffix_max[k + 1]);
    }
    // First prediction whose recall reaches j / RECALL_STEPS, compared exactly.
    let mut k = 0;
    for (j, g) in grid.iter_mut().enumerate() {
        while k < tps.len() && tps[k] * RECALL_STEPS < j * m.num_gt {
            k += 1;
        }
        if k == tps.len() {
            break;
        }
        *g = suffix_max[k];
    }
    grid
}

/// Normalized clipped area under the precision envelope over recall
/// `(clip_min, 1]`; `clip_min = 0` gives the unclipped variant.
pub fn average_precision(m: &MatchResult, clip_min: f64) -> f64 {
    let prec = precision_envelope(m);
    let first = (RECALL_STEPS as f64 * clip_min).round() as usize + 1;
    if first > RECALL_STEPS {
        return 0.0;
    }
    let kept = &prec[first..];
    let mean = kept.iter().map(|p| (p - clip_min).max(0.0)).sum::<f64>() / kept.len() as f64;
    (mean / (1.0 - clip_min)).clamp(0.0, 1.0)
}

pub fn nds(map: f64, errors: &TpErrors, aae: f64) -> f64 {
    let tp: f64 = [errors.ate, errors.ase, errors.aoe, errors.ave, aae]
        .iter()
        .map(|e| 1.0 - e.min(1.0))
        .sum();
    (5.0 * map + tp) / 10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdAp {
    pub threshold: f64,
    pub ap: f64,
    pub ap_unclipped: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class_name: String,
    pub num_gt: usize,
    pub num_pred: usize,
    pub ap: Vec<ThresholdAp>,
    pub mean_ap: f64,
    pub mean_ap_unclipped: f64,
    /// True positives at the TP-error threshold.
    pub num_tp: usize,
    /// Means over those true positives; 1.0 when there are none.
    pub errors: TpErrors,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: EvalConfig,
    /// How prediction scores were obtained.
    pub score_source: String,
    pub classes: Vec<ClassReport>,
    pub map: f64,
    pub map_unclipped: f64,
    pub errors: TpErrors,
    pub aae: f64,
    pub nds: f64,
    /// Per class and threshold, the 101-point precision envelope.
    #[serde(skip)]
    pub pr_curves: Vec<(String, f64, Vec<f64>)>,
}

impl EvalReport {
    /// `class,threshold,recall,precision` rows.
    pub fn pr_csv(&self) -> String {
        let mut s = String::from("class,threshold,recall,precision\n");
        for (class, th, prec) in &self.pr_curves {
            for (j, p) in prec.iter().enumerate() {
                s.push_str(&format!(
                    "{class},{th},{},{p}\n",
                    j as f64 / RECALL_STEPS as f64
                ));
            }
        }
        s
    }
}

fn relabel(boxes: &[EvalBox], mode: ClassMode) -> Vec<EvalBox> {
    boxes
        .iter()
        .filter_map(|b| {
            eval_class(&b.class_name, mode).map(|c| EvalBox {
                class_name: c.to_string(),
                ..b.clone()
            })
        })
        .collect()
}

/// Full evaluation. Classes without ground truth are not scored.
pub fn evaluate(
    preds: &[EvalBox],
    gts: &[EvalBox],
    config: &EvalConfig,
    score_source: &str,
) -> Result<EvalReport, EvalError> {
    config.validate()?;
    if let Some(index) = preds.iter().position(|p| !p.score.is_finite()) {
        return Err(EvalError::BadScore { index });
    }
    let preds = relabel(preds, config.class_mode);
    let gts = relabel(gts, config.class_mode);
    let mut class_names: Vec<String> = gts.iter().map(|g| g.class_name.clone()).collect();
    class_names.sort();
    class_names.dedup();
    let period = config.yaw_period();
    let jobs: Vec<(usize, f64)> = (0..class_names.len())
        .flat_map(|c| {
            let mut th = config.match_thresholds.clone();
            th.push(config.tp_threshold);
            th.into_iter().map(move |t| (c, t))
        })
        .collect();
    let matched = par::map(&jobs, |&(c, t)| {
        match_and_accumulate(&preds, &gts, &class_names[c], t, period)
    });
    let mut matched = matched
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?
        .into_iter();
    let mut classes = Vec::new();
    let mut pr_curves = Vec::new();
    for name in &class_names {
        let mut ap = Vec::new();
        for &t in &config.match_thresholds {
            let m = matched.next().expect("one result per job");
            ap.push(ThresholdAp {
                threshold: t,
                ap: average_precision(&m, config.clip_min),
                ap_unclipped: average_precision(&m, 0.0),
            });
            pr_curves.push((name.clone(), t, precision_envelope(&m)));
        }
        let tp_match = matched.next().expect("one result per job");
        let n = tp_match.errors.len();
        let errors = if n == 0 {
            TpErrors {
                ate: 1.0,
                ase: 1.0,
                aoe: 1.0,
                ave: 1.0,
            }
        } else {
            let mean =
                |f: fn(&TpErrors) -> f64| tp_match.errors.iter().map(f).sum::<f64>() / n as f64;
            TpErrors {
                ate: mean(|e| e.ate),
                ase: mean(|e| e.ase),
                aoe: mean(|e| e.aoe),
                ave: mean(|e| e.ave),
            }
        };
        let k = ap.len() as f64;
        classes.push(ClassReport {
            class_name: name.clone(),
            num_gt: tp_match.num_gt,
            num_pred: tp_match.scores.len(),
            mean_ap: ap.iter().map(|a| a.ap).sum::<f64>() / k,
            mean_ap_unclipped: ap.iter().map(|a| a.ap_unclipped).sum::<f64>() / k,
            ap,
            num_tp: n,
            errors,
        });
    }
    let nc = classes.len() as f64;
    let (map, map_unclipped, errors) = if classes.is_empty() {
        (
            0.0,
            0.0,
            TpErrors {
                ate: 1.0,
                ase: 1.0,
                aoe: 1.0,
                ave: 1.0,
            },
        )
    } else {
        let avg = |f: &dyn Fn(&ClassReport) -> f64| classes.iter().map(f).sum::<f64>() / nc;
        (
            avg(&|c| c.mean_ap),
            avg(&|c| c.mean_ap_unclipped),
            TpErrors {
                ate: avg(&|c| c.errors.ate),
                ase: avg(&|c| c.errors.ase),
                aoe: avg(&|c| c.errors.aoe),
                ave: avg(&|c| c.errors.ave),
            },
        )
    };
    Ok(EvalReport {
        config: config.clone(),
        score_source: score_source.to_string(),
        nds: nds(map, &errors, config.aae_fixed),
        classes,
        map,
        map_unclipped,
        errors,
        aae: config.aae_fixed,
        pr_curves,
    })
}

/// Ground-truth boxes of a scene as evaluation boxes.
pub fn gt_boxes(scene_id: &str, frames: &[GtFrame]) -> Vec<EvalBox> {
    frames
        .iter()
        .flat_map(|f| {
            f.boxes.iter().map(move |b| EvalBox {
                frame: (scene_id.to_string(), f.index),
                center: b.center,
                size: b.size,
                yaw: b.yaw,
                velocity: b.velocity,
                class_name: b.class_name.clone(),
                score: 1.0,
            })
        })
        .collect()
}

/// A box in `pseudo_labels.json` or `predictions.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub center: [f64; 3],
    pub size: [f64; 3],
    pub yaw: f64,
    #[serde(default)]
    pub velocity: [f64; 2],
    #[serde(default)]
    pub score: Option<f64>,
    #[serde(default)]
    pub class_name: Option<String>,
    #[serde(default)]
    pub pseudo_class: Option<usize>,
    #[serde(default)]
    pub num_points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionFrame {
    pub index: usize,
    pub boxes: Vec<DetectionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionScene {
    pub scene_id: String,
    pub frames: Vec<DetectionFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionFile {
    pub scenes: Vec<DetectionScene>,
}

pub fn load_detections(path: &Path) -> Result<DetectionFile, DatasetError> {
    read_json(path)
}

/// Point-count score proxy for unscored pseudo-labels.
pub fn point_count_score(num_points: usize) -> f64 {
    (num_points as f64 / 100.0).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSource {
    /// The `score` field.
    Stored,
    /// `min(1, num_points / 100)`.
    PointCount,
}

impl ScoreSource {
    pub fn describe(self) -> &'static str {
        match self {
            ScoreSource::Stored => "stored",
            ScoreSource::PointCount => "point_count_proxy: min(1, num_points / 100)",
        }
    }
}

/// Flattens a detection file into evaluation boxes. `class_of` names each
/// box's class (return `None` to drop it).
pub fn detection_boxes(
    file: &DetectionFile,
    score: ScoreSource,
    class_of: impl Fn(&DetectionRecord) -> Option<String>,
) -> Vec<EvalBox> {
    let mut out = Vec::new();
    for scene in &file.scenes {
        for frame in &scene.frames {
            for b in &frame.boxes {
                let Some(class_name) = class_of(b) else {
                    continue;
                };
                let s = match score {
                    ScoreSource::Stored => b.score.unwrap_or(1.0),
                    ScoreSource::PointCount => point_count_score(b.num_points.unwrap_or(0)),
                };
                out.push(EvalBox {
                    frame: (scene.scene_id.clone(), frame.index),
                    center: b.center,
                    size: b.size,
                    yaw: b.yaw,
                    velocity: b.velocity,
                    class_name,
                    score: s,
                });
            }
        }
    }
    out
}
