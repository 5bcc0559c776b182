//! Scene assembly from dense maps and end-to-end evaluation against the
//! synthetic ground truth.

use serde::{Deserialize, Serialize};

use crate::depth::{eval_depth, DepthEvalReport};
use crate::error::{Error, Result};
use crate::eval3d::{hungarian_max, recon_report, Recon3dReport, DEFAULT_F1_THRESHOLD};
use crate::gaussians::{materialize, to_canonical, CanonMode, GaussianSet};
use crate::io::scene::{object_file, InstanceRecord, SceneDescriptor, OBJECTS_DIR};
use crate::maps::DenseMaps;
use crate::pose::{eval_pose, rotation_error_deg, split_instances, translation_error, PoseEvalReport, RansacConfig};
use crate::rng;
use crate::semantics::{
    crf_mean_field, eval_segmentation, extract_instances, normalize_rows, top_k, unaries_from_embeddings, CrfConfig,
    LabelMap, SegEvalReport, BACKGROUND, DEFAULT_MIN_PIXELS, DEFAULT_TAU,
};
use crate::synth::{sample_surface_points, GroundTruth, NO_INSTANCE};

/// Candidates kept per pixel in the exported semantic map.
pub const TOP_K: usize = 5;
/// File value for "no label" in u16 maps.
pub const NO_LABEL: u16 = u16::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssembleConfig {
    pub tau: f64,
    pub crf: CrfConfig,
    pub min_pixels: usize,
    pub ransac: RansacConfig,
    pub canon_mode: CanonMode,
    pub seed: u64,
}

impl Default for AssembleConfig {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            crf: CrfConfig::default(),
            min_pixels: DEFAULT_MIN_PIXELS,
            ransac: RansacConfig::default(),
            canon_mode: CanonMode::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assembly {
    pub scene: SceneDescriptor,
    /// Canonical-frame Gaussians, one set per instance.
    pub objects: Vec<GaussianSet>,
    /// Inlier pixels of each instance.
    pub instance_pixels: Vec<Vec<usize>>,
    /// Per-pixel instance index or [`NO_LABEL`].
    pub instance_mask: Vec<u16>,
    /// H×W×5 class candidates, [`NO_LABEL`] for background.
    pub semantic_top5: Vec<u16>,
    /// Unary argmin labels (before the CRF).
    pub unary_labels: Vec<u32>,
    /// CRF labels.
    pub labels: Vec<u32>,
}

fn to_u16(label: u32) -> u16 {
    if label == BACKGROUND {
        NO_LABEL
    } else {
        label as u16
    }
}

pub fn from_u16(label: u16) -> u32 {
    if label == NO_LABEL {
        BACKGROUND
    } else {
        label as u32
    }
}

/// unaries -> CRF -> connected components -> per-component RANSAC split ->
/// canonical-frame Gaussians.
pub fn assemble(maps: &DenseMaps, cfg: &AssembleConfig) -> Result<Assembly> {
    maps.validate()?;
    cfg.ransac.validate()?;
    let k = maps.intrinsics()?;
    let (w, h) = (maps.width, maps.height);
    let n = maps.pixel_count();
    let depth = maps.metric_depth()?;
    let nocs: Vec<f64> = maps.nocs.iter().map(|&c| c as f64).collect();
    let bg = maps.vocab.background;

    let unary = unaries_from_embeddings(&maps.embeddings, maps.embedding_dim, w, h, &maps.vocab.embeddings, cfg.tau)?;
    let unary_labels = unary.argmin();
    let normalized = normalize_rows(&maps.embeddings, maps.embedding_dim, w, "embedding")?;
    let crf = crf_mean_field(&unary, &normalized, maps.embedding_dim, &cfg.crf)?;
    let labels = LabelMap::from_classes(w, h, &crf.classes, Some(bg));
    let candidates = extract_instances(&labels, cfg.min_pixels);

    let ransac_seed = rng::named_seed(cfg.seed, "ransac");
    let mut instances = Vec::new();
    let mut objects = Vec::new();
    let mut instance_pixels = Vec::new();
    let mut instance_mask = vec![NO_LABEL; n];
    for (ci, cand) in candidates.iter().enumerate() {
        let ransac = RansacConfig {
            seed: rng::derive_seed(ransac_seed, ci as u64),
            ..cfg.ransac
        };
        for split in split_instances(&cand.pixels, &nocs, &depth, &k, &ransac)? {
            let index = instances.len();
            if index >= NO_LABEL as usize {
                return Err(Error::Domain("too many instances for the u16 instance map".into()));
            }
            for &p in &split.pixels {
                instance_mask[p] = index as u16;
            }
            let camera_set = materialize(maps, &depth, &split.pixels, &k)?;
            objects.push(to_canonical(&camera_set, &split.pose, cfg.canon_mode));
            let label = cand.label as usize;
            instances.push(InstanceRecord {
                label_id: cand.label,
                label_name: maps.vocab.names.get(label).cloned().unwrap_or_default(),
                sim3: split.pose,
                pixel_count: cand.pixels.len(),
                inlier_count: split.pixels.len(),
                gaussians: format!("{OBJECTS_DIR}/{}", object_file(index)),
            });
            instance_pixels.push(split.pixels);
        }
    }

    let semantic_top5 = top_k(&crf.marginals, unary.classes, TOP_K, Some(bg))
        .into_iter()
        .map(to_u16)
        .collect();
    let scene = SceneDescriptor {
        instances,
        camera: k,
        provenance: maps.provenance.clone(),
    };
    scene.validate()?;
    Ok(Assembly {
        scene,
        objects,
        instance_pixels,
        instance_mask,
        semantic_top5,
        unary_labels,
        labels: crf.classes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub f1_threshold: f64,
    /// Gaussians below this opacity are left out of the predicted cloud.
    pub min_opacity: f64,
    pub surface_samples: usize,
    /// Minimum mask IoU for a prediction to count as matched.
    pub min_iou: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            f1_threshold: DEFAULT_F1_THRESHOLD,
            min_opacity: 0.05,
            surface_samples: 10_000,
            min_iou: 0.5,
            seed: 0,
        }
    }
}

/// What the evaluator reads from an assembled scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub scene: SceneDescriptor,
    pub objects: Vec<GaussianSet>,
    pub instance_mask: Vec<u16>,
    pub semantic_top5: Vec<u16>,
    /// Metric depth used by the pipeline.
    pub depth: Vec<f64>,
}

impl Prediction {
    pub fn from_assembly(a: &Assembly, depth: Vec<f64>) -> Self {
        Self {
            scene: a.scene.clone(),
            objects: a.objects.clone(),
            instance_mask: a.instance_mask.clone(),
            semantic_top5: a.semantic_top5.clone(),
            depth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectReport {
    pub gt_index: usize,
    pub pred_index: Option<usize>,
    pub mask_iou: f64,
    pub rotation_error_deg: Option<f64>,
    pub translation_error: Option<f64>,
    pub recon: Option<Recon3dReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneReport {
    pub depth: DepthEvalReport,
    /// Absent when the ground truth has no foreground.
    pub segmentation: Option<SegEvalReport>,
    /// Absent when the ground truth has no objects.
    pub pose: Option<PoseEvalReport>,
    pub objects: Vec<ObjectReport>,
    pub unmatched_predictions: Vec<usize>,
    /// Percentage of ground-truth objects with a matched prediction.
    pub instance_recall: f64,
}

fn mask_iou(a: &[usize], b: &[usize]) -> f64 {
    // both ascending
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Depth, segmentation, pose and per-object reconstruction metrics.
/// Predictions are matched to ground-truth objects by maximum-IoU
/// assignment on the instance masks.
pub fn evaluate_scene(pred: &Prediction, gt: &GroundTruth, cfg: &EvalConfig) -> Result<SceneReport> {
    let k = &gt.scene.intrinsics;
    let n = k.pixel_count();
    for (what, len) in [
        ("predicted depth", pred.depth.len()),
        ("instance mask", pred.instance_mask.len()),
        ("ground-truth depth", gt.depth.len()),
    ] {
        if len != n {
            return Err(Error::shape(what, n, len));
        }
    }
    if pred.semantic_top5.len() != n * TOP_K {
        return Err(Error::shape("semantic top-5", n * TOP_K, pred.semantic_top5.len()));
    }
    if pred.objects.len() != pred.scene.instances.len() {
        return Err(Error::shape("object Gaussian sets", pred.scene.instances.len(), pred.objects.len()));
    }

    let gt_depth: Vec<f64> = gt.depth.iter().map(|&d| d as f64).collect();
    let depth = eval_depth(&pred.depth, &gt_depth, None)?;

    let bg = gt.scene.vocab.background;
    let gt_classes: Vec<u32> = gt.class.iter().map(|&c| c as u32).collect();
    let gt_labels = LabelMap::from_classes(k.width, k.height, &gt_classes, Some(bg));
    let topk: Vec<u32> = pred.semantic_top5.iter().map(|&l| from_u16(l)).collect();
    let segmentation = match eval_segmentation(&topk, TOP_K, &gt_labels) {
        Ok(r) => Some(r),
        Err(Error::Empty(_)) => None,
        Err(e) => return Err(e),
    };

    let n_gt = gt.scene.objects.len();
    let n_pred = pred.scene.instances.len();
    let gt_masks: Vec<Vec<usize>> = (0..n_gt).map(|j| gt.instance_pixels(j)).collect();
    let mut pred_masks = vec![Vec::new(); n_pred];
    for (p, &i) in pred.instance_mask.iter().enumerate() {
        if i != NO_INSTANCE {
            let i = i as usize;
            if i >= n_pred {
                return Err(Error::Domain(format!("instance mask id {i} at pixel {p} has no scene entry")));
            }
            pred_masks[i].push(p);
        }
    }
    let ious: Vec<Vec<f64>> = gt_masks
        .iter()
        .map(|g| pred_masks.iter().map(|p| mask_iou(g, p)).collect())
        .collect();
    let assignment = if n_pred == 0 { vec![None; n_gt] } else { hungarian_max(&ious) };

    let mut objects = Vec::with_capacity(n_gt);
    let mut matched_pred = vec![false; n_pred];
    let mut poses = Vec::with_capacity(n_gt);
    for (j, obj) in gt.scene.objects.iter().enumerate() {
        let m = assignment[j].filter(|&i| ious[j][i] >= cfg.min_iou);
        let mut report = ObjectReport {
            gt_index: j,
            pred_index: m,
            mask_iou: m.map_or(0.0, |i| ious[j][i]),
            rotation_error_deg: None,
            translation_error: None,
            recon: None,
        };
        poses.push(m.map(|i| pred.scene.instances[i].sim3));
        if let Some(i) = m {
            matched_pred[i] = true;
            let p = &pred.scene.instances[i].sim3;
            report.rotation_error_deg = Some(rotation_error_deg(p, &obj.pose));
            report.translation_error = Some(translation_error(p, &obj.pose));
            let cloud: Vec<_> = pred.objects[i]
                .gaussians
                .iter()
                .filter(|g| g.opacity >= cfg.min_opacity)
                .map(|g| g.mean)
                .collect();
            if !cloud.is_empty() {
                let truth = sample_surface_points(obj.shape, cfg.surface_samples, rng::derive_seed(cfg.seed, j as u64))?;
                report.recon = Some(recon_report(&cloud, &truth, cfg.f1_threshold)?);
            }
        }
        objects.push(report);
    }
    let gt_poses: Vec<_> = gt.scene.objects.iter().map(|o| o.pose).collect();
    let pose = if n_gt == 0 { None } else { Some(eval_pose(&poses, &gt_poses)?) };
    let matched = objects.iter().filter(|o| o.pred_index.is_some()).count();
    Ok(SceneReport {
        depth,
        segmentation,
        pose,
        objects,
        unmatched_predictions: (0..n_pred).filter(|&i| !matched_pred[i]).collect(),
        instance_recall: if n_gt == 0 { 100.0 } else { 100.0 * matched as f64 / n_gt as f64 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_scene, raycast, SceneConfig};

    #[test]
    fn iou_of_sorted_masks() {
        assert_eq!(mask_iou(&[1, 2, 3], &[2, 3, 4]), 0.5);
        assert_eq!(mask_iou(&[], &[]), 0.0);
    }

    #[test]
    fn oracle_round_trip_single_scene() {
        let scene = generate_scene(&SceneConfig {
            seed: 11,
            ..SceneConfig::default()
        })
        .unwrap();
        let frame = raycast(&scene).unwrap();
        let maps = frame.dense_maps(&scene.vocab).unwrap();
        let out = assemble(&maps, &AssembleConfig::default()).unwrap();
        assert_eq!(out.scene.instances.len(), scene.objects.len());
        let gt = GroundTruth::new(&scene, &frame).unwrap();
        let pred = Prediction::from_assembly(&out, maps.metric_depth().unwrap());
        let report = evaluate_scene(&pred, &gt, &EvalConfig::default()).unwrap();
        assert_eq!(report.instance_recall, 100.0);
        for o in &report.objects {
            assert!(o.mask_iou > 0.99);
            assert!(o.rotation_error_deg.unwrap() < 1.0);
            assert!(o.translation_error.unwrap() < 0.01);
        }
    }

    #[test]
    fn empty_prediction_reports_zero_recall() {
        let scene = generate_scene(&SceneConfig {
            seed: 12,
            objects: 2,
            ..SceneConfig::default()
        })
        .unwrap();
        let frame = raycast(&scene).unwrap();
        let gt = GroundTruth::new(&scene, &frame).unwrap();
        let n = scene.intrinsics.pixel_count();
        let pred = Prediction {
            scene: SceneDescriptor {
                instances: vec![],
                camera: scene.intrinsics,
                provenance: None,
            },
            objects: vec![],
            instance_mask: vec![NO_LABEL; n],
            semantic_top5: vec![NO_LABEL; n * TOP_K],
            depth: frame.depth.clone(),
        };
        let r = evaluate_scene(&pred, &gt, &EvalConfig::default()).unwrap();
        assert_eq!(r.instance_recall, 0.0);
        assert_eq!(r.pose.unwrap().acc_joint, 0.0);
        assert!(r.objects.iter().all(|o| o.pred_index.is_none()));
    }
}
