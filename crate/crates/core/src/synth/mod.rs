//! Ray-cast ground truth: primitive objects resting on a ground plane,
//! seen by a pitched pinhole camera, rendered into perfect dense maps.

mod io;
mod noise;
mod shapes;

pub use io::{read_ground_truth, write_ground_truth, GroundTruth, GT_DIR, NO_INSTANCE};
pub use noise::{apply_noise, NoiseConfig};
pub use shapes::{Hit, Shape, BOX_FACE_COLORS, CHECKER_CELLS, CHECKER_DARK};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussians::logit;
use crate::geometry::{CameraIntrinsics, Extrinsics, Mat3, Quat, Sim3, Vec3};
use crate::maps::{DenseMaps, DepthKind, Vocabulary, GAUSSIAN_PARAMS};
use crate::render::{CanonicalViewSet, Image};
use crate::rng;

/// Object categories and the primitive each is built from. Class index
/// `i + 1` in the vocabulary; index 0 is the background.
pub const CATEGORIES: [(&str, Shape); 5] = [
    ("crate", Shape::Box),
    ("ball", Shape::Sphere),
    ("can", Shape::Cylinder),
    ("block", Shape::Box),
    ("drum", Shape::Cylinder),
];
pub const BACKGROUND_NAME: &str = "background";
/// Depth assigned to rays that miss everything, including the ground.
pub const FAR_DEPTH: f64 = 100.0;
pub const ORACLE_OPACITY: f64 = 0.95;
/// Failed draws for one object before the whole layout is redrawn.
const PLACEMENT_ATTEMPTS: usize = 500;
const PLACEMENT_RESTARTS: usize = 100;
/// Screen radius below which a candidate placement is rejected, as a
/// fraction of the shorter image side.
const MIN_RADIUS_FRACTION: f64 = 0.11;
/// Box faces seen closer to edge-on than this get almost no pixels, so the
/// single-view oracle cannot describe them.
const MIN_FACE_ANGLE_DEG: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub objects: usize,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    /// Horizontal field of view.
    pub fov_deg: f64,
    pub camera_height: f64,
    /// Downward tilt of the optical axis.
    pub pitch_deg: f64,
    pub embedding_dim: usize,
    /// Range of the canonical-to-metric scale (object edge length, meters).
    pub scale_range: (f64, f64),
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            objects: 5,
            seed: 0,
            width: 128,
            height: 128,
            fov_deg: 40.0,
            camera_height: 2.0,
            pitch_deg: 45.0,
            embedding_dim: 32,
            scale_range: (0.45, 0.65),
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Domain("image size must be nonzero".into()));
        }
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return Err(Error::Domain(format!("field of view {} outside (0, 180)", self.fov_deg)));
        }
        if !(self.camera_height > 0.0) {
            return Err(Error::Domain("camera height must be positive".into()));
        }
        if !(self.pitch_deg > 0.0 && self.pitch_deg < 90.0) {
            return Err(Error::Domain(format!("pitch {} outside (0, 90)", self.pitch_deg)));
        }
        if self.embedding_dim < 2 {
            return Err(Error::Domain("embedding dimension must be at least 2".into()));
        }
        let (lo, hi) = self.scale_range;
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::Domain(format!("invalid scale range ({lo}, {hi})")));
        }
        Ok(())
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        let tw = (self.fov_deg.to_radians() / 2.0).tan();
        let th = tw * self.height as f64 / self.width as f64;
        CameraIntrinsics::from_fov(2.0 * tw.atan(), 2.0 * th.atan(), self.width, self.height)
    }

    /// World (y up, ground at y = 0) to camera.
    pub fn extrinsics(&self) -> Result<Extrinsics> {
        let eye = Vec3::new(0.0, self.camera_height, 0.0);
        let reach = self.camera_height / self.pitch_deg.to_radians().tan();
        Extrinsics::look_at(&eye, &Vec3::new(0.0, 0.0, reach), &Vec3::y())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveObject {
    pub shape: Shape,
    /// Vocabulary class index.
    pub class: usize,
    /// Canonical to camera.
    pub pose: Sim3,
    /// Base color of non-box shapes.
    pub color: [f64; 3],
}

impl PrimitiveObject {
    /// Camera-frame ray `t -> t d` expressed in canonical coordinates.
    fn canonical_ray(&self, d: &Vec3) -> (Vec3, Vec3) {
        let origin = self.pose.apply_inverse(&Vec3::zeros());
        let dir = self.pose.rotation().inverse() * d / self.pose.scale();
        (origin, dir)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneOracle {
    pub config: SceneConfig,
    pub intrinsics: CameraIntrinsics,
    pub objects: Vec<PrimitiveObject>,
    pub vocab: Vocabulary,
}

fn random_unit<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

pub fn vocabulary(seed: u64, dim: usize) -> Vocabulary {
    let mut rng = rng::stream(seed, "vocab");
    let names: Vec<String> = std::iter::once(BACKGROUND_NAME)
        .chain(CATEGORIES.iter().map(|c| c.0))
        .map(String::from)
        .collect();
    let embeddings = names
        .iter()
        .map(|_| random_unit(&mut rng, dim).into_iter().map(|x| x as f32).collect())
        .collect();
    Vocabulary {
        names,
        background: 0,
        embeddings,
    }
}

/// Inward normals of the four side planes of the pixel-center frustum.
fn frustum_planes(k: &CameraIntrinsics) -> [Vec3; 4] {
    let left = -k.cx / k.fx;
    let right = (k.width as f64 - 1.0 - k.cx) / k.fx;
    let top = -k.cy / k.fy;
    let bottom = (k.height as f64 - 1.0 - k.cy) / k.fy;
    [
        Vec3::new(1.0, 0.0, -left).normalize(),
        Vec3::new(-1.0, 0.0, right).normalize(),
        Vec3::new(0.0, 1.0, -top).normalize(),
        Vec3::new(0.0, -1.0, bottom).normalize(),
    ]
}

/// World-frame axis-aligned bounds of an object's canonical cube.
pub fn world_bounds(obj: &PrimitiveObject, world_to_cam: &Extrinsics) -> (Vec3, Vec3) {
    let r = world_to_cam.rotation.transpose();
    let (mut lo, mut hi) = (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY));
    for corner in 0..8 {
        let c = Vec3::new((corner & 1) as f64, ((corner >> 1) & 1) as f64, ((corner >> 2) & 1) as f64);
        let w = r * (obj.pose.apply(&c) - world_to_cam.translation);
        lo = lo.inf(&w);
        hi = hi.sup(&w);
    }
    (lo, hi)
}

struct Placed {
    center: Vec3,
    cone: f64,
    lo: Vec3,
    hi: Vec3,
}

/// Smallest angle between a box face plane and the line of sight to the
/// face center.
fn min_face_angle(pose: &Sim3) -> f64 {
    let r = pose.rotation_matrix();
    let mut best = f64::INFINITY;
    for a in 0..3 {
        for side in [0.0, 1.0] {
            let mut c = Vec3::repeat(0.5);
            c[a] = side;
            let p = pose.apply(&c);
            let n = r.column(a);
            best = best.min((n.dot(&p).abs() / p.norm()).asin());
        }
    }
    best
}

/// Places `cfg.objects` primitives on the ground inside the view. Bounding
/// spheres lie fully in the frustum and their viewing cones are disjoint,
/// so objects never intersect or occlude each other.
pub fn generate_scene(cfg: &SceneConfig) -> Result<SceneOracle> {
    cfg.validate()?;
    let k = cfg.intrinsics()?;
    let ext = cfg.extrinsics()?;
    let vocab = vocabulary(cfg.seed, cfg.embedding_dim);
    let planes = frustum_planes(&k);
    let cam_to_world = ext.rotation.transpose();
    let eye = ext.camera_center();
    let mut rng = rng::stream(cfg.seed, "placement");
    let mut placed: Vec<Placed> = Vec::new();
    let mut objects = Vec::new();
    let (mut attempts, mut restarts, mut best) = (0, 0, 0);
    while objects.len() < cfg.objects {
        attempts += 1;
        if attempts > PLACEMENT_ATTEMPTS {
            // an unlucky early layout can block the rest; start over
            best = best.max(objects.len());
            restarts += 1;
            if restarts > PLACEMENT_RESTARTS {
                return Err(Error::Degenerate(format!(
                    "placed at most {best} of {} objects in {PLACEMENT_RESTARTS} layouts",
                    cfg.objects
                )));
            }
            placed.clear();
            objects.clear();
            attempts = 0;
        }
        let cat = rng.random_range(0..CATEGORIES.len());
        let scale = rng.random_range(cfg.scale_range.0..=cfg.scale_range.1);
        let yaw = rng.random_range(0.0..std::f64::consts::TAU);
        let color = [
            rng.random_range(0.2..0.9),
            rng.random_range(0.2..0.9),
            rng.random_range(0.2..0.9),
        ];
        let u = rng.random_range(0.0..k.width as f64);
        let v = rng.random_range(0.0..k.height as f64);
        let dir = cam_to_world * k.ray(u, v);
        if dir.y >= -1e-6 {
            continue;
        }
        let ground = eye + dir * (-eye.y / dir.y);

        let yaw_q = Quat::from_axis_angle(&Vec3::y_axis(), yaw);
        let world_rot: Mat3 = yaw_q.to_rotation_matrix().into_inner();
        let world_t = ground - world_rot * Vec3::new(0.5, 0.0, 0.5) * scale;
        let rotation = ext.rotation * world_rot;
        let translation = ext.rotation * world_t + ext.translation;
        let pose = Sim3::from_matrix(scale, &rotation, translation)?;
        let obj = PrimitiveObject {
            shape: CATEGORIES[cat].1,
            class: cat + 1,
            pose,
            color,
        };

        let radius = scale * obj.shape.bounding_radius();
        let center = pose.apply(&Vec3::repeat(0.5));
        let dist = center.norm();
        if dist <= radius * 1.5 {
            continue;
        }
        if planes.iter().any(|n| n.dot(&center) < radius * 1.05) {
            continue;
        }
        if obj.shape == Shape::Box && min_face_angle(&pose) < MIN_FACE_ANGLE_DEG.to_radians() {
            continue;
        }
        let cone = (radius / dist).asin();
        if k.fx.min(k.fy) * cone.tan() < MIN_RADIUS_FRACTION * k.width.min(k.height) as f64 {
            continue;
        }
        let dir_c = center / dist;
        let (lo, hi) = world_bounds(&obj, &ext);
        let clash = placed.iter().any(|p| {
            let sep = dir_c.dot(&(p.center / p.center.norm())).clamp(-1.0, 1.0).acos();
            let boxes = (0..3).all(|a| lo[a] < p.hi[a] && p.lo[a] < hi[a]);
            sep <= (cone + p.cone) * 1.02 || boxes
        });
        if clash {
            continue;
        }
        placed.push(Placed { center, cone, lo, hi });
        objects.push(obj);
        attempts = 0;
    }
    Ok(SceneOracle {
        config: *cfg,
        intrinsics: k,
        objects,
        vocab,
    })
}

/// Noise-free per-pixel ground truth in double precision.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleFrame {
    pub width: usize,
    pub height: usize,
    pub intrinsics: CameraIntrinsics,
    /// First-hit depth (camera z).
    pub depth: Vec<f64>,
    /// Depth where the ray leaves the first object hit; equals `depth` on
    /// the background.
    pub exit_depth: Vec<f64>,
    pub instance: Vec<Option<usize>>,
    /// Vocabulary class per pixel.
    pub class: Vec<u32>,
    /// Canonical coordinates of the first hit, zero on the background.
    pub nocs: Vec<f64>,
    pub front_color: Vec<Vec3>,
    pub back_color: Vec<Vec3>,
}

struct PixelHit {
    depth: f64,
    exit: f64,
    instance: Option<usize>,
    nocs: Vec3,
    front: Vec3,
    back: Vec3,
}

fn ground_color(p: &Vec3) -> Vec3 {
    let parity = (p.x.floor() as i64 + p.z.floor() as i64).rem_euclid(2);
    Vec3::repeat(if parity == 0 { 0.75 } else { 0.6 })
}

fn cast(scene: &SceneOracle, ext: &Extrinsics, u: usize, v: usize) -> PixelHit {
    let k = &scene.intrinsics;
    let d = k.ray(u as f64, v as f64);
    let mut best: Option<(usize, Hit, Vec3, Vec3)> = None;
    for (j, obj) in scene.objects.iter().enumerate() {
        let (o, dc) = obj.canonical_ray(&d);
        if let Some(h) = obj.shape.intersect(&o, &dc) {
            if best.as_ref().is_none_or(|b| h.t_in < b.1.t_in) {
                best = Some((j, h, o, dc));
            }
        }
    }
    let eye = ext.camera_center();
    let dw = ext.rotation.transpose() * d;
    let t_ground = if dw.y < 0.0 { -eye.y / dw.y } else { f64::INFINITY };
    match best {
        Some((j, h, o, dc)) if h.t_in < t_ground => {
            let obj = &scene.objects[j];
            let base = Vec3::from(obj.color);
            let front = o + dc * h.t_in;
            let back = o + dc * h.t_out;
            PixelHit {
                depth: h.t_in,
                exit: h.t_out,
                instance: Some(j),
                nocs: front.map(|c| c.clamp(0.0, 1.0)),
                front: obj.shape.albedo(&front, h.face_in, &base),
                back: obj.shape.albedo(&back, h.face_out, &base),
            }
        }
        _ => {
            let (depth, color) = if t_ground.is_finite() {
                (t_ground, ground_color(&(eye + dw * t_ground)))
            } else {
                (FAR_DEPTH, Vec3::repeat(1.0))
            };
            PixelHit {
                depth,
                exit: depth,
                instance: None,
                nocs: Vec3::zeros(),
                front: color,
                back: color,
            }
        }
    }
}

/// Ray casts every pixel of the scene.
pub fn raycast(scene: &SceneOracle) -> Result<OracleFrame> {
    let ext = scene.config.extrinsics()?;
    let (w, h) = (scene.intrinsics.width, scene.intrinsics.height);
    let hits: Vec<PixelHit> = (0..w * h).into_par_iter().map(|i| cast(scene, &ext, i % w, i / w)).collect();
    let bg = scene.vocab.background as u32;
    Ok(OracleFrame {
        width: w,
        height: h,
        intrinsics: scene.intrinsics,
        depth: hits.iter().map(|p| p.depth).collect(),
        exit_depth: hits.iter().map(|p| p.exit).collect(),
        instance: hits.iter().map(|p| p.instance).collect(),
        class: hits
            .iter()
            .map(|p| p.instance.map_or(bg, |j| scene.objects[j].class as u32))
            .collect(),
        nocs: hits.iter().flat_map(|p| [p.nocs.x, p.nocs.y, p.nocs.z]).collect(),
        front_color: hits.iter().map(|p| p.front).collect(),
        back_color: hits.iter().map(|p| p.back).collect(),
    })
}

impl OracleFrame {
    pub fn instance_pixels(&self, j: usize) -> Vec<usize> {
        (0..self.instance.len()).filter(|&p| self.instance[p] == Some(j)).collect()
    }

    /// The camera image (flat albedo).
    pub fn image(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.front_color.iter().flat_map(|c| [c.x, c.y, c.z]).collect(),
        }
    }

    /// Dense maps a perfect predictor would emit. Each pixel carries two
    /// Gaussians: one at the visible surface and one displaced along the
    /// ray to where it leaves the object.
    pub fn dense_maps(&self, vocab: &Vocabulary) -> Result<DenseMaps> {
        let n = self.width * self.height;
        let dim = vocab.dim();
        let k = &self.intrinsics;
        let mut embeddings = Vec::with_capacity(n * dim);
        let mut gaussians = Vec::with_capacity(n * 2 * GAUSSIAN_PARAMS);
        let high = logit(ORACLE_OPACITY) as f32;
        let low = logit(0.01) as f32;
        for p in 0..n {
            embeddings.extend_from_slice(&vocab.embeddings[self.class[p] as usize]);
            let ray = k.ray((p % self.width) as f64, (p / self.width) as f64);
            let object = self.instance[p].is_some();
            for (depth, offset, color, opacity) in [
                (self.depth[p], Vec3::zeros(), self.front_color[p], high),
                (
                    self.exit_depth[p],
                    ray * (self.exit_depth[p] - self.depth[p]),
                    self.back_color[p],
                    if object { high } else { low },
                ),
            ] {
                let footprint = depth / k.fx.min(k.fy);
                let ls = (0.6 * footprint).ln() as f32;
                gaussians.extend_from_slice(&[
                    offset.x as f32,
                    offset.y as f32,
                    offset.z as f32,
                    ls,
                    ls,
                    ls,
                    1.0,
                    0.0,
                    0.0,
                    0.0,
                    opacity,
                    color.x as f32,
                    color.y as f32,
                    color.z as f32,
                ]);
            }
        }
        let maps = DenseMaps {
            width: self.width,
            height: self.height,
            depth_kind: DepthKind::Metric,
            depth: self.depth.iter().map(|&d| d as f32).collect(),
            embedding_dim: dim,
            embeddings,
            nocs: self.nocs.iter().map(|&c| c as f32).collect(),
            gaussians_per_pixel: 2,
            gaussians,
            fov: k.fov(),
            vocab: vocab.clone(),
            provenance: None,
        };
        maps.validate()?;
        Ok(maps)
    }
}

/// Flat-albedo renders of `obj` alone in its canonical frame, one per view.
/// `None` renders empty (background-only) images.
pub fn canonical_gt_renders(obj: Option<&PrimitiveObject>, views: &CanonicalViewSet) -> Vec<Image> {
    views
        .targets
        .par_iter()
        .map(|t| {
            let k = &t.intrinsics;
            let origin = t.extrinsics.camera_center();
            let to_world = t.extrinsics.rotation.transpose();
            let data = (0..k.width * k.height)
                .flat_map(|i| {
                    let c = obj
                        .and_then(|o| {
                            let d = to_world * k.ray((i % k.width) as f64, (i / k.width) as f64);
                            let h = o.shape.intersect(&origin, &d)?;
                            Some(o.shape.albedo(&(origin + d * h.t_in), h.face_in, &Vec3::from(o.color)))
                        })
                        .unwrap_or(t.background);
                    [c.x, c.y, c.z]
                })
                .collect();
            Image {
                width: k.width,
                height: k.height,
                data,
            }
        })
        .collect()
}

/// `n` uniform-area surface samples in canonical coordinates.
pub fn sample_surface_points(shape: Shape, n: usize, seed: u64) -> Result<Vec<Vec3>> {
    if n == 0 {
        return Err(Error::Domain("need at least one surface sample".into()));
    }
    let mut rng = rng::stream(seed, "surface");
    Ok(shape.sample_surface(n, &mut rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::{canonical_views, psnr, RenderTarget};

    fn scene(seed: u64, objects: usize) -> SceneOracle {
        generate_scene(&SceneConfig {
            seed,
            objects,
            ..SceneConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(scene(3, 5), scene(3, 5));
        assert_ne!(scene(3, 5), scene(4, 5));
    }

    #[test]
    fn empty_scene_is_background() {
        let s = scene(1, 0);
        let f = raycast(&s).unwrap();
        assert!(f.instance.iter().all(Option::is_none));
        assert!(f.depth.iter().all(|d| d.is_finite() && *d < FAR_DEPTH));
    }

    #[test]
    fn bounding_boxes_disjoint() {
        for seed in 0..5 {
            let s = scene(seed, 5);
            let ext = s.config.extrinsics().unwrap();
            let boxes: Vec<_> = s.objects.iter().map(|o| world_bounds(o, &ext)).collect();
            for i in 0..5 {
                // resting on the ground
                assert!(boxes[i].0.y.abs() < 1e-9);
                for j in 0..i {
                    let overlap = (0..3).all(|a| boxes[i].0[a] < boxes[j].1[a] && boxes[j].0[a] < boxes[i].1[a]);
                    assert!(!overlap, "seed {seed}: objects {i} and {j}");
                }
            }
        }
    }

    #[test]
    fn nocs_depth_identity() {
        for seed in 0..3 {
            let s = scene(seed, 5);
            let f = raycast(&s).unwrap();
            let k = &s.intrinsics;
            for p in 0..f.depth.len() {
                let Some(j) = f.instance[p] else { continue };
                let c = Vec3::new(f.nocs[3 * p], f.nocs[3 * p + 1], f.nocs[3 * p + 2]);
                assert!(c.iter().all(|v| (0.0..=1.0).contains(v)));
                let x = k.backproject((p % f.width) as f64, (p / f.width) as f64, f.depth[p]).unwrap();
                assert!((s.objects[j].pose.apply(&c) - x).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn sphere_depth_closed_form() {
        let cfg = SceneConfig {
            objects: 0,
            width: 64,
            height: 64,
            ..SceneConfig::default()
        };
        let mut s = generate_scene(&cfg).unwrap();
        let (scale, dist) = (0.8, 2.0);
        // sphere center on the ray through the principal point, in front of the ground
        let center = Vec3::new(0.0, 0.0, dist);
        s.objects.push(PrimitiveObject {
            shape: Shape::Sphere,
            class: 2,
            pose: Sim3::new(scale, Quat::identity(), center - Vec3::repeat(0.5 * scale)).unwrap(),
            color: [0.5; 3],
        });
        let f = raycast(&s).unwrap();
        let p = 32 * 64 + 32;
        assert_eq!(f.instance[p], Some(0));
        assert!((f.depth[p] - (dist - 0.5 * scale)).abs() < 1e-12);
        assert!((f.exit_depth[p] - (dist + 0.5 * scale)).abs() < 1e-12);
        let min = (0..f.depth.len())
            .filter(|&q| f.instance[q].is_some())
            .map(|q| f.depth[q])
            .fold(f64::INFINITY, f64::min);
        assert_eq!(min, f.depth[p]);
    }

    #[test]
    fn canonical_render_matches_input_view() {
        let s = scene(2, 3);
        let f = raycast(&s).unwrap();
        let img = f.image();
        for (j, obj) in s.objects.iter().enumerate() {
            // the input camera seen from the canonical frame
            let r = obj.pose.rotation_matrix();
            let ext = Extrinsics {
                rotation: r,
                translation: obj.pose.translation() / obj.pose.scale(),
            };
            let views = CanonicalViewSet {
                targets: vec![RenderTarget {
                    intrinsics: s.intrinsics,
                    extrinsics: ext,
                    background: Vec3::repeat(1.0),
                }],
                directions: vec![Vec3::z()],
                resolution: s.intrinsics.width,
                radius: 1.0,
            };
            let canon = &canonical_gt_renders(Some(obj), &views)[0];
            let pixels = f.instance_pixels(j);
            let pick = |im: &Image| Image {
                width: pixels.len(),
                height: 1,
                data: pixels.iter().flat_map(|&p| im.data[3 * p..3 * p + 3].to_vec()).collect(),
            };
            let q = psnr(&pick(canon), &pick(&img)).unwrap();
            assert!(q > 30.0, "object {j}: {q} dB");
        }
    }

    #[test]
    fn empty_object_renders_white() {
        let views = canonical_views(12, 16, 2.0).unwrap();
        for im in canonical_gt_renders(None, &views) {
            assert!(im.data.iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn checker_face_area_head_on() {
        // camera on the +z axis looking at the z = 1 face
        let obj = PrimitiveObject {
            shape: Shape::Box,
            class: 1,
            pose: Sim3::identity(),
            color: [0.5; 3],
        };
        let res = 200;
        let fov = 40f64.to_radians();
        let k = CameraIntrinsics::from_fov(fov, fov, res, res).unwrap();
        let dist = 3.0;
        let eye = Vec3::new(0.5, 0.5, 1.0 + dist);
        let ext = Extrinsics::look_at(&eye, &Vec3::new(0.5, 0.5, 0.5), &Vec3::y()).unwrap();
        let views = CanonicalViewSet {
            targets: vec![RenderTarget {
                intrinsics: k,
                extrinsics: ext,
                background: Vec3::repeat(1.0),
            }],
            directions: vec![Vec3::z()],
            resolution: res,
            radius: dist,
        };
        let im = &canonical_gt_renders(Some(&obj), &views)[0];
        let face = Vec3::from(BOX_FACE_COLORS[5]);
        let (mut light, mut dark) = (0usize, 0usize);
        for i in 0..res * res {
            let c = im.pixel(i % res, i / res);
            if (c - face).norm() < 1e-12 {
                light += 1;
            } else if (c - face * CHECKER_DARK).norm() < 1e-12 {
                dark += 1;
            }
        }
        let side = k.fx / dist;
        let expected = side * side;
        let total = (light + dark) as f64;
        assert!((total - expected).abs() / expected < 0.02, "{total} vs {expected}");
        assert!((light as f64 - expected / 2.0).abs() / (expected / 2.0) < 0.02);
        assert!((dark as f64 - expected / 2.0).abs() / (expected / 2.0) < 0.02);
    }

    #[test]
    fn oracle_maps_are_valid() {
        let s = scene(5, 5);
        let f = raycast(&s).unwrap();
        let maps = f.dense_maps(&s.vocab).unwrap();
        assert_eq!(maps.gaussians_per_pixel, 2);
        let k = maps.intrinsics().unwrap();
        assert!((k.fx - s.intrinsics.fx).abs() < 1e-9);
    }
}
