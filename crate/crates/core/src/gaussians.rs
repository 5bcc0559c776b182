//! Anisotropic 3D Gaussian primitives, per-pixel materialization and
//! camera/canonical frame changes.

use nalgebra::{Quaternion, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Mat3, Sim3, Vec3};
use crate::maps::{self, DenseMaps};

pub const DEFAULT_OFFSET_TAU: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    Camera,
    Canonical,
}

impl Frame {
    pub fn as_str(&self) -> &'static str {
        match self {
            Frame::Camera => "camera",
            Frame::Canonical => "canonical",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPrimitive {
    pub mean: Vec3,
    pub log_scale: Vec3,
    /// `[w, x, y, z]`; normalized wherever a rotation matrix is formed.
    pub rotation: [f64; 4],
    /// Probability in `(0, 1)`.
    pub opacity: f64,
    pub color: Vec3,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Rotation matrix of a (not necessarily unit) quaternion `[w, x, y, z]`.
pub fn quat_matrix(q: &[f64; 4]) -> Mat3 {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
    Mat3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

pub fn normalize_quat(q: [f64; 4]) -> Option<[f64; 4]> {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    if !(n > 0.0) || !n.is_finite() {
        return None;
    }
    Some([q[0] / n, q[1] / n, q[2] / n, q[3] / n])
}

fn to_unit(q: &[f64; 4]) -> UnitQuaternion<f64> {
    UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]))
}

fn from_unit(q: &UnitQuaternion<f64>) -> [f64; 4] {
    let q = crate::geometry::canonical_quat(*q);
    [q.w, q.i, q.j, q.k]
}

impl GaussianPrimitive {
    pub fn rotation_matrix(&self) -> Mat3 {
        quat_matrix(&self.rotation)
    }

    pub fn scale(&self) -> Vec3 {
        self.log_scale.map(f64::exp)
    }

    /// `R diag(exp(2 log_scale)) R^T`.
    pub fn covariance(&self) -> Mat3 {
        let r = self.rotation_matrix();
        let s2 = self.log_scale.map(|l| (2.0 * l).exp());
        r * Mat3::from_diagonal(&s2) * r.transpose()
    }

    pub fn is_finite(&self) -> bool {
        self.mean.iter().chain(self.log_scale.iter()).chain(self.color.iter()).all(|v| v.is_finite())
            && self.rotation.iter().all(|v| v.is_finite())
            && self.opacity.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSet {
    pub frame: Frame,
    pub gaussians: Vec<GaussianPrimitive>,
    /// Flat index of the pixel each Gaussian was spawned from, if known.
    pub source_pixels: Option<Vec<usize>>,
}

impl GaussianSet {
    pub fn new(frame: Frame, gaussians: Vec<GaussianPrimitive>) -> Self {
        Self {
            frame,
            gaussians,
            source_pixels: None,
        }
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CanonMode {
    /// Transform means only; shape parameters are already canonical.
    #[default]
    MeansOnly,
    /// Transform means, rotations and log-scales by the full similarity.
    FullSim3,
}

/// Builds camera-frame Gaussians for `pixels`: mean = back-projected point
/// plus the predicted offset, k Gaussians per pixel.
pub fn materialize(
    maps: &DenseMaps,
    metric_depth: &[f64],
    pixels: &[usize],
    k: &CameraIntrinsics,
) -> Result<GaussianSet> {
    let per = maps.gaussians_per_pixel;
    let mut gaussians = Vec::with_capacity(pixels.len() * per);
    let mut sources = Vec::with_capacity(pixels.len() * per);
    for &p in pixels {
        if p >= maps.pixel_count() {
            return Err(Error::Domain(format!("pixel index {p} outside image")));
        }
        let (u, v) = ((p % maps.width) as f64, (p / maps.width) as f64);
        let anchor = k.backproject(u, v, metric_depth[p])?;
        for i in 0..per {
            let raw = maps.gaussian_params(p, i);
            if let Some(j) = raw.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    what: format!("gaussian {i} parameter {j} at pixel (u={u}, v={v})"),
                    index: p,
                });
            }
            let f = |r: std::ops::Range<usize>| -> Vec<f64> { raw[r].iter().map(|&x| x as f64).collect() };
            let off = f(maps::OFFSET);
            let ls = f(maps::LOG_SCALE);
            let q = f(maps::ROTATION);
            let col = f(maps::COLOR);
            let rotation = normalize_quat([q[0], q[1], q[2], q[3]]).ok_or_else(|| {
                Error::Domain(format!("zero quaternion for gaussian {i} at pixel (u={u}, v={v})"))
            })?;
            gaussians.push(GaussianPrimitive {
                mean: anchor + Vec3::new(off[0], off[1], off[2]),
                log_scale: Vec3::new(ls[0], ls[1], ls[2]),
                rotation,
                opacity: sigmoid(raw[maps::OPACITY_LOGIT] as f64),
                color: Vec3::new(col[0], col[1], col[2]),
            });
            sources.push(p);
        }
    }
    Ok(GaussianSet {
        frame: Frame::Camera,
        gaussians,
        source_pixels: Some(sources),
    })
}

/// Camera-space offsets of every Gaussian at `pixels`.
pub fn offsets(maps: &DenseMaps, pixels: &[usize]) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(pixels.len() * maps.gaussians_per_pixel);
    for &p in pixels {
        for i in 0..maps.gaussians_per_pixel {
            let o = &maps.gaussian_params(p, i)[maps::OFFSET];
            out.push(Vec3::new(o[0] as f64, o[1] as f64, o[2] as f64));
        }
    }
    out
}

/// Applies `sim` to every Gaussian. In `FullSim3` mode rotations are
/// premultiplied by the similarity rotation and log-scales shifted by ln s.
pub fn transform(set: &GaussianSet, sim: &Sim3, mode: CanonMode, frame: Frame) -> GaussianSet {
    let ln_s = sim.scale().ln();
    let gaussians = set
        .gaussians
        .iter()
        .map(|g| {
            let mut out = *g;
            out.mean = sim.apply(&g.mean);
            if mode == CanonMode::FullSim3 {
                out.rotation = from_unit(&(sim.rotation() * to_unit(&g.rotation)));
                out.log_scale = g.log_scale.add_scalar(ln_s);
            }
            out
        })
        .collect();
    GaussianSet {
        frame,
        gaussians,
        source_pixels: set.source_pixels.clone(),
    }
}

/// Maps camera-frame Gaussians into the canonical frame of an object with
/// pose `pose` (canonical -> camera).
pub fn to_canonical(set: &GaussianSet, pose: &Sim3, mode: CanonMode) -> GaussianSet {
    transform(set, &pose.inverse(), mode, Frame::Canonical)
}

pub fn from_canonical(set: &GaussianSet, pose: &Sim3, mode: CanonMode) -> GaussianSet {
    transform(set, pose, mode, Frame::Camera)
}

/// Hinge prior on offset magnitude: `sum max(0, |offset|_1 - tau)`.
pub fn offset_regularizer(offsets: &[Vec3], tau: f64) -> Result<f64> {
    if !(tau >= 0.0) {
        return Err(Error::Domain(format!("offset tau must be nonnegative, got {tau}")));
    }
    Ok(offsets.iter().map(|o| (o.abs().sum() - tau).max(0.0)).sum())
}
