//! Pinhole camera, similarity transforms and rigid camera extrinsics.
//!
//! Camera convention: +z forward, +x right, +y down. Pixel (0, 0) is the
//! top-left pixel and pixel centers sit at integer coordinates.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Quat = UnitQuaternion<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(Error::Domain(format!("focal lengths must be positive, got ({fx}, {fy})")));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::Domain("principal point must be finite".into()));
        }
        Ok(Self { fx, fy, cx, cy, width, height })
    }

    /// Builds intrinsics from horizontal/vertical field of view with the
    /// principal point at the image center.
    pub fn from_fov(theta_w: f64, theta_h: f64, width: usize, height: usize) -> Result<Self> {
        for (name, theta) in [("theta_w", theta_w), ("theta_h", theta_h)] {
            if !theta.is_finite() || theta <= 0.0 || theta >= std::f64::consts::PI {
                return Err(Error::Domain(format!("{name} = {theta} outside (0, pi)")));
            }
        }
        if width == 0 || height == 0 {
            return Err(Error::Domain("image size must be nonzero".into()));
        }
        let w = width as f64;
        let h = height as f64;
        Ok(Self {
            fx: w / (2.0 * (theta_w / 2.0).tan()),
            fy: h / (2.0 * (theta_h / 2.0).tan()),
            cx: w / 2.0,
            cy: h / 2.0,
            width,
            height,
        })
    }

    /// Inverse of [`CameraIntrinsics::from_fov`]: `(theta_w, theta_h)`.
    pub fn fov(&self) -> (f64, f64) {
        (
            2.0 * (self.width as f64 / (2.0 * self.fx)).atan(),
            2.0 * (self.height as f64 / (2.0 * self.fy)).atan(),
        )
    }

    pub fn matrix(&self) -> Mat3 {
        Mat3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// `d * K^-1 * (u, v, 1)`.
    pub fn backproject(&self, u: f64, v: f64, depth: f64) -> Result<Vec3> {
        if !(depth > 0.0) || !depth.is_finite() {
            return Err(Error::Domain(format!("depth must be positive and finite, got {depth}")));
        }
        Ok(self.ray(u, v) * depth)
    }

    /// Ray direction through pixel `(u, v)` with unit z component, so that
    /// the ray parameter equals camera-frame depth.
    pub fn ray(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    pub fn project(&self, p: &Vec3) -> (f64, f64) {
        (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

/// Flips a unit quaternion into the hemisphere `w >= 0`.
pub fn canonical_quat(q: Quat) -> Quat {
    if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

/// `[w, x, y, z]` ordering used in every file format.
pub fn quat_to_wxyz(q: &Quat) -> [f64; 4] {
    [q.w, q.i, q.j, q.k]
}

pub fn quat_from_wxyz(q: [f64; 4]) -> Result<Quat> {
    let raw = Quaternion::new(q[0], q[1], q[2], q[3]);
    let n = raw.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::Domain(format!("quaternion {q:?} cannot be normalized")));
    }
    // already-unit input (e.g. read back from a file) is kept bit-exact
    if (n - 1.0).abs() < 1e-12 {
        return Ok(canonical_quat(UnitQuaternion::new_unchecked(raw)));
    }
    Ok(canonical_quat(UnitQuaternion::from_quaternion(raw)))
}

/// Similarity transform `x -> s R x + t` mapping canonical coordinates into
/// the camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Sim3Json", into = "Sim3Json")]
pub struct Sim3 {
    scale: f64,
    rotation: Quat,
    translation: Vec3,
}

impl Sim3 {
    pub fn new(scale: f64, rotation: Quat, translation: Vec3) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::Domain(format!("Sim3 scale must be positive, got {scale}")));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::Domain("Sim3 translation must be finite".into()));
        }
        Ok(Self {
            scale,
            rotation: canonical_quat(rotation),
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Quat::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn from_matrix(scale: f64, rotation: &Mat3, translation: Vec3) -> Result<Self> {
        let rot = nalgebra::Rotation3::from_matrix_unchecked(*rotation);
        Self::new(scale, UnitQuaternion::from_rotation_matrix(&rot), translation)
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn rotation(&self) -> &Quat {
        &self.rotation
    }

    pub fn rotation_matrix(&self) -> Mat3 {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn apply(&self, x: &Vec3) -> Vec3 {
        self.rotation * x * self.scale + self.translation
    }

    /// `x -> s^-1 R^T (x - t)`.
    pub fn inverse(&self) -> Self {
        let inv_rot = self.rotation.inverse();
        Self {
            scale: 1.0 / self.scale,
            rotation: canonical_quat(inv_rot),
            translation: -(inv_rot * self.translation) / self.scale,
        }
    }

    pub fn apply_inverse(&self, x: &Vec3) -> Vec3 {
        self.rotation.inverse_transform_vector(&(x - self.translation)) / self.scale
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Sim3) -> Self {
        Self {
            scale: self.scale * other.scale,
            rotation: canonical_quat(self.rotation * other.rotation),
            translation: self.rotation * other.translation * self.scale + self.translation,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Sim3Json {
    scale: f64,
    quat: [f64; 4],
    t: [f64; 3],
}

impl TryFrom<Sim3Json> for Sim3 {
    type Error = Error;

    fn try_from(j: Sim3Json) -> Result<Self> {
        Sim3::new(j.scale, quat_from_wxyz(j.quat)?, Vec3::from(j.t))
    }
}

impl From<Sim3> for Sim3Json {
    fn from(s: Sim3) -> Self {
        Sim3Json {
            scale: s.scale,
            quat: quat_to_wxyz(&s.rotation),
            t: [s.translation.x, s.translation.y, s.translation.z],
        }
    }
}

/// Rigid world-to-camera transform `x_cam = R x_world + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrinsics {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Extrinsics {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Camera at `eye` looking at `target`. `up` is the world up direction;
    /// camera +y points along the projection of `-up`.
    pub fn look_at(eye: &Vec3, target: &Vec3, up: &Vec3) -> Result<Self> {
        let forward = target - eye;
        let norm = forward.norm();
        if !(norm > 0.0) {
            return Err(Error::Degenerate("look_at eye coincides with target".into()));
        }
        let forward = forward / norm;
        let mut right = forward.cross(up);
        if right.norm() < 1e-9 {
            // looking straight along `up`; fall back to world +z as the up hint
            right = forward.cross(&Vec3::z());
            if right.norm() < 1e-9 {
                right = forward.cross(&Vec3::x());
            }
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rotation = Mat3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        Ok(Self {
            rotation,
            translation: -(rotation * eye),
        })
    }

    pub fn apply(&self, x: &Vec3) -> Vec3 {
        self.rotation * x + self.translation
    }

    pub fn camera_center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn optical_axis(&self) -> Vec3 {
        self.rotation.row(2).transpose()
    }
}
