//! Dense per-pixel prediction bundle.
//!
//! Per-Gaussian packing (14 floats, fixed order):
//!
//! | index  | field                              |
//! |--------|------------------------------------|
//! | 0..3   | camera-space offset from the ray point |
//! | 3..6   | log-scale                          |
//! | 6..10  | quaternion `w, x, y, z`            |
//! | 10     | opacity logit                      |
//! | 11..14 | RGB color (SH degree 0, `[0, 1]`)  |

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CameraIntrinsics;

pub const GAUSSIAN_PARAMS: usize = 14;
pub const DEFAULT_GAUSSIANS_PER_PIXEL: usize = 2;

pub const OFFSET: std::ops::Range<usize> = 0..3;
pub const LOG_SCALE: std::ops::Range<usize> = 3..6;
pub const ROTATION: std::ops::Range<usize> = 6..10;
pub const OPACITY_LOGIT: usize = 10;
pub const COLOR: std::ops::Range<usize> = 11..14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthKind {
    Metric,
    CanonicalInverse,
}

/// Category names with their text-space embeddings. One row must be the
/// background ("other") class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub names: Vec<String>,
    pub background: usize,
    pub embeddings: Vec<Vec<f32>>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.names.is_empty() {
            return Err(Error::Empty("vocabulary".into()));
        }
        if self.embeddings.len() != self.names.len() {
            return Err(Error::shape("vocabulary rows", self.names.len(), self.embeddings.len()));
        }
        let dim = self.dim();
        if let Some(bad) = self.embeddings.iter().position(|r| r.len() != dim) {
            return Err(Error::shape(format!("vocabulary row {bad}"), dim, self.embeddings[bad].len()));
        }
        if self.background >= self.names.len() {
            return Err(Error::Domain(format!(
                "background class {} outside vocabulary of {}",
                self.background,
                self.names.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMaps {
    pub width: usize,
    pub height: usize,
    pub depth_kind: DepthKind,
    /// H×W, metric meters or canonical inverse depth per `depth_kind`.
    pub depth: Vec<f32>,
    pub embedding_dim: usize,
    /// H×W×D.
    pub embeddings: Vec<f32>,
    /// H×W×3, zero on background.
    pub nocs: Vec<f32>,
    pub gaussians_per_pixel: usize,
    /// H×W×k×14, see module docs for the packing.
    pub gaussians: Vec<f32>,
    /// `(theta_w, theta_h)` in radians.
    pub fov: (f64, f64),
    pub vocab: Vocabulary,
    pub provenance: Option<serde_json::Value>,
}

impl DenseMaps {
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        CameraIntrinsics::from_fov(self.fov.0, self.fov.1, self.width, self.height)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.pixel_count();
        let check = |what: &str, len: usize, per: usize| {
            if len != n * per {
                Err(Error::shape(what, n * per, len))
            } else {
                Ok(())
            }
        };
        check("depth", self.depth.len(), 1)?;
        check("embeddings", self.embeddings.len(), self.embedding_dim)?;
        check("nocs", self.nocs.len(), 3)?;
        check("gaussians", self.gaussians.len(), self.gaussians_per_pixel * GAUSSIAN_PARAMS)?;
        self.vocab.validate()?;
        if self.vocab.dim() != self.embedding_dim {
            return Err(Error::shape("vocabulary embedding dim", self.embedding_dim, self.vocab.dim()));
        }
        if let Some(i) = self.depth.iter().position(|d| !d.is_finite()) {
            return Err(Error::NonFinite {
                what: format!("depth (pixel u={}, v={})", i % self.width, i / self.width),
                index: i,
            });
        }
        Ok(())
    }

    /// Metric depth in f64, converting canonical inverse depth if needed.
    pub fn metric_depth(&self) -> Result<Vec<f64>> {
        let depth: Vec<f64> = self.depth.iter().map(|&d| d as f64).collect();
        match self.depth_kind {
            DepthKind::Metric => Ok(depth),
            DepthKind::CanonicalInverse => {
                let k = self.intrinsics()?;
                crate::depth::from_canonical_inverse(&depth, &k)
            }
        }
    }

    pub fn embedding(&self, pixel: usize) -> &[f32] {
        &self.embeddings[pixel * self.embedding_dim..(pixel + 1) * self.embedding_dim]
    }

    pub fn nocs_at(&self, pixel: usize) -> [f64; 3] {
        let c = &self.nocs[pixel * 3..pixel * 3 + 3];
        [c[0] as f64, c[1] as f64, c[2] as f64]
    }

    /// Packed parameters of Gaussian `i` at `pixel`.
    pub fn gaussian_params(&self, pixel: usize, i: usize) -> &[f32] {
        let start = (pixel * self.gaussians_per_pixel + i) * GAUSSIAN_PARAMS;
        &self.gaussians[start..start + GAUSSIAN_PARAMS]
    }
}
