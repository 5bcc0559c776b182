//! CPU Gaussian splatting with analytic gradients, SSIM, canonical view
//! rigs and the canonical-space supervision loss.

mod css;
mod raster;
mod ssim;
mod views;

pub use css::{
    css_fit, css_loss, css_loss_and_grad, psnr, random_init, CssLossReport, CssSupervision, FitConfig, FitTrace, LearningRates,
    DEFAULT_LAMBDA_SSIM,
};
pub use raster::{render, render_grad, GaussianGrad, RenderOptions, LOW_PASS, NEAR_PLANE, TILE};
pub use ssim::{ssim, ssim_grad, SsimReference, C1, C2, WINDOW};
pub use views::{
    canonical_views, canonical_views_with_fov, icosphere, CanonicalViewSet, CANONICAL_CENTER, DEFAULT_FOV_DEG, DEFAULT_RADIUS, DEFAULT_VIEWS,
};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Extrinsics, Vec3};

/// H×W×3 linear RGB image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn filled(width: usize, height: usize, color: Vec3) -> Self {
        let data = (0..width * height).flat_map(|_| [color.x, color.y, color.z]).collect();
        Self { width, height, data }
    }

    pub fn pixel(&self, x: usize, y: usize) -> Vec3 {
        let i = (y * self.width + x) * 3;
        Vec3::new(self.data[i], self.data[i + 1], self.data[i + 2])
    }

    pub fn check_same_shape(&self, other: &Image) -> Result<()> {
        if (self.width, self.height) != (other.width, other.height) || self.data.len() != other.data.len() {
            return Err(Error::shape(
                "image",
                format!("{}x{}", self.width, self.height),
                format!("{}x{}", other.width, other.height),
            ));
        }
        Ok(())
    }

    /// 8-bit quantization with round-to-nearest.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderTarget {
    pub intrinsics: CameraIntrinsics,
    /// World to camera.
    pub extrinsics: Extrinsics,
    pub background: Vec3,
}
