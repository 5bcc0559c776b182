use super::{ransac_sim3, RansacConfig};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Sim3, Vec3};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SplitInstance {
    /// Inlier pixels, ascending flat indices.
    pub pixels: Vec<usize>,
    pub pose: Sim3,
}

/// NOCS (H×W×3) and back-projected camera points for `pixels`.
pub fn correspondences(
    pixels: &[usize],
    nocs: &[f64],
    depth: &[f64],
    k: &CameraIntrinsics,
) -> Result<(Vec<Vec3>, Vec<Vec3>)> {
    let n = k.pixel_count();
    if nocs.len() != n * 3 {
        return Err(Error::shape("NOCS map", n * 3, nocs.len()));
    }
    if depth.len() != n {
        return Err(Error::shape("depth map", n, depth.len()));
    }
    let mut can = Vec::with_capacity(pixels.len());
    let mut cam = Vec::with_capacity(pixels.len());
    for &p in pixels {
        if p >= n {
            return Err(Error::Domain(format!("pixel index {p} outside image")));
        }
        let (u, v) = ((p % k.width) as f64, (p / k.width) as f64);
        can.push(Vec3::new(nocs[p * 3], nocs[p * 3 + 1], nocs[p * 3 + 2]));
        cam.push(k.backproject(u, v, depth[p])?);
    }
    Ok((can, cam))
}

/// Greedy multi-instance extraction inside one semantic mask: fit, emit the
/// inliers as an object, remove them and repeat while enough support is
/// left. Round `r` uses a seed derived from `cfg.seed` and `r`.
pub fn split_instances(
    mask: &[usize],
    nocs: &[f64],
    depth: &[f64],
    k: &CameraIntrinsics,
    cfg: &RansacConfig,
) -> Result<Vec<SplitInstance>> {
    let (can, cam) = correspondences(mask, nocs, depth, k)?;
    let mut remaining: Vec<usize> = (0..mask.len()).collect();
    let mut out = Vec::new();
    let floor = cfg.min_inliers.max(3);
    let mut round = 0u64;
    while remaining.len() >= floor {
        let sub_can: Vec<Vec3> = remaining.iter().map(|&i| can[i]).collect();
        let sub_cam: Vec<Vec3> = remaining.iter().map(|&i| cam[i]).collect();
        let round_cfg = RansacConfig {
            seed: rng::derive_seed(cfg.seed, round),
            ..*cfg
        };
        let Some(found) = ransac_sim3(&sub_can, &sub_cam, &round_cfg)? else {
            break;
        };
        let mut taken = vec![false; remaining.len()];
        for &i in &found.inliers {
            taken[i] = true;
        }
        let mut pixels: Vec<usize> = found.inliers.iter().map(|&i| mask[remaining[i]]).collect();
        pixels.sort_unstable();
        out.push(SplitInstance {
            pixels,
            pose: found.pose,
        });
        remaining = remaining
            .iter()
            .zip(&taken)
            .filter(|(_, &t)| !t)
            .map(|(&i, _)| i)
            .collect();
        round += 1;
    }
    Ok(out)
}
