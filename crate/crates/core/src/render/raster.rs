//! Tile-based EWA splatting, forward and reverse mode.
//!
//! Per pixel, Gaussians are composited front to back in order of camera
//! depth (ties by input index):
//!
//! ```text
//! alpha_i = o_i exp(-1/2 d^T conic_i d)
//! C       = sum_i c_i alpha_i T_i + bg T_end,   T_i = prod_{j<i} (1 - alpha_j)
//! ```

use nalgebra::{Matrix2, Matrix2x3};
use rayon::prelude::*;

use super::{Image, RenderTarget};
use crate::error::{Error, Result};
use crate::gaussians::{quat_matrix, GaussianPrimitive};
use crate::geometry::{Mat3, Vec3};

pub const TILE: usize = 16;
/// Screen-space dilation added to every projected covariance, px².
pub const LOW_PASS: f64 = 0.3;
/// Gaussians whose center is closer than this (camera z) are skipped.
pub const NEAR_PLANE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RenderOptions {
    /// Truncate each splat at this many standard deviations. `None`
    /// evaluates every Gaussian at every pixel.
    pub cutoff: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GaussianGrad {
    pub mean: Vec3,
    pub log_scale: Vec3,
    /// With respect to the raw (unnormalized) quaternion `[w, x, y, z]`.
    pub rotation: [f64; 4],
    /// With respect to the opacity probability.
    pub opacity: f64,
    pub color: Vec3,
}

impl GaussianGrad {
    pub fn add_assign(&mut self, o: &GaussianGrad) {
        self.mean += o.mean;
        self.log_scale += o.log_scale;
        for k in 0..4 {
            self.rotation[k] += o.rotation[k];
        }
        self.opacity += o.opacity;
        self.color += o.color;
    }

    pub fn scaled(&self, s: f64) -> GaussianGrad {
        GaussianGrad {
            mean: self.mean * s,
            log_scale: self.log_scale * s,
            rotation: self.rotation.map(|r| r * s),
            opacity: self.opacity * s,
            color: self.color * s,
        }
    }
}

struct Projected {
    index: usize,
    depth: f64,
    mean: [f64; 2],
    conic: [f64; 3],
    opacity: f64,
    color: Vec3,
    cam: Vec3,
    jw: Matrix2x3<f64>,
    sigma: Mat3,
    /// Inclusive tile range `(x0, x1, y0, y1)`.
    tiles: (usize, usize, usize, usize),
}

fn covariance3(g: &GaussianPrimitive) -> (Mat3, Mat3, Vec3) {
    let r = quat_matrix(&g.rotation);
    let s = g.log_scale.map(f64::exp);
    let m = r * Mat3::from_diagonal(&s);
    (m * m.transpose(), r, s)
}

fn project(g: &GaussianPrimitive, index: usize, target: &RenderTarget, opts: &RenderOptions) -> Option<Projected> {
    let k = &target.intrinsics;
    let w = &target.extrinsics.rotation;
    let cam = target.extrinsics.apply(&g.mean);
    if !(cam.z >= NEAR_PLANE) {
        return None;
    }
    let (x, y, z) = (cam.x, cam.y, cam.z);
    let j = Matrix2x3::new(k.fx / z, 0.0, -k.fx * x / (z * z), 0.0, k.fy / z, -k.fy * y / (z * z));
    let jw = j * w;
    let (sigma, _, _) = covariance3(g);
    let cov = jw * sigma * jw.transpose() + Matrix2::identity() * LOW_PASS;
    let (a, b, c) = (cov[(0, 0)], 0.5 * (cov[(0, 1)] + cov[(1, 0)]), cov[(1, 1)]);
    let det = a * c - b * b;
    if !(det > 0.0) || !det.is_finite() {
        return None;
    }
    let mean = [k.fx * x / z + k.cx, k.fy * y / z + k.cy];
    let tiles_x = k.width.div_ceil(TILE);
    let tiles_y = k.height.div_ceil(TILE);
    let tiles = match opts.cutoff {
        None => (0, tiles_x - 1, 0, tiles_y - 1),
        Some(cut) => {
            let mid = 0.5 * (a + c);
            let lambda = mid + (0.25 * (a - c) * (a - c) + b * b).sqrt();
            let r = cut * lambda.sqrt();
            let lo_x = (mean[0] - r).floor().max(0.0);
            let hi_x = (mean[0] + r).ceil().min(k.width as f64 - 1.0);
            let lo_y = (mean[1] - r).floor().max(0.0);
            let hi_y = (mean[1] + r).ceil().min(k.height as f64 - 1.0);
            if !(lo_x <= hi_x && lo_y <= hi_y) {
                return None;
            }
            (
                lo_x as usize / TILE,
                hi_x as usize / TILE,
                lo_y as usize / TILE,
                hi_y as usize / TILE,
            )
        }
    };
    Some(Projected {
        index,
        depth: z,
        mean,
        conic: [c / det, -b / det, a / det],
        opacity: g.opacity,
        color: g.color,
        cam,
        jw,
        sigma,
        tiles,
    })
}

struct Prepared {
    projected: Vec<Projected>,
    /// Per tile, indices into `projected` in compositing order.
    bins: Vec<Vec<usize>>,
    tiles_x: usize,
    tiles_y: usize,
}

fn prepare(gaussians: &[GaussianPrimitive], target: &RenderTarget, opts: &RenderOptions) -> Result<Prepared> {
    let k = &target.intrinsics;
    if k.width == 0 || k.height == 0 {
        return Err(Error::Domain("render target has zero size".into()));
    }
    if let Some(i) = gaussians.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            what: "gaussian parameters".into(),
            index: i,
        });
    }
    if let Some(c) = opts.cutoff {
        if !(c > 0.0) {
            return Err(Error::Domain(format!("cutoff must be positive, got {c}")));
        }
    }
    let mut projected: Vec<Projected> = gaussians
        .par_iter()
        .enumerate()
        .filter_map(|(i, g)| project(g, i, target, opts))
        .collect();
    projected.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));
    let tiles_x = k.width.div_ceil(TILE);
    let tiles_y = k.height.div_ceil(TILE);
    let mut bins = vec![Vec::new(); tiles_x * tiles_y];
    for (slot, p) in projected.iter().enumerate() {
        let (x0, x1, y0, y1) = p.tiles;
        for ty in y0..=y1 {
            for tx in x0..=x1 {
                bins[ty * tiles_x + tx].push(slot);
            }
        }
    }
    Ok(Prepared {
        projected,
        bins,
        tiles_x,
        tiles_y,
    })
}

#[inline]
fn power(p: &Projected, dx: f64, dy: f64) -> f64 {
    -0.5 * (p.conic[0] * dx * dx + 2.0 * p.conic[1] * dx * dy + p.conic[2] * dy * dy)
}

fn tile_pixels(tile: usize, tiles_x: usize, width: usize, height: usize) -> impl Iterator<Item = (usize, usize)> {
    let (tx, ty) = (tile % tiles_x, tile / tiles_x);
    let (x0, y0) = (tx * TILE, ty * TILE);
    let (x1, y1) = ((x0 + TILE).min(width), (y0 + TILE).min(height));
    (y0..y1).flat_map(move |y| (x0..x1).map(move |x| (x, y)))
}

pub fn render(gaussians: &[GaussianPrimitive], target: &RenderTarget, opts: &RenderOptions) -> Result<Image> {
    let prep = prepare(gaussians, target, opts)?;
    let (w, h) = (target.intrinsics.width, target.intrinsics.height);
    let min_power = opts.cutoff.map_or(f64::NEG_INFINITY, |c| -0.5 * c * c);
    let bg = target.background;
    let tiles: Vec<Vec<(usize, Vec3)>> = (0..prep.tiles_x * prep.tiles_y)
        .into_par_iter()
        .map(|tile| {
            let bin = &prep.bins[tile];
            tile_pixels(tile, prep.tiles_x, w, h)
                .map(|(x, y)| {
                    let (px, py) = (x as f64, y as f64);
                    let mut color = Vec3::zeros();
                    let mut t = 1.0;
                    for &slot in bin {
                        let p = &prep.projected[slot];
                        let pw = power(p, px - p.mean[0], py - p.mean[1]);
                        if pw < min_power {
                            continue;
                        }
                        let alpha = p.opacity * pw.exp();
                        color += p.color * (alpha * t);
                        t *= 1.0 - alpha;
                    }
                    (y * w + x, color + bg * t)
                })
                .collect()
        })
        .collect();
    let mut data = vec![0.0; w * h * 3];
    for tile in tiles {
        for (i, c) in tile {
            data[i * 3..i * 3 + 3].copy_from_slice(c.as_slice());
        }
    }
    Ok(Image {
        width: w,
        height: h,
        data,
    })
}

/// Screen-space gradient accumulator: mean (2), conic (3), opacity, color (3).
type Acc = [f64; 9];

/// Gradients of `sum(image_grad * render(...))` with respect to every
/// Gaussian parameter. Culled Gaussians get zero gradients.
pub fn render_grad(
    gaussians: &[GaussianPrimitive],
    target: &RenderTarget,
    opts: &RenderOptions,
    image_grad: &[f64],
) -> Result<Vec<GaussianGrad>> {
    let (w, h) = (target.intrinsics.width, target.intrinsics.height);
    if image_grad.len() != w * h * 3 {
        return Err(Error::shape("image gradient", w * h * 3, image_grad.len()));
    }
    let prep = prepare(gaussians, target, opts)?;
    let min_power = opts.cutoff.map_or(f64::NEG_INFINITY, |c| -0.5 * c * c);
    let bg = target.background;

    let per_tile: Vec<Vec<Acc>> = (0..prep.tiles_x * prep.tiles_y)
        .into_par_iter()
        .map(|tile| {
            let bin = &prep.bins[tile];
            let mut acc = vec![[0.0; 9]; bin.len()];
            // (position in bin, alpha, exp(power), dx, dy, transmittance)
            let mut hits: Vec<(usize, f64, f64, f64, f64, f64)> = Vec::new();
            for (x, y) in tile_pixels(tile, prep.tiles_x, w, h) {
                let i = y * w + x;
                let g = Vec3::new(image_grad[i * 3], image_grad[i * 3 + 1], image_grad[i * 3 + 2]);
                if g == Vec3::zeros() {
                    continue;
                }
                let (px, py) = (x as f64, y as f64);
                hits.clear();
                let mut t = 1.0;
                for (k, &slot) in bin.iter().enumerate() {
                    let p = &prep.projected[slot];
                    let (dx, dy) = (px - p.mean[0], py - p.mean[1]);
                    let pw = power(p, dx, dy);
                    if pw < min_power {
                        continue;
                    }
                    let e = pw.exp();
                    let alpha = p.opacity * e;
                    hits.push((k, alpha, e, dx, dy, t));
                    t *= 1.0 - alpha;
                }
                let mut behind = bg;
                for &(k, alpha, e, dx, dy, t_i) in hits.iter().rev() {
                    let p = &prep.projected[bin[k]];
                    let a = &mut acc[k];
                    let w_c = alpha * t_i;
                    a[6] += w_c * g.x;
                    a[7] += w_c * g.y;
                    a[8] += w_c * g.z;
                    let d_alpha = t_i * g.dot(&(p.color - behind));
                    a[5] += d_alpha * e;
                    let d_pow = d_alpha * alpha;
                    let [qa, qb, qc] = p.conic;
                    a[0] += d_pow * (qa * dx + qb * dy);
                    a[1] += d_pow * (qb * dx + qc * dy);
                    a[2] += d_pow * (-0.5 * dx * dx);
                    a[3] += d_pow * (-dx * dy);
                    a[4] += d_pow * (-0.5 * dy * dy);
                    behind = p.color * alpha + behind * (1.0 - alpha);
                }
            }
            acc
        })
        .collect();

    let mut total = vec![[0.0; 9]; prep.projected.len()];
    for (tile, acc) in per_tile.iter().enumerate() {
        for (k, &slot) in prep.bins[tile].iter().enumerate() {
            for c in 0..9 {
                total[slot][c] += acc[k][c];
            }
        }
    }

    let chained: Vec<(usize, GaussianGrad)> = prep
        .projected
        .par_iter()
        .zip(total.par_iter())
        .map(|(p, acc)| (p.index, chain(p, &gaussians[p.index], target, acc)))
        .collect();
    let mut out = vec![GaussianGrad::default(); gaussians.len()];
    for (i, g) in chained {
        out[i] = g;
    }
    Ok(out)
}

fn chain(p: &Projected, g: &GaussianPrimitive, target: &RenderTarget, acc: &Acc) -> GaussianGrad {
    let k = &target.intrinsics;
    let w = &target.extrinsics.rotation;
    let (x, y, z) = (p.cam.x, p.cam.y, p.cam.z);
    let (fx, fy) = (k.fx, k.fy);

    let q = Matrix2::new(p.conic[0], p.conic[1], p.conic[1], p.conic[2]);
    let g_conic = Matrix2::new(acc[2], 0.5 * acc[3], 0.5 * acc[3], acc[4]);
    let d_cov2 = -(q * g_conic * q);
    let d_sigma = p.jw.transpose() * d_cov2 * p.jw;
    let d_jw = 2.0 * d_cov2 * p.jw * p.sigma;
    let d_j = d_jw * w.transpose();

    let z2 = z * z;
    let z3 = z2 * z;
    let mut dt = Vec3::new(acc[0] * fx / z, acc[1] * fy / z, -acc[0] * fx * x / z2 - acc[1] * fy * y / z2);
    dt.x += d_j[(0, 2)] * (-fx / z2);
    dt.y += d_j[(1, 2)] * (-fy / z2);
    dt.z += d_j[(0, 0)] * (-fx / z2)
        + d_j[(0, 2)] * (2.0 * fx * x / z3)
        + d_j[(1, 1)] * (-fy / z2)
        + d_j[(1, 2)] * (2.0 * fy * y / z3);
    let mean = w.transpose() * dt;

    let (_, r, s) = covariance3(g);
    let m = r * Mat3::from_diagonal(&s);
    let d_m = 2.0 * d_sigma * m;
    let mut d_r = d_m;
    let mut log_scale = Vec3::zeros();
    for c in 0..3 {
        let d_s: f64 = (0..3).map(|row| d_m[(row, c)] * r[(row, c)]).sum();
        log_scale[c] = d_s * s[c];
        for row in 0..3 {
            d_r[(row, c)] *= s[c];
        }
    }

    GaussianGrad {
        mean,
        log_scale,
        rotation: quat_grad(&g.rotation, &d_r),
        opacity: acc[5],
        color: Vec3::new(acc[6], acc[7], acc[8]),
    }
}

/// Pulls a rotation-matrix gradient back to the raw quaternion.
fn quat_grad(raw: &[f64; 4], d_r: &Mat3) -> [f64; 4] {
    let n = (raw[0] * raw[0] + raw[1] * raw[1] + raw[2] * raw[2] + raw[3] * raw[3]).sqrt();
    let [w, x, y, z] = raw.map(|v| v / n);
    let g = |i: usize, j: usize| d_r[(i, j)];
    let gw = 2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    let gx = 2.0
        * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) + w * g(2, 1)
            - 2.0 * x * g(2, 2));
    let gy = 2.0
        * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) + z * g(2, 1)
            - 2.0 * y * g(2, 2));
    let gz = 2.0
        * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2.0 * z * g(1, 1) + y * g(1, 2)
            + x * g(2, 0)
            + y * g(2, 1));
    let gq = [gw, gx, gy, gz];
    let unit = [w, x, y, z];
    let dot: f64 = gq.iter().zip(&unit).map(|(a, b)| a * b).sum();
    [0, 1, 2, 3].map(|i| (gq[i] - unit[i] * dot) / n)
}
