//! Multi-view photometric supervision of canonical-frame Gaussians and an
//! Adam fitting loop over it.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::raster::{render, render_grad, GaussianGrad, RenderOptions};
use super::ssim::SsimReference;
use super::views::CanonicalViewSet;
use super::Image;
use crate::error::{Error, Result};
use crate::gaussians::{logit, normalize_quat, sigmoid, Frame, GaussianPrimitive, GaussianSet};
use crate::geometry::Vec3;

pub const DEFAULT_LAMBDA_SSIM: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CssLossReport {
    pub total: f64,
    pub l1: Vec<f64>,
    pub ssim: Vec<f64>,
    pub lambda_ssim: f64,
}

/// Ground-truth renders paired with their cameras.
pub struct CssSupervision {
    pub views: CanonicalViewSet,
    pub images: Vec<Image>,
    refs: Vec<SsimReference>,
}

impl CssSupervision {
    pub fn new(views: CanonicalViewSet, images: Vec<Image>) -> Result<Self> {
        if images.len() != views.len() {
            return Err(Error::shape("ground-truth views", views.len(), images.len()));
        }
        for (img, t) in images.iter().zip(&views.targets) {
            if (img.width, img.height) != (t.intrinsics.width, t.intrinsics.height) {
                return Err(Error::shape(
                    "ground-truth image",
                    format!("{}x{}", t.intrinsics.width, t.intrinsics.height),
                    format!("{}x{}", img.width, img.height),
                ));
            }
        }
        let refs = images.par_iter().map(SsimReference::new).collect::<Result<Vec<_>>>()?;
        Ok(Self { views, images, refs })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    a.check_same_shape(b)?;
    let mse = a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.data.len() as f64;
    Ok(-10.0 * mse.log10())
}

fn check_frame(set: &GaussianSet) -> Result<()> {
    if set.frame != Frame::Canonical {
        return Err(Error::Domain("canonical-space supervision needs canonical-frame Gaussians".into()));
    }
    Ok(())
}

fn view_loss(sup: &CssSupervision, v: usize, img: &Image) -> Result<(f64, f64)> {
    let gt = &sup.images[v];
    let l1 = gt.data.iter().zip(&img.data).map(|(a, b)| (a - b).abs()).sum::<f64>() / gt.data.len() as f64;
    Ok((l1, sup.refs[v].ssim(img)?))
}

fn report(parts: Vec<(f64, f64)>, lambda: f64) -> CssLossReport {
    let total = parts.iter().map(|(l1, s)| l1 + lambda * (1.0 - s)).sum();
    let (l1, ssim) = parts.into_iter().unzip();
    CssLossReport {
        total,
        l1,
        ssim,
        lambda_ssim: lambda,
    }
}

fn subset_loss(
    gaussians: &[GaussianPrimitive],
    sup: &CssSupervision,
    views: &[usize],
    lambda: f64,
    opts: &RenderOptions,
) -> Result<CssLossReport> {
    let parts = views
        .par_iter()
        .map(|&v| {
            let img = render(gaussians, &sup.views.targets[v], opts)?;
            view_loss(sup, v, &img)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(report(parts, lambda))
}

fn subset_loss_and_grad(
    gaussians: &[GaussianPrimitive],
    sup: &CssSupervision,
    views: &[usize],
    lambda: f64,
    opts: &RenderOptions,
) -> Result<(CssLossReport, Vec<GaussianGrad>)> {
    let per_view = views
        .par_iter()
        .map(|&v| {
            let target = &sup.views.targets[v];
            let img = render(gaussians, target, opts)?;
            let gt = &sup.images[v];
            let n = gt.data.len() as f64;
            let l1 = gt.data.iter().zip(&img.data).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
            let (s, ds) = sup.refs[v].ssim_grad(&img)?;
            let image_grad: Vec<f64> = img
                .data
                .iter()
                .zip(&gt.data)
                .zip(&ds)
                .map(|((p, g), d)| {
                    let sign = if p > g {
                        1.0
                    } else if p < g {
                        -1.0
                    } else {
                        0.0
                    };
                    sign / n - lambda * d
                })
                .collect();
            let grads = render_grad(gaussians, target, opts, &image_grad)?;
            Ok(((l1, s), grads))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = vec![GaussianGrad::default(); gaussians.len()];
    let mut parts = Vec::with_capacity(per_view.len());
    for (part, grads) in per_view {
        parts.push(part);
        for (t, g) in total.iter_mut().zip(&grads) {
            t.add_assign(g);
        }
    }
    Ok((report(parts, lambda), total))
}

/// Sum over views of mean L1 plus `lambda (1 - SSIM)`.
pub fn css_loss(set: &GaussianSet, sup: &CssSupervision, lambda: f64, opts: &RenderOptions) -> Result<CssLossReport> {
    check_frame(set)?;
    let all: Vec<usize> = (0..sup.len()).collect();
    subset_loss(&set.gaussians, sup, &all, lambda, opts)
}

pub fn css_loss_and_grad(
    set: &GaussianSet,
    sup: &CssSupervision,
    lambda: f64,
    opts: &RenderOptions,
) -> Result<(CssLossReport, Vec<GaussianGrad>)> {
    check_frame(set)?;
    let all: Vec<usize> = (0..sup.len()).collect();
    subset_loss_and_grad(&set.gaussians, sup, &all, lambda, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningRates {
    pub mean: f64,
    pub log_scale: f64,
    pub rotation: f64,
    pub opacity_logit: f64,
    pub color: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            mean: 0.005,
            log_scale: 0.02,
            rotation: 0.02,
            opacity_logit: 0.05,
            color: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub steps: usize,
    pub lr: LearningRates,
    pub beta1: f64,
    pub beta2: f64,
    pub lambda_ssim: f64,
    pub cutoff: Option<f64>,
    /// Views per step. `None` uses every view and rejects steps that raise
    /// the loss; a minibatch takes plain Adam steps.
    pub batch_views: Option<usize>,
    pub log_scale_range: (f64, f64),
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            steps: 300,
            lr: LearningRates::default(),
            beta1: 0.9,
            beta2: 0.999,
            lambda_ssim: DEFAULT_LAMBDA_SSIM,
            cutoff: Some(3.5),
            batch_views: None,
            log_scale_range: (-7.0, 0.0),
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let lr = &self.lr;
        for (name, v) in [
            ("mean", lr.mean),
            ("log_scale", lr.log_scale),
            ("rotation", lr.rotation),
            ("opacity_logit", lr.opacity_logit),
            ("color", lr.color),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("learning rate {name} must be finite and nonnegative, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Domain("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.lambda_ssim >= 0.0) {
            return Err(Error::Domain(format!("lambda_ssim must be nonnegative, got {}", self.lambda_ssim)));
        }
        if self.batch_views == Some(0) {
            return Err(Error::Domain("batch_views must be positive".into()));
        }
        if !(self.log_scale_range.0 < self.log_scale_range.1) {
            return Err(Error::Domain("log_scale_range must be increasing".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FitTrace {
    /// Loss at the start and after every accepted step (full-batch), or the
    /// minibatch loss of every step.
    pub losses: Vec<f64>,
    pub accepted: usize,
    pub rejected: usize,
    pub final_loss: f64,
}

const PARAMS: usize = 14;

fn pack(g: &GaussianPrimitive) -> [f64; PARAMS] {
    let mut p = [0.0; PARAMS];
    p[0..3].copy_from_slice(g.mean.as_slice());
    p[3..6].copy_from_slice(g.log_scale.as_slice());
    p[6..10].copy_from_slice(&g.rotation);
    p[10] = logit(g.opacity.clamp(1e-6, 1.0 - 1e-6));
    p[11..14].copy_from_slice(g.color.as_slice());
    p
}

fn unpack(p: &[f64]) -> GaussianPrimitive {
    GaussianPrimitive {
        mean: Vec3::new(p[0], p[1], p[2]),
        log_scale: Vec3::new(p[3], p[4], p[5]),
        rotation: [p[6], p[7], p[8], p[9]],
        opacity: sigmoid(p[10]),
        color: Vec3::new(p[11], p[12], p[13]),
    }
}

fn flatten_grad(g: &GaussianGrad, prim: &GaussianPrimitive) -> [f64; PARAMS] {
    let mut out = [0.0; PARAMS];
    out[0..3].copy_from_slice(g.mean.as_slice());
    out[3..6].copy_from_slice(g.log_scale.as_slice());
    out[6..10].copy_from_slice(&g.rotation);
    out[10] = g.opacity * prim.opacity * (1.0 - prim.opacity);
    out[11..14].copy_from_slice(g.color.as_slice());
    out
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn update(&mut self, grad: &[f64], b1: f64, b2: f64) {
        self.t += 1;
        for ((m, v), g) in self.m.iter_mut().zip(self.v.iter_mut()).zip(grad) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
        }
    }

    /// Bias-corrected step direction for parameter `i`.
    fn direction(&self, i: usize, b1: f64, b2: f64) -> f64 {
        let mh = self.m[i] / (1.0 - b1.powi(self.t));
        let vh = self.v[i] / (1.0 - b2.powi(self.t));
        mh / (vh.sqrt() + 1e-12)
    }
}

fn rate(lr: &LearningRates, k: usize) -> f64 {
    match k {
        0..=2 => lr.mean,
        3..=5 => lr.log_scale,
        6..=9 => lr.rotation,
        10 => lr.opacity_logit,
        _ => lr.color,
    }
}

fn step_params(params: &[f64], adam: &Adam, cfg: &FitConfig, scale: f64) -> Vec<f64> {
    let mut next = params.to_vec();
    for (i, p) in next.iter_mut().enumerate() {
        *p -= scale * rate(&cfg.lr, i % PARAMS) * adam.direction(i, cfg.beta1, cfg.beta2);
    }
    for chunk in next.chunks_mut(PARAMS) {
        for v in &mut chunk[3..6] {
            *v = v.clamp(cfg.log_scale_range.0, cfg.log_scale_range.1);
        }
        let q = normalize_quat([chunk[6], chunk[7], chunk[8], chunk[9]]).unwrap_or([1.0, 0.0, 0.0, 0.0]);
        chunk[6..10].copy_from_slice(&q);
        chunk[10] = chunk[10].clamp(-15.0, 15.0);
        for v in &mut chunk[11..14] {
            *v = v.clamp(0.0, 1.0);
        }
    }
    next
}

fn prims(params: &[f64]) -> Vec<GaussianPrimitive> {
    params.chunks(PARAMS).map(unpack).collect()
}

fn flat_grads(grads: &[GaussianGrad], gs: &[GaussianPrimitive]) -> Vec<f64> {
    grads.iter().zip(gs).flat_map(|(g, p)| flatten_grad(g, p)).collect()
}

fn check_loss(loss: f64, step: usize) -> Result<()> {
    if loss.is_nan() {
        return Err(Error::Diverged {
            step,
            message: "loss is NaN".into(),
        });
    }
    Ok(())
}

/// `n` isotropic Gaussians with means uniform in the unit cube, standard
/// deviation `sigma`, opacity 0.5 and uniform random colors.
pub fn random_init(n: usize, sigma: f64, seed: u64) -> Result<GaussianSet> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Domain(format!("initial sigma must be positive, got {sigma}")));
    }
    let mut rng = crate::rng::stream(seed, "css-init");
    let gaussians = (0..n)
        .map(|_| GaussianPrimitive {
            mean: Vec3::new(rng.random(), rng.random(), rng.random()),
            log_scale: Vec3::repeat(sigma.ln()),
            rotation: [1.0, 0.0, 0.0, 0.0],
            opacity: 0.5,
            color: Vec3::new(rng.random(), rng.random(), rng.random()),
        })
        .collect();
    Ok(GaussianSet::new(Frame::Canonical, gaussians))
}

/// Adam on the CSS loss over every Gaussian parameter (opacity through its
/// logit). Returns the fitted set and the loss trace.
pub fn css_fit(init: &GaussianSet, sup: &CssSupervision, cfg: &FitConfig) -> Result<(GaussianSet, FitTrace)> {
    check_frame(init)?;
    cfg.validate()?;
    let opts = RenderOptions { cutoff: cfg.cutoff };
    let mut params: Vec<f64> = init.gaussians.iter().flat_map(pack).collect();
    let mut adam = Adam {
        m: vec![0.0; params.len()],
        v: vec![0.0; params.len()],
        t: 0,
    };
    let mut trace = FitTrace::default();
    let all: Vec<usize> = (0..sup.len()).collect();

    match cfg.batch_views {
        None => {
            let gs = prims(&params);
            let (mut rep, grads) = subset_loss_and_grad(&gs, sup, &all, cfg.lambda_ssim, &opts)?;
            check_loss(rep.total, 0)?;
            let mut grad = flat_grads(&grads, &gs);
            trace.losses.push(rep.total);
            let mut scale = 1.0;
            for step in 0..cfg.steps {
                adam.update(&grad, cfg.beta1, cfg.beta2);
                let mut moved = false;
                for _ in 0..12 {
                    let cand = step_params(&params, &adam, cfg, scale);
                    let gs = prims(&cand);
                    let (r, g) = subset_loss_and_grad(&gs, sup, &all, cfg.lambda_ssim, &opts)?;
                    check_loss(r.total, step + 1)?;
                    if r.total <= rep.total {
                        params = cand;
                        rep = r;
                        grad = flat_grads(&g, &gs);
                        trace.accepted += 1;
                        trace.losses.push(rep.total);
                        scale = (scale * 1.5).min(1.0);
                        moved = true;
                        break;
                    }
                    trace.rejected += 1;
                    scale *= 0.5;
                }
                if !moved {
                    break;
                }
            }
            trace.final_loss = rep.total;
        }
        Some(batch) => {
            let batch = batch.min(sup.len());
            let mut rng = crate::rng::stream(cfg.seed, "css-fit");
            for step in 0..cfg.steps {
                let mut views = sample(&mut rng, sup.len(), batch).into_vec();
                views.sort_unstable();
                let gs = prims(&params);
                let (r, g) = subset_loss_and_grad(&gs, sup, &views, cfg.lambda_ssim, &opts)?;
                check_loss(r.total, step)?;
                trace.losses.push(r.total);
                adam.update(&flat_grads(&g, &gs), cfg.beta1, cfg.beta2);
                params = step_params(&params, &adam, cfg, 1.0);
                trace.accepted += 1;
            }
            let final_rep = subset_loss(&prims(&params), sup, &all, cfg.lambda_ssim, &opts)?;
            check_loss(final_rep.total, cfg.steps)?;
            trace.final_loss = final_rep.total;
        }
    }

    let mut out = init.clone();
    out.gaussians = prims(&params);
    Ok((out, trace))
}
