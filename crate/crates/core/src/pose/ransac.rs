use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::umeyama_sim3;
use crate::error::{Error, Result};
use crate::geometry::{Sim3, Vec3};
use crate::rng;

/// Hypotheses scored per scheduling round; the adaptive stopping rule is
/// only checked between rounds so the result never depends on thread timing.
const BATCH: usize = 32;
const SAMPLE_RETRIES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RansacConfig {
    /// Inlier distance in camera units (meters).
    pub threshold: f64,
    pub max_iterations: usize,
    pub confidence: f64,
    pub min_inliers: usize,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            threshold: 0.01,
            max_iterations: 2000,
            confidence: 0.999,
            min_inliers: 50,
            seed: 0,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0) || !self.threshold.is_finite() {
            return Err(Error::Domain(format!("inlier threshold must be positive, got {}", self.threshold)));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::Domain(format!("confidence must lie in (0, 1), got {}", self.confidence)));
        }
        if self.max_iterations == 0 {
            return Err(Error::Domain("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacResult {
    pub pose: Sim3,
    /// Ascending indices into the correspondence arrays.
    pub inliers: Vec<usize>,
    /// Hypotheses drawn before stopping.
    pub iterations: usize,
}

#[derive(Clone, Copy)]
struct Score {
    count: usize,
    mean: f64,
}

impl Score {
    fn better_than(&self, other: &Score) -> bool {
        self.count > other.count || (self.count == other.count && self.mean < other.mean)
    }
}

fn score(pose: &Sim3, canonical: &[Vec3], camera: &[Vec3], threshold: f64) -> Score {
    let (mut count, mut sum) = (0usize, 0.0);
    for (c, p) in canonical.iter().zip(camera) {
        let r = (p - pose.apply(c)).norm();
        if r < threshold {
            count += 1;
            sum += r;
        }
    }
    Score {
        count,
        mean: if count > 0 { sum / count as f64 } else { f64::INFINITY },
    }
}

fn inliers(pose: &Sim3, canonical: &[Vec3], camera: &[Vec3], threshold: f64) -> Vec<usize> {
    (0..canonical.len())
        .filter(|&i| (camera[i] - pose.apply(&canonical[i])).norm() < threshold)
        .collect()
}

fn collinear(a: &Vec3, b: &Vec3, c: &Vec3) -> bool {
    let (u, v) = (b - a, c - a);
    u.cross(&v).norm_squared() <= 1e-10 * u.norm_squared() * v.norm_squared()
}

fn hypothesis(seed: u64, iteration: usize, canonical: &[Vec3], camera: &[Vec3]) -> Option<Sim3> {
    let mut rng = rng::indexed(seed, iteration as u64);
    let n = canonical.len();
    for _ in 0..SAMPLE_RETRIES {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n - 1);
        let j = j + usize::from(j >= i);
        let mut k = rng.random_range(0..n - 2);
        let (lo, hi) = (i.min(j), i.max(j));
        if k >= lo {
            k += 1;
        }
        if k >= hi {
            k += 1;
        }
        if collinear(&canonical[i], &canonical[j], &canonical[k]) {
            continue;
        }
        let c = [canonical[i], canonical[j], canonical[k]];
        let p = [camera[i], camera[j], camera[k]];
        return umeyama_sim3(&c, &p).ok();
    }
    None
}

fn required_iterations(inlier_ratio: f64, confidence: f64, cap: usize) -> usize {
    let w3 = inlier_ratio.powi(3);
    if w3 >= 1.0 {
        return 1;
    }
    if w3 <= 0.0 {
        return cap;
    }
    let n = (1.0 - confidence).ln() / (1.0 - w3).ln();
    if n.is_finite() {
        (n.ceil() as usize).clamp(1, cap)
    } else {
        cap
    }
}

/// Robust similarity fit. Returns `Ok(None)` when no hypothesis reaches
/// `min_inliers`.
pub fn ransac_sim3(canonical: &[Vec3], camera: &[Vec3], cfg: &RansacConfig) -> Result<Option<RansacResult>> {
    cfg.validate()?;
    if canonical.len() != camera.len() {
        return Err(Error::shape("camera points", canonical.len(), camera.len()));
    }
    let n = canonical.len();
    if n < 3 {
        return Err(Error::Arity { needed: 3, got: n });
    }
    let mut best: Option<(Sim3, Score)> = None;
    let mut needed = cfg.max_iterations;
    let mut done = 0;
    while done < needed {
        let end = (done + BATCH).min(needed);
        let scored: Vec<Option<(Sim3, Score)>> = (done..end)
            .into_par_iter()
            .map(|it| {
                hypothesis(cfg.seed, it, canonical, camera)
                    .map(|pose| (pose, score(&pose, canonical, camera, cfg.threshold)))
            })
            .collect();
        for (pose, s) in scored.into_iter().flatten() {
            if s.count >= 3 && best.as_ref().is_none_or(|(_, b)| s.better_than(b)) {
                best = Some((pose, s));
            }
        }
        done = end;
        if let Some((_, s)) = &best {
            needed = needed.min(required_iterations(s.count as f64 / n as f64, cfg.confidence, cfg.max_iterations));
        }
    }

    let Some((pose, s)) = best else { return Ok(None) };
    if s.count < cfg.min_inliers.max(3) {
        return Ok(None);
    }
    let support = inliers(&pose, canonical, camera, cfg.threshold);
    let sub = |v: &[Vec3]| support.iter().map(|&i| v[i]).collect::<Vec<_>>();
    if let Ok(refit) = umeyama_sim3(&sub(canonical), &sub(camera)) {
        let refined = inliers(&refit, canonical, camera, cfg.threshold);
        if refined.len() >= cfg.min_inliers.max(3) {
            return Ok(Some(RansacResult {
                pose: refit,
                inliers: refined,
                iterations: done,
            }));
        }
    }
    Ok(Some(RansacResult {
        pose,
        inliers: support,
        iterations: done,
    }))
}
