//! Controlled corruption of oracle maps.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::OracleFrame;
use crate::error::{Error, Result};
use crate::maps::DenseMaps;
use crate::rng;

/// Share of the wrong class in a flipped pixel's embedding.
const FLIP_MIX: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Relative standard deviation of multiplicative depth noise.
    pub depth_sigma: f64,
    /// Standard deviation of additive NOCS noise on object pixels.
    pub nocs_sigma: f64,
    /// Every embedding is rotated by this angle (radians) toward a random
    /// orthogonal direction.
    pub embedding_angle: f64,
    /// Fraction of pixels whose embedding is pulled toward a different,
    /// randomly chosen class.
    pub label_flip: f64,
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("depth_sigma", self.depth_sigma),
            ("nocs_sigma", self.nocs_sigma),
            ("embedding_angle", self.embedding_angle),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.label_flip) {
            return Err(Error::Domain(format!("label_flip must lie in [0, 1], got {}", self.label_flip)));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        *self == NoiseConfig::default()
    }
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

/// Corrupts `maps` in place. Each knob draws from its own stream so that
/// changing one leaves the others' noise unchanged.
pub fn apply_noise(maps: &mut DenseMaps, frame: &OracleFrame, noise: &NoiseConfig, seed: u64) -> Result<()> {
    noise.validate()?;
    let n = maps.pixel_count();
    if frame.depth.len() != n {
        return Err(Error::shape("oracle frame", n, frame.depth.len()));
    }
    if noise.depth_sigma > 0.0 {
        let mut rng = rng::stream(seed, "noise-depth");
        let dist = Normal::new(1.0, noise.depth_sigma).map_err(|e| Error::Domain(e.to_string()))?;
        for d in &mut maps.depth {
            *d = (*d as f64 * dist.sample(&mut rng).max(1e-3)) as f32;
        }
    }
    if noise.nocs_sigma > 0.0 {
        let mut rng = rng::stream(seed, "noise-nocs");
        let dist = Normal::new(0.0, noise.nocs_sigma).map_err(|e| Error::Domain(e.to_string()))?;
        for p in (0..n).filter(|&p| frame.instance[p].is_some()) {
            for c in &mut maps.nocs[3 * p..3 * p + 3] {
                *c = (*c as f64 + dist.sample(&mut rng)) as f32;
            }
        }
    }
    let dim = maps.embedding_dim;
    let classes = maps.vocab.len();
    if noise.label_flip > 0.0 && classes > 1 {
        let mut rng = rng::stream(seed, "noise-flip");
        for p in 0..n {
            if rng.random::<f64>() >= noise.label_flip {
                continue;
            }
            let truth = frame.class[p] as usize;
            let mut other = rng.random_range(0..classes - 1);
            if other >= truth {
                other += 1;
            }
            let (a, b) = (&maps.vocab.embeddings[truth], &maps.vocab.embeddings[other]);
            let mut mixed: Vec<f64> = a
                .iter()
                .zip(b)
                .map(|(&x, &y)| (1.0 - FLIP_MIX) * x as f64 + FLIP_MIX * y as f64)
                .collect();
            normalize(&mut mixed);
            for (e, m) in maps.embeddings[p * dim..(p + 1) * dim].iter_mut().zip(&mixed) {
                *e = *m as f32;
            }
        }
    }
    if noise.embedding_angle > 0.0 {
        let mut rng = rng::stream(seed, "noise-embedding");
        let (s, c) = noise.embedding_angle.sin_cos();
        for e in maps.embeddings.chunks_exact_mut(dim) {
            let mut cur: Vec<f64> = e.iter().map(|&x| x as f64).collect();
            normalize(&mut cur);
            let mut r: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let dot: f64 = r.iter().zip(&cur).map(|(a, b)| a * b).sum();
            r.iter_mut().zip(&cur).for_each(|(a, b)| *a -= dot * b);
            normalize(&mut r);
            for (out, (x, y)) in e.iter_mut().zip(cur.iter().zip(&r)) {
                *out = (c * x + s * y) as f32;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_scene, raycast, SceneConfig};

    #[test]
    fn zero_noise_is_identity_and_flips_change_argmax() {
        let scene = generate_scene(&SceneConfig {
            seed: 4,
            ..SceneConfig::default()
        })
        .unwrap();
        let frame = raycast(&scene).unwrap();
        let clean = frame.dense_maps(&scene.vocab).unwrap();
        let mut same = clean.clone();
        apply_noise(&mut same, &frame, &NoiseConfig::default(), 1).unwrap();
        assert_eq!(same, clean);

        let mut noisy = clean.clone();
        let cfg = NoiseConfig {
            label_flip: 0.1,
            ..NoiseConfig::default()
        };
        apply_noise(&mut noisy, &frame, &cfg, 1).unwrap();
        let changed = (0..noisy.pixel_count())
            .filter(|&p| noisy.embedding(p) != clean.embedding(p))
            .count() as f64
            / noisy.pixel_count() as f64;
        assert!((changed - 0.1).abs() < 0.02, "{changed}");
    }

    #[test]
    fn rejects_bad_knobs() {
        let cfg = NoiseConfig {
            label_flip: 1.5,
            ..NoiseConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
