//! Mean-field inference for a fully connected Potts CRF whose pairwise
//! affinity is the clamped cosine similarity of pixel embeddings.
//!
//! Update (synchronous):
//!
//! ```text
//! logit_i(l) = -U_i(l) + w / Z_i * sum_{j != i} max(0, <e_i, e_j>) Q_j(l)
//! Q_i        = softmax(logit_i)
//! ```
//!
//! which is the Potts update with the label-independent part of the
//! disagreement penalty dropped. `Z_i` is the number of pairwise terms
//! (N - 1, or the window size), so `w` does not depend on image size.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::UnaryField;
use crate::error::{Error, Result};
use crate::nocs::log_sum_exp;

pub const DEFAULT_ITERATIONS: usize = 5;
pub const DEFAULT_PAIRWISE_WEIGHT: f64 = 20.0;
pub const DEFAULT_WINDOW: usize = 8;

/// Largest image (in pixels) that uses the exact fully connected kernel.
pub const EXACT_PIXEL_LIMIT: usize = 16384;

/// Above this many distinct embeddings the group kernel is recomputed per
/// iteration instead of stored.
const STORED_KERNEL_LIMIT: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrfConfig {
    pub iterations: usize,
    pub pairwise_weight: f64,
    /// Half-width of the local window used above [`EXACT_PIXEL_LIMIT`].
    pub window: usize,
}

impl Default for CrfConfig {
    fn default() -> Self {
        Self {
            iterations: DEFAULT_ITERATIONS,
            pairwise_weight: DEFAULT_PAIRWISE_WEIGHT,
            window: DEFAULT_WINDOW,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrfOutput {
    /// Per-pixel argmax class.
    pub classes: Vec<u32>,
    /// Final marginals, H×W×C.
    pub marginals: Vec<f64>,
}

struct Groups {
    of_pixel: Vec<usize>,
    reps: Vec<usize>,
}

fn group_embeddings(emb: &[f64], dim: usize) -> Groups {
    let mut ids: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut reps = Vec::new();
    let of_pixel = emb
        .chunks_exact(dim)
        .enumerate()
        .map(|(i, e)| {
            let key: Vec<u64> = e.iter().map(|x| x.to_bits()).collect();
            *ids.entry(key).or_insert_with(|| {
                reps.push(i);
                reps.len() - 1
            })
        })
        .collect();
    Groups { of_pixel, reps }
}

fn affinity(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().max(0.0)
}

fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let lse = log_sum_exp(logits);
    for (o, z) in out.iter_mut().zip(logits) {
        *o = (z - lse).exp();
    }
}

fn argmax(values: &[f64]) -> u32 {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best as u32
}

/// Runs `cfg.iterations` synchronous mean-field updates. `embeddings` must be
/// unit-normalized, H×W×`dim`.
pub fn crf_mean_field(unary: &UnaryField, embeddings: &[f64], dim: usize, cfg: &CrfConfig) -> Result<CrfOutput> {
    let n = unary.pixel_count();
    let c = unary.classes;
    if embeddings.len() != n * dim {
        return Err(Error::shape("CRF embeddings", n * dim, embeddings.len()));
    }
    if !cfg.pairwise_weight.is_finite() {
        return Err(Error::Domain("pairwise weight must be finite".into()));
    }
    let mut logits: Vec<f64> = unary.values.iter().map(|u| -u).collect();
    let mut q = vec![0.0; n * c];
    for (l, o) in logits.chunks_exact(c).zip(q.chunks_exact_mut(c)) {
        softmax_into(l, o);
    }
    if n == 0 {
        return Ok(CrfOutput {
            classes: vec![],
            marginals: q,
        });
    }

    let groups = group_embeddings(embeddings, dim);
    let rep = |g: usize| &embeddings[groups.reps[g] * dim..(groups.reps[g] + 1) * dim];
    let g_count = groups.reps.len();
    let stored: Option<Vec<f64>> = (n <= EXACT_PIXEL_LIMIT && g_count <= STORED_KERNEL_LIMIT).then(|| {
        (0..g_count * g_count)
            .into_par_iter()
            .map(|k| affinity(rep(k / g_count), rep(k % g_count)))
            .collect()
    });
    let kernel = |g: usize, h: usize| match &stored {
        Some(k) => k[g * g_count + h],
        None => affinity(rep(g), rep(h)),
    };

    for _ in 0..cfg.iterations {
        let messages = if n <= EXACT_PIXEL_LIMIT {
            exact_messages(&q, c, &groups, &kernel)
        } else {
            window_messages(&q, c, unary.width, unary.height, cfg.window, &groups, &kernel)
        };
        logits
            .par_chunks_mut(c)
            .zip(q.par_chunks_mut(c))
            .enumerate()
            .for_each(|(i, (lg, qi))| {
                let u = unary.at(i);
                let m = &messages[i * c..(i + 1) * c];
                for l in 0..c {
                    lg[l] = -u[l] + cfg.pairwise_weight * m[l];
                }
                softmax_into(lg, qi);
            });
    }

    let classes = if cfg.iterations == 0 {
        unary.argmin()
    } else {
        logits.chunks_exact(c).map(argmax).collect()
    };
    Ok(CrfOutput { classes, marginals: q })
}

fn exact_messages(q: &[f64], c: usize, groups: &Groups, kernel: &(dyn Fn(usize, usize) -> f64 + Sync)) -> Vec<f64> {
    let n = groups.of_pixel.len();
    let g_count = groups.reps.len();
    let mut sums = vec![0.0; g_count * c];
    for (i, &g) in groups.of_pixel.iter().enumerate() {
        for l in 0..c {
            sums[g * c + l] += q[i * c + l];
        }
    }
    let per_group: Vec<f64> = (0..g_count)
        .into_par_iter()
        .flat_map_iter(|g| {
            let mut m = vec![0.0; c];
            for h in 0..g_count {
                let k = kernel(g, h);
                if k != 0.0 {
                    for l in 0..c {
                        m[l] += k * sums[h * c + l];
                    }
                }
            }
            m
        })
        .collect();
    let norm = if n > 1 { 1.0 / (n - 1) as f64 } else { 0.0 };
    let mut out = vec![0.0; n * c];
    out.par_chunks_mut(c).enumerate().for_each(|(i, o)| {
        let g = groups.of_pixel[i];
        let self_k = kernel(g, g);
        for l in 0..c {
            o[l] = (per_group[g * c + l] - self_k * q[i * c + l]) * norm;
        }
    });
    out
}

fn window_messages(
    q: &[f64],
    c: usize,
    width: usize,
    height: usize,
    r: usize,
    groups: &Groups,
    kernel: &(dyn Fn(usize, usize) -> f64 + Sync),
) -> Vec<f64> {
    let mut out = vec![0.0; width * height * c];
    out.par_chunks_mut(c).enumerate().for_each(|(i, o)| {
        let (x, y) = (i % width, i / width);
        let gi = groups.of_pixel[i];
        let mut count = 0usize;
        for yy in y.saturating_sub(r)..(y + r + 1).min(height) {
            for xx in x.saturating_sub(r)..(x + r + 1).min(width) {
                let j = yy * width + xx;
                if j == i {
                    continue;
                }
                count += 1;
                let k = kernel(gi, groups.of_pixel[j]);
                if k != 0.0 {
                    for l in 0..c {
                        o[l] += k * q[j * c + l];
                    }
                }
            }
        }
        if count > 0 {
            for v in o.iter_mut() {
                *v /= count as f64;
            }
        }
    });
    out
}
