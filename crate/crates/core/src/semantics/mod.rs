//! Embedding-space classification, dense CRF inference, instance candidates
//! and segmentation metrics.

mod crf;
mod eval;
mod instances;

pub use crf::{crf_mean_field, CrfConfig, CrfOutput, DEFAULT_ITERATIONS, DEFAULT_PAIRWISE_WEIGHT, DEFAULT_WINDOW};
pub use eval::{eval_segmentation, top_k, SegEvalReport};
pub use instances::{extract_instances, Candidate, DEFAULT_MIN_PIXELS};

use crate::error::{Error, Result};
use crate::nocs::log_sum_exp;

pub const DEFAULT_TAU: f64 = 0.07;

/// Label value marking background pixels in a [`LabelMap`].
pub const BACKGROUND: u32 = u32::MAX;

/// Per-pixel, per-class negative log-probabilities, H×W×C.
#[derive(Debug, Clone, PartialEq)]
pub struct UnaryField {
    pub width: usize,
    pub height: usize,
    pub classes: usize,
    pub tau: f64,
    pub values: Vec<f64>,
}

impl UnaryField {
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn at(&self, pixel: usize) -> &[f64] {
        &self.values[pixel * self.classes..(pixel + 1) * self.classes]
    }

    /// Per-pixel class of lowest unary (ties to the lower index).
    pub fn argmin(&self) -> Vec<u32> {
        (0..self.pixel_count())
            .map(|p| {
                let u = self.at(p);
                let mut best = 0;
                for (c, v) in u.iter().enumerate() {
                    if *v < u[best] {
                        best = c;
                    }
                }
                best as u32
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub width: usize,
    pub height: usize,
    /// Class index per pixel, or [`BACKGROUND`].
    pub labels: Vec<u32>,
}

impl LabelMap {
    /// Maps raw class indices to a label map, turning `background` into the
    /// sentinel.
    pub fn from_classes(width: usize, height: usize, classes: &[u32], background: Option<usize>) -> Self {
        let labels = classes
            .iter()
            .map(|&c| if Some(c as usize) == background { BACKGROUND } else { c })
            .collect();
        Self { width, height, labels }
    }

    pub fn is_foreground(&self, pixel: usize) -> bool {
        self.labels[pixel] != BACKGROUND
    }
}

/// Unit-normalizes every D-dimensional row, naming the first zero-norm row.
pub fn normalize_rows(data: &[f32], dim: usize, width: usize, what: &str) -> Result<Vec<f64>> {
    if dim == 0 || !data.len().is_multiple_of(dim) {
        return Err(Error::shape(what, format!("multiple of {dim}"), data.len()));
    }
    let mut out = Vec::with_capacity(data.len());
    for (i, row) in data.chunks_exact(dim).enumerate() {
        let norm = row.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Domain(format!(
                "{what} row {i} (u={}, v={}) has zero or non-finite norm",
                i % width.max(1),
                i / width.max(1)
            )));
        }
        out.extend(row.iter().map(|&x| x as f64 / norm));
    }
    Ok(out)
}

/// `-log softmax_c(cos(e, l_c) / tau)` for every pixel embedding `e`.
pub fn unaries_from_embeddings(
    embeddings: &[f32],
    dim: usize,
    width: usize,
    height: usize,
    vocab: &[Vec<f32>],
    tau: f64,
) -> Result<UnaryField> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::Domain(format!("temperature must be positive, got {tau}")));
    }
    if embeddings.len() != width * height * dim {
        return Err(Error::shape("embeddings", width * height * dim, embeddings.len()));
    }
    if vocab.is_empty() {
        return Err(Error::Empty("vocabulary".into()));
    }
    let flat: Vec<f32> = vocab.iter().flatten().copied().collect();
    if flat.len() != vocab.len() * dim {
        return Err(Error::shape("vocabulary", vocab.len() * dim, flat.len()));
    }
    let labels = normalize_rows(&flat, dim, usize::MAX, "vocabulary")?;
    let pixels = normalize_rows(embeddings, dim, width, "embedding")?;
    let classes = vocab.len();
    let mut values = Vec::with_capacity(width * height * classes);
    let mut logits = vec![0.0; classes];
    for e in pixels.chunks_exact(dim) {
        for (c, l) in labels.chunks_exact(dim).enumerate() {
            logits[c] = e.iter().zip(l).map(|(a, b)| a * b).sum::<f64>() / tau;
        }
        let lse = log_sum_exp(&logits);
        values.extend(logits.iter().map(|z| lse - z));
    }
    Ok(UnaryField {
        width,
        height,
        classes,
        tau,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_two_class_example() {
        let u = unaries_from_embeddings(&[1.0, 0.0], 2, 1, 1, &[vec![1.0, 0.0], vec![0.0, 1.0]], 1.0).unwrap();
        let e = std::f64::consts::E;
        assert!((u.values[0] - (-(e / (e + 1.0)).ln())).abs() < 1e-15);
        assert!((u.values[0] - 0.31326).abs() < 1e-5);
        let total: f64 = u.at(0).iter().map(|v| (-v).exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equal_similarities_are_uniform() {
        let vocab = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let u = unaries_from_embeddings(&[1.0, 1.0, 1.0], 3, 1, 1, &vocab, 0.07).unwrap();
        for v in u.at(0) {
            assert!((v - 3f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn small_temperature_keeps_argmax() {
        let vocab = vec![vec![1.0, 0.0], vec![0.6, 0.8], vec![0.0, 1.0]];
        let u = unaries_from_embeddings(&[0.5, 0.9, 3.0, 1.0], 2, 2, 1, &vocab, 1e-3).unwrap();
        assert_eq!(u.argmin(), vec![1, 0]);
    }

    #[test]
    fn zero_embedding_names_pixel() {
        let err = unaries_from_embeddings(&[1.0, 0.0, 0.0, 0.0], 2, 2, 1, &[vec![1.0, 0.0]], 0.1).unwrap_err();
        assert!(err.to_string().contains("u=1, v=0"), "{err}");
    }

    #[test]
    fn unnormalized_inputs_are_normalized() {
        let a = unaries_from_embeddings(&[3.0, 4.0], 2, 1, 1, &[vec![2.0, 0.0], vec![0.0, 5.0]], 0.1).unwrap();
        let b = unaries_from_embeddings(&[6.0, 8.0], 2, 1, 1, &[vec![1.0, 0.0], vec![0.0, 1.0]], 0.1).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
