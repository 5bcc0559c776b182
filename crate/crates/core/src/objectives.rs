//! Multi-task loss weighting, the camera FOV loss and the semantic
//! cross-entropy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::semantics::UnaryField;

pub const DEFAULT_HUBER_DELTA: f64 = 0.1;

/// Per-task loss values in a fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskLosses {
    pub depth: f64,
    pub semantics: f64,
    pub nocs: f64,
    pub css: f64,
    pub camera: f64,
}

impl TaskLosses {
    pub const NAMES: [&'static str; 5] = ["depth", "semantics", "nocs", "css", "camera"];

    pub fn to_array(&self) -> [f64; 5] {
        [self.depth, self.semantics, self.nocs, self.css, self.camera]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Combined {
    pub total: f64,
    /// d total / d s_t.
    pub grad: Vec<f64>,
}

/// `sum_t exp(-s_t) L_t + s_t` with its gradient in the log-variances.
pub fn combine(losses: &[f64], log_vars: &[f64]) -> Result<Combined> {
    if losses.len() != log_vars.len() {
        return Err(Error::shape("log-variances", losses.len(), log_vars.len()));
    }
    for (i, (&l, &s)) in losses.iter().zip(log_vars).enumerate() {
        if !l.is_finite() || l < 0.0 {
            return Err(Error::Domain(format!("task loss {i} must be finite and nonnegative, got {l}")));
        }
        if !s.is_finite() {
            return Err(Error::NonFinite {
                what: "log-variance".into(),
                index: i,
            });
        }
    }
    let total = losses.iter().zip(log_vars).map(|(l, s)| (-s).exp() * l + s).sum();
    let grad = losses.iter().zip(log_vars).map(|(l, s)| 1.0 - (-s).exp() * l).collect();
    Ok(Combined { total, grad })
}

pub fn huber(r: f64, delta: f64) -> f64 {
    let a = r.abs();
    if a <= delta {
        0.5 * r * r
    } else {
        delta * (a - 0.5 * delta)
    }
}

/// Huber loss on the horizontal and vertical field-of-view angles.
pub fn camera_fov_loss(pred: (f64, f64), gt: (f64, f64), delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::Domain(format!("Huber delta must be positive, got {delta}")));
    }
    for a in [pred.0, pred.1, gt.0, gt.1] {
        if !(a > 0.0 && a < std::f64::consts::PI) {
            return Err(Error::Domain(format!("field of view {a} outside (0, pi)")));
        }
    }
    Ok(huber(pred.0 - gt.0, delta) + huber(pred.1 - gt.1, delta))
}

/// Mean unary (negative log-probability) of the ground-truth class over
/// labeled pixels. `None` pixels are ignored; a class outside the
/// vocabulary is an error.
pub fn semantics_loss(unary: &UnaryField, gt: &[Option<usize>]) -> Result<f64> {
    if gt.len() != unary.pixel_count() {
        return Err(Error::shape("semantic labels", unary.pixel_count(), gt.len()));
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for (p, g) in gt.iter().enumerate() {
        let Some(c) = *g else { continue };
        if c >= unary.classes {
            return Err(Error::Domain(format!(
                "ground-truth class {c} at pixel {p} is not in the vocabulary of {}",
                unary.classes
            )));
        }
        sum += unary.at(p)[c];
        n += 1;
    }
    if n == 0 {
        return Err(Error::Empty("no labeled pixels for the semantic loss".into()));
    }
    Ok(sum / n as f64)
}
