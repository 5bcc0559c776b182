//! Canonical inverse depth, the depth training loss and monocular depth
//! metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CameraIntrinsics;

pub const DEFAULT_LAMBDA_GRAD: f64 = 1.0;

fn pixel_error(what: &str, value: f64, i: usize, width: usize) -> Error {
    Error::Domain(format!(
        "{what} must be positive, got {value} at pixel {i} (u={}, v={})",
        i % width.max(1),
        i / width.max(1)
    ))
}

/// `C = f_w / (W d)`.
pub fn to_canonical_inverse(depth: &[f64], k: &CameraIntrinsics) -> Result<Vec<f64>> {
    let scale = k.fx / k.width as f64;
    depth
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            if d > 0.0 && d.is_finite() {
                Ok(scale / d)
            } else {
                Err(pixel_error("depth", d, i, k.width))
            }
        })
        .collect()
}

/// `d = f_w / (W C)`.
pub fn from_canonical_inverse(c: &[f64], k: &CameraIntrinsics) -> Result<Vec<f64>> {
    let scale = k.fx / k.width as f64;
    c.iter()
        .enumerate()
        .map(|(i, &v)| {
            if v > 0.0 && v.is_finite() {
                Ok(scale / v)
            } else {
                Err(pixel_error("canonical inverse depth", v, i, k.width))
            }
        })
        .collect()
}

fn rms(sum_sq: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        (sum_sq / n as f64).sqrt()
    }
}

/// Root-mean-square residual plus `lambda_grad` times the RMS of the
/// forward-difference x and y gradients of the residual.
pub fn depth_loss(pred: &[f64], gt: &[f64], width: usize, height: usize, lambda_grad: f64) -> Result<f64> {
    let n = width * height;
    if pred.len() != n {
        return Err(Error::shape("predicted depth", n, pred.len()));
    }
    if gt.len() != n {
        return Err(Error::shape("ground-truth depth", n, gt.len()));
    }
    if n == 0 {
        return Err(Error::Empty("depth map".into()));
    }
    let r: Vec<f64> = pred.iter().zip(gt).map(|(p, g)| p - g).collect();
    let data = rms(r.iter().map(|x| x * x).sum(), n);

    let (mut gx, mut gy) = (0.0, 0.0);
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            if x + 1 < width {
                gx += (r[i + 1] - r[i]).powi(2);
            }
            if y + 1 < height {
                gy += (r[i + width] - r[i]).powi(2);
            }
        }
    }
    let grad = rms(gx, (width - 1) * height) + rms(gy, width * (height - 1));
    Ok(data + lambda_grad * grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthEvalReport {
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub abs_rel: f64,
    pub log10: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    /// Population standard deviation of `ln p - ln g`, unscaled.
    pub silog: f64,
}

/// Standard monocular depth metrics over `mask` (all pixels if `None`).
pub fn eval_depth(pred: &[f64], gt: &[f64], mask: Option<&[bool]>) -> Result<DepthEvalReport> {
    if pred.len() != gt.len() {
        return Err(Error::shape("predicted depth", gt.len(), pred.len()));
    }
    if let Some(m) = mask {
        if m.len() != gt.len() {
            return Err(Error::shape("depth mask", gt.len(), m.len()));
        }
    }
    let mut n = 0usize;
    let mut within = [0usize; 3];
    let (mut abs_rel, mut log10, mut sq, mut sq_log, mut sum_log) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut logs = Vec::new();
    for i in 0..gt.len() {
        if mask.is_some_and(|m| !m[i]) {
            continue;
        }
        let (p, g) = (pred[i], gt[i]);
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::Domain(format!("predicted depth {p} at pixel {i} must be positive")));
        }
        if !(g > 0.0 && g.is_finite()) {
            return Err(Error::Domain(format!("ground-truth depth {g} at pixel {i} must be positive")));
        }
        let ratio = (p / g).max(g / p);
        for (k, count) in within.iter_mut().enumerate() {
            if ratio < 1.25f64.powi(k as i32 + 1) {
                *count += 1;
            }
        }
        let d = p.ln() - g.ln();
        abs_rel += (p - g).abs() / g;
        log10 += (p.log10() - g.log10()).abs();
        sq += (p - g) * (p - g);
        sq_log += d * d;
        sum_log += d;
        logs.push(d);
        n += 1;
    }
    if n == 0 {
        return Err(Error::Empty("depth evaluation mask".into()));
    }
    let nf = n as f64;
    let mean_log = sum_log / nf;
    let var = logs.iter().map(|d| (d - mean_log) * (d - mean_log)).sum::<f64>() / nf;
    Ok(DepthEvalReport {
        delta1: 100.0 * within[0] as f64 / nf,
        delta2: 100.0 * within[1] as f64 / nf,
        delta3: 100.0 * within[2] as f64 / nf,
        abs_rel: abs_rel / nf,
        log10: log10 / nf,
        rmse: (sq / nf).sqrt(),
        rmse_log: (sq_log / nf).sqrt(),
        silog: var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn camera(fx: f64, width: usize) -> CameraIntrinsics {
        CameraIntrinsics::new(fx, fx, width as f64 / 2.0, 1.0, width, 2).unwrap()
    }

    #[test]
    fn canonical_inverse_examples() {
        assert_eq!(to_canonical_inverse(&[2.0], &camera(500.0, 1000)).unwrap(), vec![0.25]);
        assert_eq!(to_canonical_inverse(&[0.5], &camera(259.0, 518)).unwrap(), vec![1.0]);
        assert_eq!(from_canonical_inverse(&[1.0], &camera(64.0, 64)).unwrap(), vec![1.0]);
    }

    #[test]
    fn zero_canonical_value_names_pixel() {
        let k = camera(100.0, 4);
        let err = from_canonical_inverse(&[1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0], &k).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("pixel 5") && msg.contains("u=1, v=1"), "{msg}");
        assert!(to_canonical_inverse(&[-1.0], &k).is_err());
    }

    #[test]
    fn canonical_inverse_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = camera(321.5, 640);
        let d: Vec<f64> = (0..1000).map(|_| rng.random_range(0.05..50.0)).collect();
        let back = from_canonical_inverse(&to_canonical_inverse(&d, &k).unwrap(), &k).unwrap();
        for (a, b) in d.iter().zip(&back) {
            assert!((a - b).abs() <= 1e-12 * a);
        }
    }

    #[test]
    fn loss_zero_and_constant_residual() {
        let g: Vec<f64> = (0..12).map(|i| 1.0 + i as f64).collect();
        assert_eq!(depth_loss(&g, &g, 4, 3, 1.0).unwrap(), 0.0);
        let p: Vec<f64> = g.iter().map(|x| x - 0.3).collect();
        for lambda in [0.0, 1.0, 7.5] {
            assert!((depth_loss(&p, &g, 4, 3, lambda).unwrap() - 0.3).abs() < 1e-12);
        }
        assert!(depth_loss(&p, &g, 3, 3, 1.0).is_err());
    }

    #[test]
    fn loss_on_ramp_matches_reference() {
        let slope = 0.7;
        let gt = vec![1.0; 16];
        let pred: Vec<f64> = (0..16).map(|i| 1.0 + slope * (i % 4) as f64).collect();
        // reference: residual x = 0,g,2g,3g on each row
        let data = ((0.0 + 1.0 + 4.0 + 9.0) * slope * slope / 4.0f64).sqrt();
        let reference = data + slope;
        let got = depth_loss(&pred, &gt, 4, 4, 1.0).unwrap();
        assert!((got - reference).abs() < 1e-12, "{got} vs {reference}");
    }

    #[test]
    fn perfect_and_scaled_predictions() {
        let gt: Vec<f64> = (1..=20).map(|i| i as f64 * 0.3).collect();
        let r = eval_depth(&gt, &gt, None).unwrap();
        assert_eq!(r.delta1, 100.0);
        assert_eq!((r.abs_rel, r.log10, r.rmse, r.rmse_log, r.silog), (0.0, 0.0, 0.0, 0.0, 0.0));

        let pred: Vec<f64> = gt.iter().map(|g| 1.3 * g).collect();
        let r = eval_depth(&pred, &gt, None).unwrap();
        assert_eq!(r.delta1, 0.0);
        assert_eq!(r.delta2, 100.0);
        assert!((r.abs_rel - 0.3).abs() < 1e-12);
        assert!(r.silog < 1e-12);
    }

    #[test]
    fn empty_mask_rejected() {
        assert!(eval_depth(&[1.0], &[1.0], Some(&[false])).is_err());
    }

    fn reference(pred: &[f64], gt: &[f64]) -> [f64; 8] {
        let n = pred.len() as f64;
        let mut out = [0.0; 8];
        let mut logs = vec![];
        for i in 0..pred.len() {
            let (p, g) = (pred[i], gt[i]);
            let t = if p / g > g / p { p / g } else { g / p };
            if t < 1.25 {
                out[0] += 1.0;
            }
            if t < 1.25 * 1.25 {
                out[1] += 1.0;
            }
            if t < 1.25 * 1.25 * 1.25 {
                out[2] += 1.0;
            }
            out[3] += (p - g).abs() / g;
            out[4] += (p.log10() - g.log10()).abs();
            out[5] += (p - g).powi(2);
            out[6] += (p.ln() - g.ln()).powi(2);
            logs.push(p.ln() - g.ln());
        }
        let mean = logs.iter().sum::<f64>() / n;
        let var = logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
        [
            out[0] / n * 100.0,
            out[1] / n * 100.0,
            out[2] / n * 100.0,
            out[3] / n,
            out[4] / n,
            (out[5] / n).sqrt(),
            (out[6] / n).sqrt(),
            var.sqrt(),
        ]
    }

    #[test]
    fn random_maps_match_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let gt: Vec<f64> = (0..64).map(|_| rng.random_range(0.5..10.0)).collect();
            let pred: Vec<f64> = gt.iter().map(|g| g * rng.random_range(0.5..2.0)).collect();
            let r = eval_depth(&pred, &gt, None).unwrap();
            let got = [r.delta1, r.delta2, r.delta3, r.abs_rel, r.log10, r.rmse, r.rmse_log, r.silog];
            for (a, b) in got.iter().zip(reference(&pred, &gt)) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn masked_equals_extracted() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let gt: Vec<f64> = (0..64).map(|_| rng.random_range(0.5..10.0)).collect();
        let pred: Vec<f64> = (0..64).map(|_| rng.random_range(0.5..10.0)).collect();
        let mask: Vec<bool> = (0..64).map(|_| rng.random_bool(0.4)).collect();
        let a = eval_depth(&pred, &gt, Some(&mask)).unwrap();
        let (p2, g2): (Vec<f64>, Vec<f64>) = (0..64).filter(|&i| mask[i]).map(|i| (pred[i], gt[i])).unzip();
        assert_eq!(a, eval_depth(&p2, &g2, None).unwrap());
    }

    proptest! {
        #[test]
        fn metric_invariants(pairs in prop::collection::vec((0.1f64..20.0, 0.1f64..20.0), 1..40), s in 0.2f64..5.0) {
            let (pred, gt): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let a = eval_depth(&pred, &gt, None).unwrap();
            let b = eval_depth(&gt, &pred, None).unwrap();
            prop_assert_eq!((a.delta1, a.delta2, a.delta3), (b.delta1, b.delta2, b.delta3));
            prop_assert!(a.delta1 <= a.delta2 && a.delta2 <= a.delta3 && a.delta3 <= 100.0);
            let scaled: Vec<f64> = pred.iter().map(|p| p * s).collect();
            let c = eval_depth(&scaled, &gt, None).unwrap();
            prop_assert!((c.silog - a.silog).abs() < 1e-9);
            for v in [a.abs_rel, a.log10, a.rmse, a.rmse_log, a.silog] {
                prop_assert!(v >= 0.0);
            }
        }
    }
}
