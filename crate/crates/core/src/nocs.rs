//! Bin-and-delta coding of NOCS coordinates.
//!
//! Each axis of `[0, 1]` is split into `M` equal bins; a coordinate is the
//! bin center `(b + 0.5) / M` plus a signed offset. `c = 1` falls into the
//! last bin with a positive offset of `0.5 / M`.

use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 64;

pub fn bin_center(bin: usize, bins: usize) -> f64 {
    (bin as f64 + 0.5) / bins as f64
}

pub fn encode(c: f64, bins: usize) -> Result<(usize, f64)> {
    if bins == 0 {
        return Err(Error::Domain("bin count must be positive".into()));
    }
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::Domain(format!("NOCS coordinate {c} outside [0, 1]")));
    }
    let bin = ((c * bins as f64).floor() as usize).min(bins - 1);
    Ok((bin, c - bin_center(bin, bins)))
}

pub fn decode(bin: usize, delta: f64, bins: usize) -> Result<f64> {
    if bin >= bins {
        return Err(Error::Domain(format!("bin {bin} outside 0..{bins}")));
    }
    Ok((bin_center(bin, bins) + delta).clamp(0.0, 1.0))
}

/// Per-pixel, per-axis bin logits and offsets as predicted by a network.
#[derive(Debug, Clone, PartialEq)]
pub struct NocsBinned {
    pub width: usize,
    pub height: usize,
    pub bins: usize,
    /// H×W×3×M.
    pub logits: Vec<f64>,
    /// H×W×3.
    pub offsets: Vec<f64>,
}

impl NocsBinned {
    fn validate(&self) -> Result<()> {
        let n = self.width * self.height;
        if self.logits.len() != n * 3 * self.bins {
            return Err(Error::shape("NOCS logits", n * 3 * self.bins, self.logits.len()));
        }
        if self.offsets.len() != n * 3 {
            return Err(Error::shape("NOCS offsets", n * 3, self.offsets.len()));
        }
        Ok(())
    }

    pub fn axis_logits(&self, pixel: usize, axis: usize) -> &[f64] {
        let start = (pixel * 3 + axis) * self.bins;
        &self.logits[start..start + self.bins]
    }

    /// Argmax bin plus predicted offset, per pixel and axis.
    pub fn decode_field(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let n = self.width * self.height;
        let mut out = Vec::with_capacity(n * 3);
        for p in 0..n {
            for axis in 0..3 {
                let bin = argmax(self.axis_logits(p, axis));
                out.push(decode(bin, self.offsets[p * 3 + axis], self.bins)?);
            }
        }
        Ok(out)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NocsLossWeights {
    pub cross_entropy: f64,
    pub offset_mse: f64,
}

impl Default for NocsLossWeights {
    fn default() -> Self {
        Self {
            cross_entropy: 1.0,
            offset_mse: 1.0,
        }
    }
}

/// Bin cross-entropy plus offset MSE, averaged over foreground pixels and
/// the three axes.
pub fn nocs_loss(pred: &NocsBinned, gt_nocs: &[f64], foreground: &[bool], weights: NocsLossWeights) -> Result<f64> {
    pred.validate()?;
    let n = pred.width * pred.height;
    if gt_nocs.len() != n * 3 {
        return Err(Error::shape("ground-truth NOCS", n * 3, gt_nocs.len()));
    }
    if foreground.len() != n {
        return Err(Error::shape("foreground mask", n, foreground.len()));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for p in (0..n).filter(|&p| foreground[p]) {
        for axis in 0..3 {
            let (bin, delta) = encode(gt_nocs[p * 3 + axis], pred.bins)?;
            let logits = pred.axis_logits(p, axis);
            let ce = log_sum_exp(logits) - logits[bin];
            let r = pred.offsets[p * 3 + axis] - delta;
            total += weights.cross_entropy * ce + weights.offset_mse * r * r;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Empty("NOCS loss foreground mask".into()));
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn encode_hand_example() {
        let (bin, delta) = encode(0.2, 64).unwrap();
        assert_eq!(bin, 12);
        assert!((bin_center(bin, 64) - 0.1953125).abs() < 1e-15);
        assert!((delta - 0.0046875).abs() < 1e-15);
    }

    #[test]
    fn bin_centers_have_zero_offset() {
        for i in 0..64 {
            let (bin, delta) = encode((i as f64 + 0.5) / 64.0, 64).unwrap();
            assert_eq!(bin, i);
            assert_eq!(delta, 0.0);
        }
    }

    #[test]
    fn closed_interval_boundaries() {
        let (bin, delta) = encode(1.0, 64).unwrap();
        assert_eq!(bin, 63);
        assert_eq!(delta, 0.5 / 64.0);
        assert_eq!(decode(63, 0.5 / 64.0, 64).unwrap(), 1.0);
        assert_eq!(decode(0, -0.5 / 64.0, 64).unwrap(), 0.0);
        assert!(encode(1.0 + 1e-12, 64).is_err());
        assert!(encode(-1e-12, 64).is_err());
        assert!(decode(64, 0.0, 64).is_err());
    }

    #[test]
    fn random_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let c: f64 = rng.random();
            let (b, d) = encode(c, 64).unwrap();
            assert!((decode(b, d, 64).unwrap() - c).abs() < 1e-12);
            assert!(d.abs() <= 0.5 / 64.0 + 1e-15);
        }
    }

    fn one_pixel(logits: Vec<f64>, offset: f64) -> NocsBinned {
        let mut all = Vec::new();
        for _ in 0..3 {
            all.extend_from_slice(&logits);
        }
        NocsBinned {
            width: 1,
            height: 1,
            bins: logits.len(),
            logits: all,
            offsets: vec![offset; 3],
        }
    }

    #[test]
    fn uniform_logits_give_log_m() {
        let c = bin_center(10, 64);
        let pred = one_pixel(vec![0.0; 64], 0.0);
        let loss = nocs_loss(&pred, &[c, c, c], &[true], NocsLossWeights::default()).unwrap();
        assert!((loss - 64f64.ln()).abs() < 1e-12);
        assert!((loss - 4.1589).abs() < 1e-4);
    }

    #[test]
    fn confident_logits_approach_zero() {
        let c = bin_center(5, 64);
        let mut prev = f64::INFINITY;
        for big in [1.0, 5.0, 20.0, 40.0] {
            let mut logits = vec![0.0; 64];
            logits[5] = big;
            let pred = one_pixel(logits, 0.0);
            let loss = nocs_loss(&pred, &[c, c, c], &[true], NocsLossWeights::default()).unwrap();
            let expected = (1.0 + 63.0 * (-big).exp()).ln();
            assert!((loss - expected).abs() < 1e-12);
            assert!(loss < prev);
            prev = loss;
        }
        assert!(prev < 1e-15);
    }

    #[test]
    fn empty_mask_is_error() {
        let pred = one_pixel(vec![0.0; 64], 0.0);
        assert!(nocs_loss(&pred, &[0.5; 3], &[false], NocsLossWeights::default()).is_err());
    }

    #[test]
    fn loss_matches_scalar_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (w, h, m) = (3, 2, 8);
        let n = w * h;
        let pred = NocsBinned {
            width: w,
            height: h,
            bins: m,
            logits: (0..n * 3 * m).map(|_| rng.random_range(-3.0..3.0)).collect(),
            offsets: (0..n * 3).map(|_| rng.random_range(-0.1..0.1)).collect(),
        };
        let gt: Vec<f64> = (0..n * 3).map(|_| rng.random()).collect();
        let mask: Vec<bool> = (0..n).map(|i| i % 2 == 0 || i == 5).collect();

        // reference: straight loops, explicit softmax
        let mut sum = 0.0;
        let mut cnt = 0.0;
        for p in 0..n {
            if !mask[p] {
                continue;
            }
            for a in 0..3 {
                let c = gt[p * 3 + a];
                let mut bin = (c * m as f64).floor() as usize;
                if bin == m {
                    bin = m - 1;
                }
                let delta = c - (bin as f64 + 0.5) / m as f64;
                let mut z = 0.0;
                for b in 0..m {
                    z += pred.logits[(p * 3 + a) * m + b].exp();
                }
                let prob = pred.logits[(p * 3 + a) * m + bin].exp() / z;
                let r = pred.offsets[p * 3 + a] - delta;
                sum += -prob.ln() + r * r;
                cnt += 1.0;
            }
        }
        let reference = sum / cnt;
        let got = nocs_loss(&pred, &gt, &mask, NocsLossWeights::default()).unwrap();
        assert!((got - reference).abs() < 1e-12, "{got} vs {reference}");
    }

    proptest! {
        #[test]
        fn encoding_is_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (bl, dl) = encode(lo, 64).unwrap();
            let (bh, dh) = encode(hi, 64).unwrap();
            prop_assert!(bl <= bh);
            prop_assert!(decode(bl, dl, 64).unwrap() <= decode(bh, dh, 64).unwrap());
        }
    }
}
