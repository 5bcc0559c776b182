//! Structural similarity with an 11×11 Gaussian window (σ = 1.5), averaged
//! over channels and valid window positions, plus its gradient with respect
//! to the second image.

use super::Image;
use crate::error::{Error, Result};

pub const WINDOW: usize = 11;
pub const C1: f64 = 0.01 * 0.01;
pub const C2: f64 = 0.03 * 0.03;
const SIGMA: f64 = 1.5;

fn kernel() -> [f64; WINDOW] {
    let mut k = [0.0; WINDOW];
    let half = (WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Separable valid convolution of a `w × h` plane.
fn conv(plane: &[f64], w: usize, h: usize, k: &[f64; WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w - WINDOW + 1, h - WINDOW + 1);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            tmp[y * ow + x] = (0..WINDOW).map(|i| k[i] * row[x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..WINDOW).map(|i| k[i] * tmp[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Adjoint of [`conv`].
fn conv_t(g: &[f64], w: usize, h: usize, k: &[f64; WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w - WINDOW + 1, h - WINDOW + 1);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..oh {
        for i in 0..WINDOW {
            for x in 0..ow {
                tmp[(y + i) * ow + x] += k[i] * g[y * ow + x];
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..ow {
            let v = tmp[y * ow + x];
            for i in 0..WINDOW {
                out[y * w + x + i] += k[i] * v;
            }
        }
    }
    out
}

fn plane(img: &Image, c: usize) -> Vec<f64> {
    img.data.iter().skip(c).step_by(3).copied().collect()
}

struct Channel {
    plane: Vec<f64>,
    mu: Vec<f64>,
    sigma2: Vec<f64>,
}

impl Channel {
    fn new(plane: Vec<f64>, w: usize, h: usize, k: &[f64; WINDOW]) -> Self {
        let mu = conv(&plane, w, h, k);
        let sq: Vec<f64> = plane.iter().map(|v| v * v).collect();
        let sigma2 = conv(&sq, w, h, k).iter().zip(&mu).map(|(s, m)| s - m * m).collect();
        Self { plane, mu, sigma2 }
    }
}

/// Window statistics of a fixed reference image, reused across many
/// comparisons against it.
pub struct SsimReference {
    width: usize,
    height: usize,
    kernel: [f64; WINDOW],
    channels: Vec<Channel>,
}

impl SsimReference {
    pub fn new(reference: &Image) -> Result<Self> {
        let (w, h) = (reference.width, reference.height);
        if w < WINDOW || h < WINDOW {
            return Err(Error::Domain(format!("SSIM needs images of at least {WINDOW}x{WINDOW}, got {w}x{h}")));
        }
        if reference.data.len() != w * h * 3 {
            return Err(Error::shape("image data", w * h * 3, reference.data.len()));
        }
        let kernel = kernel();
        let channels = (0..3).map(|c| Channel::new(plane(reference, c), w, h, &kernel)).collect();
        Ok(Self {
            width: w,
            height: h,
            kernel,
            channels,
        })
    }

    fn check(&self, other: &Image) -> Result<()> {
        if (other.width, other.height) != (self.width, self.height) || other.data.len() != self.width * self.height * 3 {
            return Err(Error::shape(
                "image",
                format!("{}x{}", self.width, self.height),
                format!("{}x{}", other.width, other.height),
            ));
        }
        Ok(())
    }

    fn count(&self) -> f64 {
        (3 * (self.width - WINDOW + 1) * (self.height - WINDOW + 1)) as f64
    }

    pub fn ssim(&self, other: &Image) -> Result<f64> {
        self.check(other)?;
        let (w, h) = (self.width, self.height);
        let mut total = 0.0;
        for (c, a) in self.channels.iter().enumerate() {
            let b = Channel::new(plane(other, c), w, h, &self.kernel);
            let prod: Vec<f64> = a.plane.iter().zip(&b.plane).map(|(x, y)| x * y).collect();
            let cross = conv(&prod, w, h, &self.kernel);
            for i in 0..cross.len() {
                let (ma, mb) = (a.mu[i], b.mu[i]);
                let sab = cross[i] - ma * mb;
                let num = (2.0 * (ma * mb) + C1) * (2.0 * sab + C2);
                let den = (ma * ma + mb * mb + C1) * (a.sigma2[i] + b.sigma2[i] + C2);
                total += num / den;
            }
        }
        Ok(total / self.count())
    }

    /// SSIM against `other` and its gradient with respect to `other`
    /// (interleaved like `Image::data`).
    pub fn ssim_grad(&self, other: &Image) -> Result<(f64, Vec<f64>)> {
        self.check(other)?;
        let (w, h) = (self.width, self.height);
        let n = self.count();
        let mut total = 0.0;
        let mut grad = vec![0.0; w * h * 3];
        for (c, a) in self.channels.iter().enumerate() {
            let b = Channel::new(plane(other, c), w, h, &self.kernel);
            let prod: Vec<f64> = a.plane.iter().zip(&b.plane).map(|(x, y)| x * y).collect();
            let cross = conv(&prod, w, h, &self.kernel);
            let m = cross.len();
            let (mut p_mu, mut p_var, mut p_cov) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
            for i in 0..m {
                let (ma, mb) = (a.mu[i], b.mu[i]);
                let sab = cross[i] - ma * mb;
                let a1 = 2.0 * (ma * mb) + C1;
                let a2 = 2.0 * sab + C2;
                let b1 = ma * ma + mb * mb + C1;
                let b2 = a.sigma2[i] + b.sigma2[i] + C2;
                let s = a1 * a2 / (b1 * b2);
                total += s;
                let d_mu = 2.0 * ma * a2 / (b1 * b2) - s * 2.0 * mb / b1;
                let d_var = -s / b2;
                let d_cov = 2.0 * a1 / (b1 * b2);
                p_mu[i] = d_mu - 2.0 * mb * d_var - ma * d_cov;
                p_var[i] = d_var;
                p_cov[i] = d_cov;
            }
            let t1 = conv_t(&p_mu, w, h, &self.kernel);
            let t2 = conv_t(&p_var, w, h, &self.kernel);
            let t3 = conv_t(&p_cov, w, h, &self.kernel);
            for q in 0..w * h {
                grad[q * 3 + c] = (t1[q] + 2.0 * b.plane[q] * t2[q] + a.plane[q] * t3[q]) / n;
            }
        }
        Ok((total / n, grad))
    }
}

pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    a.check_same_shape(b)?;
    SsimReference::new(a)?.ssim(b)
}

/// Value and gradient of `ssim(a, b)` with respect to `b`.
pub fn ssim_grad(a: &Image, b: &Image) -> Result<(f64, Vec<f64>)> {
    a.check_same_shape(b)?;
    SsimReference::new(a)?.ssim_grad(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Image {
        Image {
            width: w,
            height: h,
            data: (0..w * h * 3).map(|_| rng.random::<f64>()).collect(),
        }
    }

    #[test]
    fn identity_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_image(&mut rng, 20, 17);
        let b = random_image(&mut rng, 20, 17);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn constant_images_closed_form() {
        let a = Image::filled(16, 16, Vec3::repeat(0.4));
        let b = Image::filled(16, 16, Vec3::repeat(0.5));
        let expected = (2.0 * 0.4 * 0.5 + C1) / (0.4f64 * 0.4 + 0.5 * 0.5 + C1);
        assert!((ssim(&a, &b).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn window_sums_to_one() {
        assert!((kernel().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn too_small_or_mismatched() {
        let a = Image::filled(10, 20, Vec3::zeros());
        assert!(ssim(&a, &a).is_err());
        let b = Image::filled(12, 12, Vec3::zeros());
        let c = Image::filled(13, 12, Vec3::zeros());
        assert!(ssim(&b, &c).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_image(&mut rng, 14, 13);
        let b = random_image(&mut rng, 14, 13);
        let (v, g) = ssim_grad(&a, &b).unwrap();
        assert_eq!(v, ssim(&a, &b).unwrap());
        let h = 1e-6;
        for q in [0, 7, 40, 200, 14 * 13 * 3 - 1] {
            let mut p = b.clone();
            p.data[q] += h;
            let mut m = b.clone();
            m.data[q] -= h;
            let fd = (ssim(&a, &p).unwrap() - ssim(&a, &m).unwrap()) / (2.0 * h);
            assert!((fd - g[q]).abs() < 1e-8, "{q}: {fd} vs {}", g[q]);
        }
    }
}
