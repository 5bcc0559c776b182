//! Analytic primitives inside the canonical unit cube.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// The whole cube `[0, 1]^3`.
    Box,
    /// Center `(0.5, 0.5, 0.5)`, radius 0.5.
    Sphere,
    /// Axis along canonical y through `(0.5, *, 0.5)`, radius 0.5, height 1.
    Cylinder,
}

/// Ray interval through a primitive. Faces: box `2 * axis + (0 low | 1
/// high)`; cylinder 0 lateral, 1 bottom cap, 2 top cap; sphere 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t_in: f64,
    pub t_out: f64,
    pub face_in: usize,
    pub face_out: usize,
}

/// Distinct colors of the six box faces.
pub const BOX_FACE_COLORS: [[f64; 3]; 6] = [
    [0.85, 0.25, 0.20],
    [0.20, 0.70, 0.30],
    [0.25, 0.35, 0.85],
    [0.90, 0.80, 0.20],
    [0.75, 0.30, 0.75],
    [0.20, 0.75, 0.80],
];

/// Brightness of the dark checker cells relative to the light ones.
pub const CHECKER_DARK: f64 = 0.5;
/// Checker cells per canonical unit.
pub const CHECKER_CELLS: f64 = 2.0;

fn slab(o: f64, d: f64, lo: f64, hi: f64) -> Option<(f64, f64, bool)> {
    if d.abs() < 1e-300 {
        return (lo..=hi).contains(&o).then_some((f64::NEG_INFINITY, f64::INFINITY, false));
    }
    let (a, b) = ((lo - o) / d, (hi - o) / d);
    // third value: whether entry is through the low side
    Some(if a <= b { (a, b, true) } else { (b, a, false) })
}

fn quadratic(a: f64, b: f64, c: f64) -> Option<(f64, f64)> {
    let disc = b * b - 4.0 * a * c;
    if !(disc >= 0.0) || a == 0.0 {
        return None;
    }
    let s = disc.sqrt();
    // numerically stable roots
    let q = -0.5 * (b + b.signum() * s);
    let (r1, r2) = if q == 0.0 { (0.0, 0.0) } else { (q / a, c / q) };
    Some((r1.min(r2), r1.max(r2)))
}

impl Shape {
    pub const ALL: [Shape; 3] = [Shape::Box, Shape::Sphere, Shape::Cylinder];

    pub fn intersect(&self, o: &Vec3, d: &Vec3) -> Option<Hit> {
        let hit = match self {
            Shape::Box => {
                let (mut t_in, mut t_out) = (f64::NEG_INFINITY, f64::INFINITY);
                let (mut face_in, mut face_out) = (0, 0);
                for a in 0..3 {
                    let (lo, hi, low_first) = slab(o[a], d[a], 0.0, 1.0)?;
                    if lo > t_in {
                        t_in = lo;
                        face_in = 2 * a + usize::from(!low_first);
                    }
                    if hi < t_out {
                        t_out = hi;
                        face_out = 2 * a + usize::from(low_first);
                    }
                }
                Hit {
                    t_in,
                    t_out,
                    face_in,
                    face_out,
                }
            }
            Shape::Sphere => {
                let oc = o - Vec3::repeat(0.5);
                let (t0, t1) = quadratic(d.dot(d), 2.0 * oc.dot(d), oc.dot(&oc) - 0.25)?;
                Hit {
                    t_in: t0,
                    t_out: t1,
                    face_in: 0,
                    face_out: 0,
                }
            }
            Shape::Cylinder => {
                let (ox, oz) = (o.x - 0.5, o.z - 0.5);
                let a = d.x * d.x + d.z * d.z;
                let (l0, l1) = if a < 1e-300 {
                    if ox * ox + oz * oz > 0.25 {
                        return None;
                    }
                    (f64::NEG_INFINITY, f64::INFINITY)
                } else {
                    quadratic(a, 2.0 * (ox * d.x + oz * d.z), ox * ox + oz * oz - 0.25)?
                };
                let (y0, y1, low_first) = slab(o.y, d.y, 0.0, 1.0)?;
                let (cap_in, cap_out) = if low_first { (1, 2) } else { (2, 1) };
                let (t_in, face_in) = if l0 >= y0 { (l0, 0) } else { (y0, cap_in) };
                let (t_out, face_out) = if l1 <= y1 { (l1, 0) } else { (y1, cap_out) };
                Hit {
                    t_in,
                    t_out,
                    face_in,
                    face_out,
                }
            }
        };
        (hit.t_in < hit.t_out && hit.t_in > 0.0).then_some(hit)
    }

    /// Surface color at canonical point `p` on `face`: a two-tone checker
    /// over the face color (box) or the object color (others).
    pub fn albedo(&self, p: &Vec3, face: usize, base: &Vec3) -> Vec3 {
        let color = match self {
            Shape::Box => Vec3::from(BOX_FACE_COLORS[face]),
            _ => *base,
        };
        // the coordinate held constant on a planar face is left out so the
        // pattern does not flicker on the face itself
        let skip = match (self, face) {
            (Shape::Box, f) => Some(f / 2),
            (Shape::Cylinder, 1 | 2) => Some(1),
            _ => None,
        };
        let parity: i64 = (0..3)
            .filter(|&a| Some(a) != skip)
            .map(|a| (p[a] * CHECKER_CELLS).floor() as i64)
            .sum();
        if parity.rem_euclid(2) == 0 {
            color
        } else {
            color * CHECKER_DARK
        }
    }

    /// Uniform-area samples of the surface.
    pub fn sample_surface<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<Vec3> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }

    fn sample_one<R: Rng>(&self, rng: &mut R) -> Vec3 {
        match self {
            Shape::Box => {
                let face = rng.random_range(0..6);
                let axis = face / 2;
                let mut p = Vec3::new(rng.random(), rng.random(), rng.random());
                p[axis] = (face % 2) as f64;
                p
            }
            Shape::Sphere => {
                let v = loop {
                    let v = Vec3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    );
                    let n = v.norm();
                    if n > 1e-6 && n <= 1.0 {
                        break v / n;
                    }
                };
                Vec3::repeat(0.5) + v * 0.5
            }
            Shape::Cylinder => {
                // lateral area pi, caps pi/4 each
                let pick: f64 = rng.random_range(0.0..1.5);
                if pick < 1.0 {
                    let phi = rng.random_range(0.0..std::f64::consts::TAU);
                    Vec3::new(0.5 + 0.5 * phi.cos(), rng.random(), 0.5 + 0.5 * phi.sin())
                } else {
                    let r = 0.5 * rng.random::<f64>().sqrt();
                    let phi = rng.random_range(0.0..std::f64::consts::TAU);
                    let y = if pick < 1.25 { 0.0 } else { 1.0 };
                    Vec3::new(0.5 + r * phi.cos(), y, 0.5 + r * phi.sin())
                }
            }
        }
    }

    /// Radius of the smallest sphere about the cube center that contains
    /// the shape.
    pub fn bounding_radius(&self) -> f64 {
        match self {
            Shape::Box => 0.75f64.sqrt(),
            Shape::Sphere => 0.5,
            Shape::Cylinder => 0.5f64.sqrt(),
        }
    }

    /// Total surface area in canonical units.
    pub fn area(&self) -> f64 {
        match self {
            Shape::Box => 6.0,
            Shape::Sphere => std::f64::consts::PI,
            Shape::Cylinder => 1.5 * std::f64::consts::PI,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn box_faces_and_interval() {
        let h = Shape::Box.intersect(&Vec3::new(0.5, 0.5, -2.0), &Vec3::z()).unwrap();
        assert_eq!((h.t_in, h.t_out), (2.0, 3.0));
        assert_eq!((h.face_in, h.face_out), (4, 5));
        let h = Shape::Box.intersect(&Vec3::new(3.0, 0.3, 0.3), &-Vec3::x()).unwrap();
        assert_eq!((h.face_in, h.face_out), (1, 0));
        assert!(Shape::Box.intersect(&Vec3::new(2.0, 0.5, -1.0), &Vec3::z()).is_none());
    }

    #[test]
    fn sphere_closed_form() {
        let o = Vec3::new(0.5, 0.5, -3.0);
        let h = Shape::Sphere.intersect(&o, &Vec3::z()).unwrap();
        assert!((h.t_in - 3.0).abs() < 1e-15 && (h.t_out - 4.0).abs() < 1e-15);
        // off-center chord
        let o = Vec3::new(0.8, 0.5, -3.0);
        let h = Shape::Sphere.intersect(&o, &Vec3::z()).unwrap();
        let half = (0.25f64 - 0.09).sqrt();
        assert!((h.t_in - (3.5 - half)).abs() < 1e-12);
    }

    #[test]
    fn cylinder_caps_and_side() {
        let down = Shape::Cylinder.intersect(&Vec3::new(0.5, 3.0, 0.5), &-Vec3::y()).unwrap();
        assert_eq!((down.face_in, down.face_out), (2, 1));
        assert!((down.t_in - 2.0).abs() < 1e-15);
        let side = Shape::Cylinder.intersect(&Vec3::new(-1.0, 0.5, 0.5), &Vec3::x()).unwrap();
        assert_eq!((side.face_in, side.face_out), (0, 0));
        assert!((side.t_in - 1.0).abs() < 1e-12 && (side.t_out - 2.0).abs() < 1e-12);
    }

    #[test]
    fn samples_on_surface_in_cube() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for shape in Shape::ALL {
            for p in shape.sample_surface(500, &mut rng) {
                assert!(p.iter().all(|&c| (0.0..=1.0).contains(&c)));
                let on = match shape {
                    Shape::Box => p.iter().any(|&c| c == 0.0 || c == 1.0),
                    Shape::Sphere => ((p - Vec3::repeat(0.5)).norm() - 0.5).abs() < 1e-12,
                    Shape::Cylinder => {
                        let r = ((p.x - 0.5).powi(2) + (p.z - 0.5).powi(2)).sqrt();
                        (r - 0.5).abs() < 1e-12 || p.y == 0.0 || p.y == 1.0
                    }
                };
                assert!(on, "{shape:?} {p:?}");
            }
        }
    }

    #[test]
    fn box_face_counts_match_areas() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let n = 60_000;
        let mut counts = [0usize; 6];
        for p in Shape::Box.sample_surface(n, &mut rng) {
            let axis = (0..3).find(|&a| p[a] == 0.0 || p[a] == 1.0).unwrap();
            counts[2 * axis + p[axis] as usize] += 1;
        }
        let expected = n as f64 / 6.0;
        let sigma = (n as f64 * (1.0 / 6.0) * (5.0 / 6.0)).sqrt();
        for c in counts {
            assert!((c as f64 - expected).abs() < 3.0 * sigma, "{counts:?}");
        }
    }
}
