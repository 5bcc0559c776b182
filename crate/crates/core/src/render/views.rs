//! Camera rigs on a sphere around the canonical cube.
//!
//! Every camera looks at the cube center with world +y as the up hint, so
//! image rows run along world -y. Cameras directly above or below the
//! center fall back to world +z as the hint.

use std::collections::HashMap;

use super::RenderTarget;
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, Extrinsics, Vec3};

pub const CANONICAL_CENTER: [f64; 3] = [0.5, 0.5, 0.5];
pub const DEFAULT_VIEWS: usize = 42;
pub const DEFAULT_RADIUS: f64 = 2.0;
pub const DEFAULT_FOV_DEG: f64 = 40.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalViewSet {
    pub targets: Vec<RenderTarget>,
    /// Unit direction from the cube center to each camera.
    pub directions: Vec<Vec3>,
    pub resolution: usize,
    pub radius: f64,
}

impl CanonicalViewSet {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Unit vertices of an icosahedron subdivided `level` times
/// (`10 * 4^level + 2` vertices).
pub fn icosphere(level: u32) -> Vec<Vec3> {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vec3>| -> usize {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    verts
}

fn fibonacci(n: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), y, r * phi.sin())
        })
        .collect()
}

fn icosphere_level(n: usize) -> Option<u32> {
    (0..8).find(|&l| 10 * 4usize.pow(l) + 2 == n)
}

/// `n` cameras at distance `radius` from the canonical cube center, square
/// images of side `resolution`, white background. Icosphere vertex counts
/// (12, 42, 162, ...) use the icosphere; other counts use a Fibonacci
/// lattice.
pub fn canonical_views(n: usize, resolution: usize, radius: f64) -> Result<CanonicalViewSet> {
    canonical_views_with_fov(n, resolution, radius, DEFAULT_FOV_DEG)
}

pub fn canonical_views_with_fov(n: usize, resolution: usize, radius: f64, fov_deg: f64) -> Result<CanonicalViewSet> {
    if n < 4 {
        return Err(Error::Domain(format!("need at least 4 canonical views, got {n}")));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Domain(format!("view radius must be positive, got {radius}")));
    }
    let fov = fov_deg.to_radians();
    let intrinsics = CameraIntrinsics::from_fov(fov, fov, resolution, resolution)?;
    let directions = match icosphere_level(n) {
        Some(l) => icosphere(l),
        None => fibonacci(n),
    };
    let center = Vec3::from(CANONICAL_CENTER);
    let up = Vec3::y();
    let targets = directions
        .iter()
        .map(|d| {
            let extrinsics = Extrinsics::look_at(&(center + d * radius), &center, &up)?;
            Ok(RenderTarget {
                intrinsics,
                extrinsics,
                background: Vec3::repeat(1.0),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CanonicalViewSet {
        targets,
        directions,
        resolution,
        radius,
    })
}
