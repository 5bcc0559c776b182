//! Point-cloud reconstruction metrics and instance matching.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

pub const DEFAULT_F1_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Recon3dReport {
    pub chamfer: f64,
    pub f1: f64,
    pub threshold: f64,
}

fn dist2(a: &Vec3, b: &Vec3) -> f64 {
    let (dx, dy, dz) = (a.x - b.x, a.y - b.y, a.z - b.z);
    dx * dx + dy * dy + dz * dz
}

const LEAF: usize = 12;

enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Static 3-d tree answering exact nearest-neighbor distance queries.
pub struct KdTree {
    points: Vec<Vec3>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn new(points: &[Vec3]) -> Self {
        let mut tree = KdTree {
            points: points.to_vec(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build(0, points.len());
        }
        tree
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let slice = &mut self.points[start..end];
        let mut lo = slice[0];
        let mut hi = slice[0];
        for p in slice.iter() {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let axis = (hi - lo).imax();
        let mid = slice.len() / 2;
        slice.select_nth_unstable_by(mid, |a, b| a[axis].total_cmp(&b[axis]));
        let value = slice[mid][axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build(start, start + mid);
        let right = self.build(start + mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    /// Squared distance from `q` to its nearest point.
    pub fn nearest_sq(&self, q: &Vec3) -> f64 {
        let mut best = f64::INFINITY;
        if !self.nodes.is_empty() {
            self.search(0, q, &mut best);
        }
        best
    }

    fn search(&self, node: usize, q: &Vec3, best: &mut f64) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for p in &self.points[start..end] {
                    let d = dist2(p, q);
                    if d < *best {
                        *best = d;
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                if diff * diff <= *best {
                    self.search(far, q, best);
                }
            }
        }
    }
}

/// Distance from every point of `queries` to its nearest point in `target`.
pub fn nearest_distances(queries: &[Vec3], target: &[Vec3]) -> Vec<f64> {
    let tree = KdTree::new(target);
    queries.par_iter().map(|q| tree.nearest_sq(q).sqrt()).collect()
}

fn check_nonempty(a: &[Vec3], b: &[Vec3]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("point cloud".into()));
    }
    Ok(())
}

/// Symmetric Chamfer distance with unsquared Euclidean nearest distances.
pub fn chamfer(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    check_nonempty(a, b)?;
    let ab = nearest_distances(a, b);
    let ba = nearest_distances(b, a);
    Ok(ab.iter().sum::<f64>() / a.len() as f64 + ba.iter().sum::<f64>() / b.len() as f64)
}

fn f1_from(ab: &[f64], ba: &[f64], threshold: f64) -> f64 {
    let precision = ab.iter().filter(|&&d| d < threshold).count() as f64 / ab.len() as f64;
    let recall = ba.iter().filter(|&&d| d < threshold).count() as f64 / ba.len() as f64;
    if precision + recall == 0.0 {
        0.0
    } else {
        200.0 * (precision * recall) / (precision + recall)
    }
}

/// F-score (percent) of `a` against `b` at distance `threshold`.
pub fn fscore(a: &[Vec3], b: &[Vec3], threshold: f64) -> Result<f64> {
    check_nonempty(a, b)?;
    if !(threshold > 0.0) {
        return Err(Error::Domain(format!("F-score threshold must be positive, got {threshold}")));
    }
    Ok(f1_from(&nearest_distances(a, b), &nearest_distances(b, a), threshold))
}

pub fn recon_report(pred: &[Vec3], gt: &[Vec3], threshold: f64) -> Result<Recon3dReport> {
    check_nonempty(pred, gt)?;
    if !(threshold > 0.0) {
        return Err(Error::Domain(format!("F-score threshold must be positive, got {threshold}")));
    }
    let ab = nearest_distances(pred, gt);
    let ba = nearest_distances(gt, pred);
    Ok(Recon3dReport {
        chamfer: ab.iter().sum::<f64>() / pred.len() as f64 + ba.iter().sum::<f64>() / gt.len() as f64,
        f1: f1_from(&ab, &ba, threshold),
        threshold,
    })
}

/// Maximum-weight assignment of rows to columns of a dense `rows x cols`
/// score matrix (Hungarian algorithm on negated scores). Returns the
/// matched column per row, if any.
pub fn hungarian_max(scores: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = scores.len();
    let cols = scores.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return vec![None; rows];
    }
    let n = rows.max(cols);
    let cost = |i: usize, j: usize| -> f64 {
        if i < rows && j < cols {
            -scores[i][j]
        } else {
            0.0
        }
    };
    // potentials and matching, 1-based with a virtual column 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; rows];
    for j in 1..=n {
        let i = p[j];
        if i >= 1 && i <= rows && j <= cols {
            out[i - 1] = Some(j - 1);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Quat, Sim3};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
        (0..n).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect()
    }

    fn brute_chamfer(a: &[Vec3], b: &[Vec3]) -> f64 {
        let one = |x: &[Vec3], y: &[Vec3]| {
            let mut s = 0.0;
            for p in x {
                let mut m = f64::INFINITY;
                for q in y {
                    let d = ((p.x - q.x).powi(2) + (p.y - q.y).powi(2) + (p.z - q.z).powi(2)).sqrt();
                    if d < m {
                        m = d;
                    }
                }
                s += m;
            }
            s / x.len() as f64
        };
        one(a, b) + one(b, a)
    }

    #[test]
    fn chamfer_basics() {
        let a = vec![Vec3::zeros()];
        let b = vec![Vec3::new(1.0, 0.0, 0.0)];
        assert_eq!(chamfer(&a, &b).unwrap(), 2.0);
        assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
        assert!(chamfer(&a, &[]).is_err());
    }

    #[test]
    fn kd_tree_equals_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for n in [1, 5, 13, 60, 200] {
            let a = cloud(&mut rng, n);
            let b = cloud(&mut rng, 200 - n + 1);
            let tree = KdTree::new(&b);
            for q in &a {
                let brute = b.iter().map(|p| dist2(p, q)).fold(f64::INFINITY, f64::min);
                assert_eq!(tree.nearest_sq(q), brute);
            }
            assert!((chamfer(&a, &b).unwrap() - brute_chamfer(&a, &b)).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicate_points() {
        let a = vec![Vec3::new(0.5, 0.5, 0.5); 40];
        let b: Vec<Vec3> = (0..40).map(|i| Vec3::new(0.5, 0.5, i as f64 * 0.01)).collect();
        assert!((chamfer(&a, &b).unwrap() - brute_chamfer(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn fscore_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = cloud(&mut rng, 50);
        assert_eq!(fscore(&a, &a, 0.1).unwrap(), 100.0);
        let far: Vec<Vec3> = a.iter().map(|p| p + Vec3::new(5.0, 0.0, 0.0)).collect();
        assert_eq!(fscore(&a, &far, 0.1).unwrap(), 0.0);
        assert!(fscore(&a, &a, 0.0).is_err());
    }

    #[test]
    fn fscore_monotone_in_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let a = cloud(&mut rng, 60);
            let b = cloud(&mut rng, 80);
            let mut prev = 0.0;
            for t in [0.01, 0.05, 0.1, 0.2, 0.5] {
                let f = fscore(&a, &b, t).unwrap();
                assert!(f >= prev);
                prev = f;
            }
        }
    }

    #[test]
    fn hungarian_small_cases() {
        let s = vec![vec![0.9, 0.1], vec![0.8, 0.7]];
        assert_eq!(hungarian_max(&s), vec![Some(0), Some(1)]);
        let s = vec![vec![0.1, 0.9, 0.0]];
        assert_eq!(hungarian_max(&s), vec![Some(1)]);
        let s = vec![vec![0.5], vec![0.9], vec![0.2]];
        assert_eq!(hungarian_max(&s), vec![None, Some(0), None]);
        assert!(hungarian_max(&[]).is_empty());
    }

    #[test]
    fn hungarian_matches_exhaustive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..30 {
            let n = 5;
            let s: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random()).collect()).collect();
            let got: f64 = hungarian_max(&s).iter().enumerate().map(|(i, j)| s[i][j.unwrap()]).sum();
            let mut best = 0.0f64;
            let mut perm: Vec<usize> = (0..n).collect();
            permute(&mut perm, 0, &mut |p| {
                best = best.max((0..n).map(|i| s[i][p[i]]).sum());
            });
            assert!((got - best).abs() < 1e-12);
        }
    }

    fn permute(p: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
        if k == p.len() {
            f(p);
            return;
        }
        for i in k..p.len() {
            p.swap(k, i);
            permute(p, k + 1, f);
            p.swap(k, i);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn symmetric_and_invariant(seed in 0u64..10_000, scale in 0.1f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = cloud(&mut rng, 30);
            let b = cloud(&mut rng, 45);
            let c = chamfer(&a, &b).unwrap();
            prop_assert!((c - chamfer(&b, &a).unwrap()).abs() < 1e-12);
            let t = Sim3::new(1.0, Quat::from_euler_angles(0.3, 1.1, -0.7), Vec3::new(3.0, -1.0, 2.0)).unwrap();
            let ta: Vec<Vec3> = a.iter().map(|p| t.apply(p)).collect();
            let tb: Vec<Vec3> = b.iter().map(|p| t.apply(p)).collect();
            prop_assert!((chamfer(&ta, &tb).unwrap() - c).abs() < 1e-9);
            let f = fscore(&a, &b, 0.1).unwrap();
            prop_assert!((f - fscore(&b, &a, 0.1).unwrap()).abs() < 1e-12);
            // powers of two keep the scaled comparisons exact
            let s = 2f64.powi((scale.log2().round()) as i32);
            let sa: Vec<Vec3> = a.iter().map(|p| p * s).collect();
            let sb: Vec<Vec3> = b.iter().map(|p| p * s).collect();
            prop_assert_eq!(fscore(&sa, &sb, 0.1 * s).unwrap(), f);
        }
    }
}
