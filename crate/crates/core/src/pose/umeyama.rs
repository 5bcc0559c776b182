use crate::error::{Error, Result};
use crate::geometry::{Mat3, Sim3, Vec3};

/// Sum of squared residuals `|p_i - T(c_i)|^2`.
pub fn alignment_residual(t: &Sim3, canonical: &[Vec3], camera: &[Vec3]) -> f64 {
    canonical
        .iter()
        .zip(camera)
        .map(|(c, p)| (p - t.apply(c)).norm_squared())
        .sum()
}

/// Least-squares similarity `camera_i ~ s R canonical_i + t`.
pub fn umeyama_sim3(canonical: &[Vec3], camera: &[Vec3]) -> Result<Sim3> {
    if canonical.len() != camera.len() {
        return Err(Error::shape("camera points", canonical.len(), camera.len()));
    }
    let n = canonical.len();
    if n < 3 {
        return Err(Error::Arity { needed: 3, got: n });
    }
    if let Some(i) = canonical.iter().chain(camera).position(|v| !v.iter().all(|x| x.is_finite())) {
        return Err(Error::NonFinite {
            what: "correspondence".into(),
            index: i % n,
        });
    }
    let nf = n as f64;
    let mu_c = canonical.iter().sum::<Vec3>() / nf;
    let mu_p = camera.iter().sum::<Vec3>() / nf;
    let mut cov = Mat3::zeros();
    let mut scatter = Mat3::zeros();
    for (c, p) in canonical.iter().zip(camera) {
        let dc = c - mu_c;
        cov += (p - mu_p) * dc.transpose();
        scatter += dc * dc.transpose();
    }
    cov /= nf;
    scatter /= nf;
    let var_c = scatter.trace();

    let mut eig: Vec<f64> = scatter.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    if !(eig[0] > 0.0) || eig[1] <= 1e-12 * eig[0] {
        return Err(Error::Degenerate("canonical points are collinear or coincident".into()));
    }

    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let mut d = Vec3::new(1.0, 1.0, 1.0);
    if u.determinant() * v_t.determinant() < 0.0 {
        // flip the axis of the smallest singular value
        let smallest = svd.singular_values.imin();
        d[smallest] = -1.0;
    }
    let r = u * Mat3::from_diagonal(&d) * v_t;
    let s = svd.singular_values.dot(&d) / var_c;
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Degenerate(format!("recovered scale {s} is not positive")));
    }
    let t = mu_p - s * r * mu_c;
    Sim3::from_matrix(s, &r, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Quat;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tetra() -> Vec<Vec3> {
        vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ]
    }

    #[test]
    fn identity_and_translation() {
        let c = tetra();
        let t = umeyama_sim3(&c, &c).unwrap();
        assert!((t.scale() - 1.0).abs() < 1e-12);
        assert!((t.rotation_matrix() - Mat3::identity()).amax() < 1e-12);
        assert!(t.translation().amax() < 1e-12);

        let p: Vec<Vec3> = c.iter().map(|x| x + Vec3::new(1.0, 2.0, 3.0)).collect();
        let t = umeyama_sim3(&c, &p).unwrap();
        assert!((t.scale() - 1.0).abs() < 1e-12);
        assert!((t.translation() - Vec3::new(1.0, 2.0, 3.0)).amax() < 1e-12);
    }

    #[test]
    fn recovers_known_similarity() {
        let truth = Sim3::new(
            2.0,
            Quat::from_axis_angle(&Vec3::z_axis(), std::f64::consts::FRAC_PI_2),
            Vec3::new(0.0, 0.0, 1.0),
        )
        .unwrap();
        let c = tetra();
        let p: Vec<Vec3> = c.iter().map(|x| truth.apply(x)).collect();
        let t = umeyama_sim3(&c, &p).unwrap();
        assert!((t.scale() - 2.0).abs() < 1e-10);
        assert!((t.rotation_matrix() - truth.rotation_matrix()).amax() < 1e-10);
        assert!((t.translation() - truth.translation()).amax() < 1e-10);
    }

    #[test]
    fn degenerate_inputs() {
        let line: Vec<Vec3> = (0..5).map(|i| Vec3::new(i as f64, 2.0 * i as f64, 0.0)).collect();
        assert!(matches!(umeyama_sim3(&line, &line), Err(Error::Degenerate(_))));
        let two = &tetra()[..2];
        assert!(matches!(umeyama_sim3(two, two), Err(Error::Arity { .. })));
    }

    #[test]
    fn coplanar_points_are_fine() {
        let c = vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
        ];
        let truth = Sim3::new(0.5, Quat::from_euler_angles(0.3, -0.2, 1.0), Vec3::new(1.0, 0.0, 2.0)).unwrap();
        let p: Vec<Vec3> = c.iter().map(|x| truth.apply(x)).collect();
        let t = umeyama_sim3(&c, &p).unwrap();
        assert!((t.rotation_matrix() - truth.rotation_matrix()).amax() < 1e-10);
        assert!((t.rotation_matrix().determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn beats_random_competitors_under_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let c: Vec<Vec3> = (0..30).map(|_| Vec3::new(rng.random(), rng.random(), rng.random())).collect();
        let truth = Sim3::new(0.3, Quat::from_euler_angles(0.1, 0.5, -0.4), Vec3::new(0.0, 0.1, 2.0)).unwrap();
        let p: Vec<Vec3> = c
            .iter()
            .map(|x| truth.apply(x) + Vec3::new(rng.random(), rng.random(), rng.random()) * 0.01)
            .collect();
        let best = umeyama_sim3(&c, &p).unwrap();
        let r0 = alignment_residual(&best, &c, &p);
        for _ in 0..200 {
            let q = Quat::from_euler_angles(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), 0.0);
            let other = Sim3::new(
                best.scale() * rng.random_range(0.95..1.05),
                q * best.rotation(),
                best.translation() + Vec3::new(rng.random(), rng.random(), rng.random()) * 0.01,
            )
            .unwrap();
            assert!(alignment_residual(&other, &c, &p) >= r0);
        }
    }
}
