use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Sim3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseEvalReport {
    pub acc_10cm: f64,
    pub acc_10deg: f64,
    pub acc_joint: f64,
    pub count: usize,
}

/// Geodesic angle between the two rotations, in degrees.
pub fn rotation_error_deg(a: &Sim3, b: &Sim3) -> f64 {
    let rel = a.rotation().inverse() * b.rotation();
    let q = rel.quaternion();
    (2.0 * q.imag().norm().atan2(q.w.abs())).to_degrees()
}

pub fn translation_error(a: &Sim3, b: &Sim3) -> f64 {
    (a.translation() - b.translation()).norm()
}

/// Threshold accuracies over matched pairs; `None` marks a ground-truth
/// object with no matched prediction and counts as a miss. Thresholds are
/// strict.
pub fn eval_pose(pred: &[Option<Sim3>], gt: &[Sim3]) -> Result<PoseEvalReport> {
    if pred.len() != gt.len() {
        return Err(Error::shape("pose predictions", gt.len(), pred.len()));
    }
    if gt.is_empty() {
        return Err(Error::Empty("pose matching".into()));
    }
    let (mut cm, mut deg, mut both) = (0usize, 0usize, 0usize);
    for (p, g) in pred.iter().zip(gt) {
        let Some(p) = p else { continue };
        let t_ok = translation_error(p, g) < 0.1;
        let r_ok = rotation_error_deg(p, g) < 10.0;
        cm += usize::from(t_ok);
        deg += usize::from(r_ok);
        both += usize::from(t_ok && r_ok);
    }
    let pct = |k: usize| 100.0 * k as f64 / gt.len() as f64;
    Ok(PoseEvalReport {
        acc_10cm: pct(cm),
        acc_10deg: pct(deg),
        acc_joint: pct(both),
        count: gt.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Quat, Vec3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pose(q: Quat, t: Vec3) -> Sim3 {
        Sim3::new(1.0, q, t).unwrap()
    }

    #[test]
    fn perfect_predictions() {
        let g = vec![pose(Quat::from_euler_angles(0.1, 0.2, 0.3), Vec3::new(0.0, 0.0, 2.0))];
        let r = eval_pose(&[Some(g[0])], &g).unwrap();
        assert_eq!((r.acc_10cm, r.acc_10deg, r.acc_joint), (100.0, 100.0, 100.0));
    }

    #[test]
    fn small_errors_pass_all_three() {
        let g = pose(Quat::identity(), Vec3::new(0.0, 0.0, 2.0));
        let p = pose(Quat::from_axis_angle(&Vec3::y_axis(), 5f64.to_radians()), Vec3::new(0.05, 0.0, 2.0));
        assert!((rotation_error_deg(&p, &g) - 5.0).abs() < 1e-9);
        let r = eval_pose(&[Some(p)], &[g]).unwrap();
        assert_eq!((r.acc_10cm, r.acc_10deg, r.acc_joint), (100.0, 100.0, 100.0));
    }

    #[test]
    fn ten_degrees_is_excluded() {
        let g = pose(Quat::identity(), Vec3::zeros());
        let p = pose(Quat::from_axis_angle(&Vec3::x_axis(), 10f64.to_radians()), Vec3::zeros());
        let err = rotation_error_deg(&p, &g);
        assert!((err - 10.0).abs() < 1e-12);
        let r = eval_pose(&[Some(p)], &[g]).unwrap();
        assert_eq!(r.acc_10deg, if err < 10.0 { 100.0 } else { 0.0 });
        let just_over = pose(Quat::from_axis_angle(&Vec3::x_axis(), 10.000001f64.to_radians()), Vec3::zeros());
        assert_eq!(eval_pose(&[Some(just_over)], &[g]).unwrap().acc_10deg, 0.0);
        let far = pose(Quat::identity(), Vec3::new(0.1, 0.0, 0.0));
        assert_eq!(eval_pose(&[Some(far)], &[g]).unwrap().acc_10cm, 0.0);
    }

    #[test]
    fn misses_and_empty() {
        let g = pose(Quat::identity(), Vec3::zeros());
        let r = eval_pose(&[None, Some(g)], &[g, g]).unwrap();
        assert_eq!(r.acc_joint, 50.0);
        assert!(eval_pose(&[], &[]).is_err());
    }

    #[test]
    fn matches_trace_formula_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let mk = |rng: &mut ChaCha8Rng| {
                pose(
                    Quat::from_euler_angles(rng.random_range(-3.0..3.0), rng.random_range(-1.5..1.5), rng.random_range(-3.0..3.0)),
                    Vec3::new(rng.random(), rng.random(), rng.random()),
                )
            };
            let (a, b) = (mk(&mut rng), mk(&mut rng));
            let rel = a.rotation_matrix().transpose() * b.rotation_matrix();
            let cos = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
            let reference = cos.acos().to_degrees();
            assert!((rotation_error_deg(&a, &b) - reference).abs() < 1e-6);
        }
    }
}
