//! Open-vocabulary segmentation metrics.

use serde::{Deserialize, Serialize};

use super::{LabelMap, BACKGROUND};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegEvalReport {
    pub miou: f64,
    pub fb_iou: f64,
    pub hit_at_5: f64,
}

/// Top-`k` classes per pixel by descending marginal (ties to the lower
/// index). The background class becomes [`BACKGROUND`]; missing ranks are
/// padded with it.
pub fn top_k(marginals: &[f64], classes: usize, k: usize, background: Option<usize>) -> Vec<u32> {
    let mut out = Vec::with_capacity(marginals.len() / classes.max(1) * k);
    let mut order: Vec<usize> = Vec::with_capacity(classes);
    for q in marginals.chunks_exact(classes) {
        order.clear();
        order.extend(0..classes);
        order.sort_by(|&a, &b| q[b].total_cmp(&q[a]).then(a.cmp(&b)));
        for r in 0..k {
            out.push(match order.get(r) {
                Some(&c) if Some(c) != background => c as u32,
                _ => BACKGROUND,
            });
        }
    }
    out
}

/// mIoU and hit@k over ground-truth foreground pixels; FB-IoU over the whole
/// image. `pred_topk` is H×W×k with the top-1 label first.
pub fn eval_segmentation(pred_topk: &[u32], k: usize, gt: &LabelMap) -> Result<SegEvalReport> {
    let n = gt.width * gt.height;
    if k == 0 || pred_topk.len() != n * k {
        return Err(Error::shape("top-k predictions", n * k.max(1), pred_topk.len()));
    }
    if gt.labels.len() != n {
        return Err(Error::shape("ground-truth labels", n, gt.labels.len()));
    }
    let top1 = |i: usize| pred_topk[i * k];

    let mut classes: Vec<u32> = gt.labels.iter().copied().filter(|&l| l != BACKGROUND).collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.is_empty() {
        return Err(Error::Empty("ground truth has no foreground pixels".into()));
    }

    let mut iou_sum = 0.0;
    for &c in &classes {
        let (mut inter, mut union) = (0usize, 0usize);
        for i in (0..n).filter(|&i| gt.labels[i] != BACKGROUND) {
            let (g, p) = (gt.labels[i] == c, top1(i) == c);
            inter += usize::from(g && p);
            union += usize::from(g || p);
        }
        iou_sum += inter as f64 / union as f64;
    }
    let miou = 100.0 * iou_sum / classes.len() as f64;

    let mut fb = Vec::with_capacity(2);
    for want_fg in [true, false] {
        let (mut inter, mut union) = (0usize, 0usize);
        for i in 0..n {
            let g = (gt.labels[i] != BACKGROUND) == want_fg;
            let p = (top1(i) != BACKGROUND) == want_fg;
            inter += usize::from(g && p);
            union += usize::from(g || p);
        }
        if union > 0 {
            fb.push(inter as f64 / union as f64);
        }
    }
    let fb_iou = 100.0 * fb.iter().sum::<f64>() / fb.len() as f64;

    let fg: Vec<usize> = (0..n).filter(|&i| gt.labels[i] != BACKGROUND).collect();
    let hits = fg
        .iter()
        .filter(|&&i| pred_topk[i * k..(i + 1) * k].contains(&gt.labels[i]))
        .count();
    Ok(SegEvalReport {
        miou,
        fb_iou,
        hit_at_5: 100.0 * hits as f64 / fg.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gt_half() -> LabelMap {
        LabelMap {
            width: 4,
            height: 2,
            labels: vec![1, 1, 2, 2, BACKGROUND, BACKGROUND, BACKGROUND, BACKGROUND],
        }
    }

    fn as_topk(labels: &[u32], k: usize) -> Vec<u32> {
        labels.iter().flat_map(|&l| std::iter::repeat_n(l, k)).collect()
    }

    #[test]
    fn perfect_prediction() {
        let gt = gt_half();
        let r = eval_segmentation(&as_topk(&gt.labels, 5), 5, &gt).unwrap();
        assert_eq!((r.miou, r.fb_iou, r.hit_at_5), (100.0, 100.0, 100.0));
    }

    #[test]
    fn all_background_prediction() {
        let gt = gt_half();
        let r = eval_segmentation(&[BACKGROUND; 40], 5, &gt).unwrap();
        assert_eq!(r.fb_iou, 25.0);
        assert_eq!(r.miou, 0.0);
        assert_eq!(r.hit_at_5, 0.0);
    }

    #[test]
    fn third_rank_hit() {
        let gt = gt_half();
        let mut pred = Vec::new();
        for &l in &gt.labels {
            pred.extend_from_slice(&[7, 8, l, 9, 10]);
        }
        let r = eval_segmentation(&pred, 5, &gt).unwrap();
        assert_eq!(r.hit_at_5, 100.0);
        assert_eq!(r.miou, 0.0);
    }

    #[test]
    fn no_foreground_is_error() {
        let gt = LabelMap {
            width: 1,
            height: 1,
            labels: vec![BACKGROUND],
        };
        assert!(eval_segmentation(&[BACKGROUND], 1, &gt).is_err());
    }

    #[test]
    fn top_k_orders_and_pads() {
        let q = [0.1, 0.5, 0.4, 0.2, 0.2, 0.6];
        assert_eq!(top_k(&q, 3, 5, Some(2)), vec![1, BACKGROUND, 0, BACKGROUND, BACKGROUND, BACKGROUND, 0, 1, BACKGROUND, BACKGROUND]);
    }

    fn reference(pred: &[u32], k: usize, gt: &[u32]) -> [f64; 3] {
        let bg = BACKGROUND;
        let mut present = vec![];
        for &g in gt {
            if g != bg && !present.contains(&g) {
                present.push(g);
            }
        }
        let mut miou = 0.0;
        for &c in &present {
            let mut i_ = 0.0;
            let mut u_ = 0.0;
            for p in 0..gt.len() {
                if gt[p] == bg {
                    continue;
                }
                if gt[p] == c && pred[p * k] == c {
                    i_ += 1.0;
                }
                if gt[p] == c || pred[p * k] == c {
                    u_ += 1.0;
                }
            }
            miou += i_ / u_;
        }
        miou = miou / present.len() as f64 * 100.0;
        let mut ious = vec![];
        for fg in [true, false] {
            let mut i_ = 0.0;
            let mut u_ = 0.0;
            for p in 0..gt.len() {
                let a = (gt[p] != bg) == fg;
                let b = (pred[p * k] != bg) == fg;
                if a && b {
                    i_ += 1.0;
                }
                if a || b {
                    u_ += 1.0;
                }
            }
            if u_ > 0.0 {
                ious.push(i_ / u_);
            }
        }
        let fb = ious.iter().sum::<f64>() / ious.len() as f64 * 100.0;
        let mut hits = 0.0;
        let mut cnt = 0.0;
        for p in 0..gt.len() {
            if gt[p] != bg {
                cnt += 1.0;
                if (0..k).any(|r| pred[p * k + r] == gt[p]) {
                    hits += 1.0;
                }
            }
        }
        [miou, fb, hits / cnt * 100.0]
    }

    #[test]
    fn random_maps_match_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let pick = |rng: &mut ChaCha8Rng| if rng.random_bool(0.3) { BACKGROUND } else { rng.random_range(0..4) };
        for _ in 0..50 {
            let mut gt: Vec<u32> = (0..36).map(|_| pick(&mut rng)).collect();
            gt[0] = 1;
            let pred: Vec<u32> = (0..36 * 5).map(|_| pick(&mut rng)).collect();
            let map = LabelMap {
                width: 6,
                height: 6,
                labels: gt.clone(),
            };
            let r = eval_segmentation(&pred, 5, &map).unwrap();
            let e = reference(&pred, 5, &gt);
            assert!((r.miou - e[0]).abs() < 1e-12);
            assert!((r.fb_iou - e[1]).abs() < 1e-12);
            assert!((r.hit_at_5 - e[2]).abs() < 1e-12);
        }
    }
}
