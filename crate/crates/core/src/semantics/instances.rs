//! Connected components of a label map.

use super::{LabelMap, BACKGROUND};

pub const DEFAULT_MIN_PIXELS: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub label: u32,
    /// Flat pixel indices in raster order.
    pub pixels: Vec<usize>,
}

/// 4-connected components of every non-background label, in raster order of
/// their first pixel. Components smaller than `min_pixels` are dropped.
pub fn extract_instances(labels: &LabelMap, min_pixels: usize) -> Vec<Candidate> {
    let (w, h) = (labels.width, labels.height);
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        let label = labels.labels[start];
        if seen[start] || label == BACKGROUND {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut pixels = Vec::new();
        while let Some(p) = stack.pop() {
            pixels.push(p);
            let (x, y) = (p % w, p / w);
            let mut visit = |q: usize| {
                if !seen[q] && labels.labels[q] == label {
                    seen[q] = true;
                    stack.push(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < w {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - w);
            }
            if y + 1 < h {
                visit(p + w);
            }
        }
        if pixels.len() >= min_pixels {
            pixels.sort_unstable();
            out.push(Candidate { label, pixels });
        }
    }
    out
}
