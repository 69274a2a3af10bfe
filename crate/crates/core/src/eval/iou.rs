use std::collections::{BTreeMap, BTreeSet};

use crate::inference::PixelBox;

/// Area of the union of `a`, the union of `b`, and of their intersection,
/// all on one frame, via coordinate compression.
fn frame_areas(a: &[PixelBox], b: &[PixelBox]) -> (usize, usize) {
    let mut xs: Vec<usize> = a.iter().chain(b).flat_map(|r| [r.x, r.x + r.w]).collect();
    let mut ys: Vec<usize> = a.iter().chain(b).flat_map(|r| [r.y, r.y + r.h]).collect();
    xs.sort_unstable();
    xs.dedup();
    ys.sort_unstable();
    ys.dedup();
    let covers = |set: &[PixelBox], x: usize, y: usize| set.iter().any(|r| (r.x..r.x + r.w).contains(&x) && (r.y..r.y + r.h).contains(&y));
    let (mut inter, mut union) = (0, 0);
    for xw in xs.windows(2) {
        for yw in ys.windows(2) {
            let area = (xw[1] - xw[0]) * (yw[1] - yw[0]);
            let (ia, ib) = (covers(a, xw[0], yw[0]), covers(b, xw[0], yw[0]));
            if ia && ib {
                inter += area;
            }
            if ia || ib {
                union += area;
            }
        }
    }
    (inter, union)
}

fn by_frame(boxes: &[PixelBox]) -> BTreeMap<usize, Vec<PixelBox>> {
    let mut m: BTreeMap<usize, Vec<PixelBox>> = BTreeMap::new();
    for b in boxes {
        m.entry(b.t).or_default().push(*b);
    }
    m
}

/// Spatio-temporal IoU: summed per-frame intersection over summed per-frame
/// union. Two sets with no area at all are considered identical.
pub fn tube_iou(pred: &[PixelBox], gt: &[PixelBox]) -> f64 {
    let (pa, ga) = (by_frame(pred), by_frame(gt));
    let empty = Vec::new();
    let (mut inter, mut union) = (0usize, 0usize);
    let frames: BTreeSet<usize> = pa.keys().chain(ga.keys()).copied().collect();
    for t in frames {
        let (i, u) = frame_areas(pa.get(&t).unwrap_or(&empty), ga.get(&t).unwrap_or(&empty));
        inter += i;
        union += u;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}
