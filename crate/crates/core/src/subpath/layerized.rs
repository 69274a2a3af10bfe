//! The maximum subpath score written as a stack of standard layers:
//! per frame `A_t = M_t + maxpool2d(relu(A_{t-1}))`, then a global max.

use crate::error::{Error, Result};
use crate::subpath::volume::{ScoreVolume, SubpathConfig};

pub fn relu(plane: &[f64]) -> Vec<f64> {
    plane.iter().map(|&x| x.max(0.0)).collect()
}

/// Stride-1 max pooling over a `(2k+1)^2` window on a `w x h` plane (i-major),
/// output the same size; out-of-bounds taps are skipped.
pub fn max_pool2d(plane: &[f64], w: usize, h: usize, k: usize) -> Vec<f64> {
    let mut out = vec![f64::NEG_INFINITY; w * h];
    for i in 0..w {
        for j in 0..h {
            let mut m = f64::NEG_INFINITY;
            for vi in i.saturating_sub(k)..=(i + k).min(w - 1) {
                for vj in j.saturating_sub(k)..=(j + k).min(h - 1) {
                    m = m.max(plane[vi * h + vj]);
                }
            }
            out[i * h + j] = m;
        }
    }
    out
}

fn layerized_slice(m: &ScoreVolume, scale: usize, shape: usize, k: usize) -> f64 {
    let [_, _, w, h, nt] = m.dims();
    let frame = |t: usize| -> Vec<f64> {
        let mut p = Vec::with_capacity(w * h);
        for i in 0..w {
            for j in 0..h {
                p.push(m.get(scale, shape, i, j, t));
            }
        }
        p
    };
    let mut acc = frame(0);
    let mut best = acc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for t in 1..nt {
        let pooled = max_pool2d(&relu(&acc), w, h, k);
        acc = frame(t).iter().zip(&pooled).map(|(x, p)| x + p).collect();
        best = acc.iter().copied().fold(best, f64::max);
    }
    best
}

/// Score of the best tube computed with relu, max pooling and framewise sums.
///
/// 3D volumes use `cfg.k_move`. 5D volumes are supported only with zero
/// scale/shape radii, where each (scale, shape) slice is independent.
pub fn layerized_max_score(m: &ScoreVolume, cfg: &SubpathConfig) -> Result<f64> {
    match m.rank() {
        3 => Ok(layerized_slice(m, 0, 0, cfg.k_move)),
        5 if cfg.r_scale == 0 && cfg.r_shape == 0 => {
            let [ns, nsh, ..] = m.dims();
            let mut best = f64::NEG_INFINITY;
            for sc in 0..ns {
                for sh in 0..nsh {
                    best = best.max(layerized_slice(m, sc, sh, cfg.k_move));
                }
            }
            Ok(best)
        }
        5 => Err(Error::Unsupported(
            "layerized form on 5D volumes needs zero scale/shape radii".into(),
        )),
        r => Err(Error::Dimensionality(r)),
    }
}
