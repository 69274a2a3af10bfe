//! Score volumes `m_cs`, their class differences, and tube aggregation.

use crate::error::{Error, Result};
use crate::model::features::{FeatureMap, FeaturePack};
use crate::model::masks::ShapeMask;
use crate::model::params::{ExplainModel, Kernel};
use crate::subpath::{ScoreVolume, TubePath};

pub fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// `log σ(a)` without overflow for large `|a|`.
pub fn log_sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        -(-a).exp().ln_1p()
    } else {
        a - a.exp().ln_1p()
    }
}

/// Same-size, zero-padded, stride-1 correlation of one feature map with a
/// kernel under each mask. Output planes are `W_s x H_s x T`, `t` fastest.
pub fn conv_masked(f: &FeatureMap, k: &Kernel, masks: &[ShapeMask]) -> Result<Vec<Vec<f64>>> {
    if f.d != k.d {
        return Err(Error::ShapeMismatch(format!(
            "features have {} channels, kernel expects {}",
            f.d, k.d
        )));
    }
    let mut out = vec![vec![0.0; f.w * f.h * f.t]; masks.len()];
    let mut taps = [0.0f64; 9];
    for i in 0..f.w {
        for j in 0..f.h {
            for t in 0..f.t {
                for di in 0..3 {
                    for dj in 0..3 {
                        let v = f.at(i as isize + di as isize - 1, j as isize + dj as isize - 1, t);
                        taps[di * 3 + dj] = match v {
                            Some(h) => k.tap(di, dj).iter().zip(h).map(|(a, b)| a * b).sum(),
                            None => 0.0,
                        };
                    }
                }
                let o = (i * f.h + j) * f.t + t;
                for (plane, mask) in out.iter_mut().zip(masks) {
                    let mut acc = 0.0;
                    for di in 0..3 {
                        for dj in 0..3 {
                            acc += mask.at(di, dj) * taps[di * 3 + dj];
                        }
                    }
                    plane[o] = acc;
                }
            }
        }
    }
    Ok(out)
}

fn masks_of(model: &ExplainModel) -> Vec<ShapeMask> {
    model.shapes.iter().map(|s| s.mask()).collect()
}

fn check_features(features: &FeaturePack, model: &ExplainModel) -> Result<()> {
    if features.geometry != model.geometry {
        return Err(Error::ShapeMismatch("feature geometry differs from the model's".into()));
    }
    if features.channels() != model.channels() {
        return Err(Error::ShapeMismatch(format!(
            "feature channels {:?} vs model channels {:?}",
            features.channels(),
            model.channels()
        )));
    }
    Ok(())
}

/// Builds the 5D volume `(scale, shape, i, j, t)` on the finest grid from one
/// kernel per scale; coarse scales are upsampled by nearest neighbour.
pub fn volume_for_kernels(
    features: &FeaturePack,
    model: &ExplainModel,
    kernels: &[Kernel],
) -> Result<ScoreVolume> {
    check_features(features, model)?;
    let masks = masks_of(model);
    let (fw, fh) = features.geometry.finest_grid();
    let nt = features.frames();
    let mut vol = ScoreVolume::zeros_5d([kernels.len(), masks.len(), fw, fh, nt]);
    for (sc, (fmap, k)) in features.scales.iter().zip(kernels).enumerate() {
        let planes = conv_masked(fmap, k, &masks)?;
        let up = features.geometry.upsample_factor(sc);
        for (sh, plane) in planes.iter().enumerate() {
            for i in 0..fw {
                for j in 0..fh {
                    let src = ((i / up) * fmap.h + j / up) * nt;
                    let dst = vol.index(sc, sh, i, j, 0);
                    vol.data_mut()[dst..dst + nt].copy_from_slice(&plane[src..src + nt]);
                }
            }
        }
    }
    Ok(vol)
}

/// `m_cs` for every scale and shape.
pub fn score_maps(features: &FeaturePack, model: &ExplainModel, c: usize, s: usize) -> Result<ScoreVolume> {
    check_indices(model, &[c], s)?;
    let kernels = (0..model.geometry.n_scales())
        .map(|sc| model.pair_kernel(sc, c, s))
        .collect::<Result<Vec<_>>>()?;
    volume_for_kernels(features, model, &kernels)
}

/// `m_{c_pos s} - m_{c_neg s}`, computed with the difference kernel.
pub fn delta_m(
    features: &FeaturePack,
    model: &ExplainModel,
    c_pos: usize,
    c_neg: usize,
    s: usize,
) -> Result<ScoreVolume> {
    if c_pos == c_neg {
        return Err(Error::IdenticalClasses(c_pos));
    }
    check_indices(model, &[c_pos, c_neg], s)?;
    let kernels = (0..model.geometry.n_scales())
        .map(|sc| model.delta_kernel(sc, c_pos, c_neg, s))
        .collect::<Result<Vec<_>>>()?;
    volume_for_kernels(features, model, &kernels)
}

fn check_indices(model: &ExplainModel, classes: &[usize], s: usize) -> Result<()> {
    if let Some(&c) = classes.iter().find(|&&c| c >= model.n_classes()) {
        return Err(Error::UnknownName(format!("class index {c}")));
    }
    if s >= model.n_attributes() {
        return Err(Error::UnknownName(format!("attribute index {s}")));
    }
    Ok(())
}

/// Sum of the score volume over the tube.
pub fn aggregate(delta: &ScoreVolume, tube: &TubePath) -> Result<f64> {
    tube.sum(delta)
}

/// `σ(aggregate)`.
pub fn counterfactuality(delta: &ScoreVolume, tube: &TubePath) -> Result<f64> {
    Ok(sigmoid(aggregate(delta, tube)?))
}

/// Mask-weighted sum of the features under the tube's receptive windows, one
/// `9 d` vector per scale, so that `aggregate(delta_m, R) = Σ_scale Δw · pool`.
pub fn pooled_features(features: &FeaturePack, model: &ExplainModel, tube: &TubePath) -> Result<Vec<Vec<f64>>> {
    check_features(features, model)?;
    let masks = masks_of(model);
    let mut pooled: Vec<Vec<f64>> = features.scales.iter().map(|f| vec![0.0; 9 * f.d]).collect();
    for e in tube.elements() {
        let fmap = features
            .scales
            .get(e.scale)
            .ok_or_else(|| Error::InvalidPath(format!("scale {} out of range", e.scale)))?;
        let mask = masks
            .get(e.shape)
            .ok_or_else(|| Error::InvalidPath(format!("shape {} out of range", e.shape)))?;
        let up = features.geometry.upsample_factor(e.scale);
        let (ci, cj) = ((e.i / up) as isize, (e.j / up) as isize);
        let acc = &mut pooled[e.scale];
        for di in 0..3 {
            for dj in 0..3 {
                let a = mask.at(di, dj);
                if let Some(h) = fmap.at(ci + di as isize - 1, cj + dj as isize - 1, e.t) {
                    let o = (di * 3 + dj) * fmap.d;
                    for (slot, &x) in acc[o..o + fmap.d].iter_mut().zip(h) {
                        *slot += a * x;
                    }
                }
            }
        }
    }
    Ok(pooled)
}
