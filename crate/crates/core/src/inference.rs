//! Ranked (attribute, tube) explanations and their input-space boxes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{aggregate, delta_m, sigmoid, ExplainModel, FeaturePack};
use crate::subpath::{max_subpath, SubpathConfig, TubePath};
use crate::tensor::Geometry;

/// Rectangle in input pixels on frame `t`, half-open `[x, x + w) x [y, y + h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 5]", into = "[usize; 5]")]
pub struct PixelBox {
    pub t: usize,
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl From<[usize; 5]> for PixelBox {
    fn from([t, x, y, w, h]: [usize; 5]) -> Self {
        Self { t, x, y, w, h }
    }
}

impl From<PixelBox> for [usize; 5] {
    fn from(b: PixelBox) -> Self {
        [b.t, b.x, b.y, b.w, b.h]
    }
}

impl PixelBox {
    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn intersection(&self, o: &PixelBox) -> usize {
        if self.t != o.t {
            return 0;
        }
        let iw = (self.x + self.w).min(o.x + o.w).saturating_sub(self.x.max(o.x));
        let ih = (self.y + self.h).min(o.y + o.h).saturating_sub(self.y.max(o.y));
        iw * ih
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub attribute: usize,
    pub score: f64,
    pub tube: TubePath,
    pub boxes: Vec<PixelBox>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplanationSet {
    pub c_pos: usize,
    pub c_neg: usize,
    pub items: Vec<Explanation>,
    /// Set when fewer items than requested exist.
    pub truncated: bool,
}

/// Every attribute with its argmax tube, ranked by `y` (ties by attribute index).
pub fn explain_all(
    features: &FeaturePack,
    model: &ExplainModel,
    c_pos: usize,
    c_neg: usize,
    cfg: &SubpathConfig,
) -> Result<Vec<Explanation>> {
    if c_pos == c_neg {
        return Err(Error::IdenticalClasses(c_pos));
    }
    let mut items = (0..model.n_attributes())
        .into_par_iter()
        .map(|s| {
            let dm = delta_m(features, model, c_pos, c_neg, s)?;
            let (_, tube) = max_subpath(&dm, cfg)?;
            let score = sigmoid(aggregate(&dm, &tube)?);
            let boxes = restore_region(&tube, model, &features.geometry);
            Ok(Explanation { attribute: s, score, tube, boxes })
        })
        .collect::<Result<Vec<_>>>()?;
    items.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.attribute.cmp(&b.attribute)));
    Ok(items)
}

/// The `n_top` best explanations for the query.
pub fn explain(
    features: &FeaturePack,
    model: &ExplainModel,
    c_pos: usize,
    c_neg: usize,
    n_top: usize,
    cfg: &SubpathConfig,
) -> Result<ExplanationSet> {
    if n_top == 0 {
        return Err(Error::Config("n_top must be at least 1".into()));
    }
    let mut items = explain_all(features, model, c_pos, c_neg, cfg)?;
    let truncated = n_top > items.len();
    items.truncate(n_top);
    Ok(ExplanationSet { c_pos, c_neg, items, truncated })
}

/// Index of the largest probability, ties to the smallest index.
pub fn argmax(p: &[f64]) -> usize {
    p.iter().enumerate().fold(0, |b, (k, &v)| if v > p[b] { k } else { b })
}

/// Pixel box of one extent: `n` cells centred on cell `c` with the given
/// stride, so even extents straddle the cell centre and round down.
fn span(c: usize, n: usize, stride: usize, limit: usize) -> (usize, usize) {
    let lo = ((2 * c + 1) * stride) as isize - (n * stride) as isize;
    let lo = lo.div_euclid(2);
    let hi = lo + (n * stride) as isize;
    let lo = lo.clamp(0, limit as isize) as usize;
    let hi = hi.clamp(0, limit as isize) as usize;
    (lo, hi - lo)
}

/// Maps each tube element to the input rectangle covered by its shape box,
/// centred on the element's cell of its own scale and clipped to the frame.
pub fn restore_region(tube: &TubePath, model: &ExplainModel, geom: &Geometry) -> Vec<PixelBox> {
    tube.elements()
        .iter()
        .map(|e| {
            let shape = model.shapes[e.shape];
            let up = geom.upsample_factor(e.scale);
            let stride = geom.strides[e.scale];
            let (x, w) = span(e.i / up, shape.width(), stride, geom.input_w);
            let (y, h) = span(e.j / up, shape.height(), stride, geom.input_h);
            PixelBox { t: e.t, x, y, w, h }
        })
        .collect()
}

#[derive(Serialize)]
struct ItemJson<'a> {
    attribute: &'a str,
    score: f64,
    tube: &'a TubePath,
    boxes: &'a [PixelBox],
}

#[derive(Serialize)]
struct SetJson<'a> {
    c_pos: &'a str,
    c_neg: &'a str,
    truncated: bool,
    items: Vec<ItemJson<'a>>,
}

impl ExplanationSet {
    pub fn to_json(&self, model: &ExplainModel) -> Result<String> {
        let doc = SetJson {
            c_pos: &model.classes[self.c_pos],
            c_neg: &model.classes[self.c_neg],
            truncated: self.truncated,
            items: self
                .items
                .iter()
                .map(|e| ItemJson {
                    attribute: &model.attributes[e.attribute],
                    score: e.score,
                    tube: &e.tube,
                    boxes: &e.boxes,
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }
}
