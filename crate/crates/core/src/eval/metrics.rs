//! Negative class accuracy, positive-drop ratio and concept accuracy, each with
//! its seeded baseline.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::iou::tube_iou;
use crate::inference::{argmax, explain_all, restore_region, Explanation, PixelBox};
use crate::model::ExplainModel;
use crate::rng::{self, DetRng};
use crate::subpath::{PathElement, SubpathConfig, TubePath};
use crate::target::{mask_apply, Dataset, SampleMeta, TargetClassifier};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub top_k: Vec<usize>,
    /// Rank `c_pos` together with the negatives when scoring negative class accuracy.
    pub include_positive: bool,
    /// How many of the most probable negatives the headline accuracy averages over.
    pub headline_negatives: usize,
    pub seed: u64,
    pub subpath: SubpathConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { top_k: vec![1, 3, 5], include_positive: false, headline_negatives: 1, seed: 0, subpath: SubpathConfig::default() }
    }
}

/// Effect of masking one region of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskOutcome {
    /// Position of `c_neg` when candidates are sorted by probability gain.
    pub rank: usize,
    pub positive_drop: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptOutcome {
    /// Success at each configured top-k.
    pub explainer: Vec<bool>,
    pub random_attribute: Vec<bool>,
    pub random_tube: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub sample: String,
    pub c_pos: usize,
    pub c_neg: usize,
    /// 0 for the most probable negative.
    pub negative_order: usize,
    pub attribute: usize,
    pub score: f64,
    pub explainer: MaskOutcome,
    pub random_tube: MaskOutcome,
    pub concept: Option<ConceptOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEntry {
    pub metric: String,
    pub n_or_k: usize,
    pub value: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub samples: usize,
    pub queries: usize,
    pub correctly_classified: usize,
    pub concept_excluded: usize,
    pub metrics: Vec<MetricEntry>,
    pub records: Vec<QueryRecord>,
}

impl MetricReport {
    pub fn get(&self, metric: &str, n_or_k: usize) -> Option<f64> {
        self.metrics.iter().find(|m| m.metric == metric && m.n_or_k == n_or_k).map(|m| m.value)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "metric,n_or_k,value,count")?;
        for m in &self.metrics {
            writeln!(out, "{},{},{:.17e},{}", m.metric, m.n_or_k, m.value, m.count)?;
        }
        Ok(())
    }
}

/// Position of `c_neg` after sorting candidate classes by `p_masked - p`
/// (descending, ties by class index).
pub fn negative_rank(p: &[f64], p_masked: &[f64], c_pos: usize, c_neg: usize, include_positive: bool) -> usize {
    let mut cand: Vec<usize> = (0..p.len()).filter(|&c| include_positive || c != c_pos).collect();
    let gain = |c: usize| p_masked[c] - p[c];
    cand.sort_by(|&a, &b| gain(b).total_cmp(&gain(a)).then(a.cmp(&b)));
    cand.iter().position(|&c| c == c_neg).expect("c_neg is a candidate")
}

/// Annotated attribute whose boxes overlap `boxes` most (ties to the smallest
/// index), or `None` when nothing overlaps.
pub fn best_matching_attribute(boxes: &[PixelBox], meta: &SampleMeta) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &s in &meta.attributes {
        let gt: Vec<PixelBox> = meta.boxes_of(s).map(|b| PixelBox { t: b.t, x: b.x, y: b.y, w: b.w, h: b.h }).collect();
        if gt.is_empty() {
            continue;
        }
        let iou = tube_iou(boxes, &gt);
        if iou > 0.0 && best.is_none_or(|(_, v)| iou > v) {
            best = Some((s, iou));
        }
    }
    best.map(|(s, _)| s)
}

/// True if any of the first `k` explanations names the attribute its tube matches.
pub fn concept_hit(items: &[Explanation], meta: &SampleMeta, k: usize) -> bool {
    items.iter().take(k).any(|e| best_matching_attribute(&e.boxes, meta) == Some(e.attribute))
}

/// A tube with the same scale, shape and frames as `like`, placed at a random
/// start cell and random-walking within `cfg.k_move`.
pub fn random_tube_like(r: &mut DetRng, like: &TubePath, w: usize, h: usize, cfg: &SubpathConfig) -> TubePath {
    let first = like.elements()[0];
    let k = cfg.k_move as i64;
    let (mut i, mut j) = (r.random_range(0..w) as i64, r.random_range(0..h) as i64);
    let mut out = Vec::with_capacity(like.len());
    for (n, e) in like.elements().iter().enumerate() {
        if n > 0 {
            i = (i + r.random_range(-k..=k)).clamp(0, w as i64 - 1);
            j = (j + r.random_range(-k..=k)).clamp(0, h as i64 - 1);
        }
        out.push(PathElement::new(first.scale, first.shape, i as usize, j as usize, e.t));
    }
    TubePath::new(out).expect("consecutive frames")
}

fn mask_outcome(
    target: &TargetClassifier,
    video: &crate::target::Video,
    p: &[f64],
    boxes: &[PixelBox],
    c_pos: usize,
    c_neg: usize,
    include_positive: bool,
) -> Result<MaskOutcome> {
    let (_, pm) = target.forward(&mask_apply(video, boxes))?;
    Ok(MaskOutcome { rank: negative_rank(p, &pm, c_pos, c_neg, include_positive), positive_drop: pm[c_pos] < p[c_pos] })
}

fn evaluate_sample(
    target: &TargetClassifier,
    model: &ExplainModel,
    dataset: &Dataset,
    meta: &SampleMeta,
    cfg: &EvalConfig,
) -> Result<(bool, bool, Vec<QueryRecord>)> {
    let video = dataset.video(meta)?;
    let (h, p) = target.forward(&video)?;
    let c_pos = argmax(&p);
    let correct = c_pos == meta.class;
    let has_boxes = meta.attributes.iter().any(|&s| meta.boxes_of(s).next().is_some());
    let mut negatives: Vec<usize> = (0..p.len()).filter(|&c| c != c_pos).collect();
    negatives.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
    let (fw, fh) = model.geometry.finest_grid();
    let mut records = Vec::with_capacity(negatives.len());
    for (order, &c_neg) in negatives.iter().enumerate() {
        let items = explain_all(&h, model, c_pos, c_neg, &cfg.subpath)?;
        let top = &items[0];
        let mut r = rng::seeded(rng::derive(cfg.seed, ((meta.index as u64) << 16) | c_neg as u64));
        let rt = random_tube_like(&mut r, &top.tube, fw, fh, &cfg.subpath);
        let rt_boxes = restore_region(&rt, model, &model.geometry);
        let explainer = mask_outcome(target, &video, &p, &top.boxes, c_pos, c_neg, cfg.include_positive)?;
        let random_tube = mask_outcome(target, &video, &p, &rt_boxes, c_pos, c_neg, cfg.include_positive)?;
        let concept = (correct && has_boxes).then(|| {
            let kmax = cfg.top_k.iter().copied().max().unwrap_or(1).min(items.len());
            let rand_attr: Vec<usize> =
                (0..kmax).map(|_| meta.attributes[r.random_range(0..meta.attributes.len())]).collect();
            let rand_items: Vec<Explanation> = items[..kmax]
                .iter()
                .map(|e| {
                    let tube = random_tube_like(&mut r, &e.tube, fw, fh, &cfg.subpath);
                    let boxes = restore_region(&tube, model, &model.geometry);
                    Explanation { attribute: r.random_range(0..model.n_attributes()), score: 0.0, tube, boxes }
                })
                .collect();
            let ra_hit = |k: usize| {
                items[..k.min(kmax)]
                    .iter()
                    .zip(&rand_attr)
                    .any(|(e, &a)| best_matching_attribute(&e.boxes, meta) == Some(a))
            };
            ConceptOutcome {
                explainer: cfg.top_k.iter().map(|&k| concept_hit(&items, meta, k)).collect(),
                random_attribute: cfg.top_k.iter().map(|&k| ra_hit(k)).collect(),
                random_tube: cfg.top_k.iter().map(|&k| concept_hit(&rand_items, meta, k)).collect(),
            }
        });
        records.push(QueryRecord {
            sample: meta.id.clone(),
            c_pos,
            c_neg,
            negative_order: order,
            attribute: top.attribute,
            score: top.score,
            explainer,
            random_tube,
            concept,
        });
    }
    Ok((correct, correct && !has_boxes, records))
}

fn mean(xs: impl Iterator<Item = f64>) -> (f64, usize) {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (if n == 0 { 0.0 } else { s / n as f64 }, n)
}

/// Per sample, the fraction of its `x` most probable negatives whose rank is
/// below `n`; averaged over samples.
pub fn negative_class_accuracy(records: &[QueryRecord], n: usize, x: usize, pick: impl Fn(&QueryRecord) -> &MaskOutcome) -> (f64, usize) {
    let mut per_sample: Vec<(f64, usize)> = Vec::new();
    let mut last: Option<&str> = None;
    for r in records.iter().filter(|r| r.negative_order < x) {
        let hit = (pick(r).rank < n) as u8 as f64;
        if last == Some(r.sample.as_str()) {
            let e = per_sample.last_mut().expect("started");
            e.0 += hit;
            e.1 += 1;
        } else {
            per_sample.push((hit, 1));
            last = Some(&r.sample);
        }
    }
    mean(per_sample.into_iter().map(|(h, c)| h / c as f64))
}

pub fn positive_drop_ratio(records: &[QueryRecord], pick: impl Fn(&QueryRecord) -> &MaskOutcome) -> (f64, usize) {
    mean(records.iter().map(|r| pick(r).positive_drop as u8 as f64))
}

pub fn concept_accuracy(records: &[QueryRecord], slot: usize, pick: impl Fn(&ConceptOutcome) -> &[bool]) -> (f64, usize) {
    mean(records.iter().filter_map(|r| r.concept.as_ref()).map(|c| pick(c)[slot] as u8 as f64))
}

/// Runs every test-set query and summarizes it.
pub fn evaluate(target: &TargetClassifier, model: &ExplainModel, dataset: &Dataset, cfg: &EvalConfig) -> Result<MetricReport> {
    if !target.trained {
        return Err(Error::Untrained);
    }
    if dataset.test.is_empty() {
        return Err(Error::EmptyInput);
    }
    if cfg.top_k.is_empty() || cfg.top_k.contains(&0) {
        return Err(Error::Config("top_k entries must be at least 1".into()));
    }
    let per = dataset
        .test
        .par_iter()
        .map(|m| evaluate_sample(target, model, dataset, m, cfg))
        .collect::<Result<Vec<_>>>()?;
    let correctly_classified = per.iter().filter(|p| p.0).count();
    let concept_excluded = per.iter().filter(|p| p.1).count();
    let records: Vec<QueryRecord> = per.into_iter().flat_map(|p| p.2).collect();
    let n_neg = target.n_classes() - 1;
    let n_cand = if cfg.include_positive { n_neg + 1 } else { n_neg };
    let mut metrics = Vec::new();
    let mut push = |metric: String, n_or_k: usize, (value, count): (f64, usize)| {
        metrics.push(MetricEntry { metric, n_or_k, value, count })
    };
    for x in 1..=n_neg {
        for n in 1..=n_cand {
            push(format!("negative_class_accuracy/x{x}"), n, negative_class_accuracy(&records, n, x, |r| &r.explainer));
            push(
                format!("negative_class_accuracy_random_tube/x{x}"),
                n,
                negative_class_accuracy(&records, n, x, |r| &r.random_tube),
            );
        }
    }
    push("positive_drop_ratio".into(), 0, positive_drop_ratio(&records, |r| &r.explainer));
    push("positive_drop_ratio_random_tube".into(), 0, positive_drop_ratio(&records, |r| &r.random_tube));
    for (slot, &k) in cfg.top_k.iter().enumerate() {
        push("concept_accuracy".into(), k, concept_accuracy(&records, slot, |c| &c.explainer));
        push("concept_accuracy_random_attribute".into(), k, concept_accuracy(&records, slot, |c| &c.random_attribute));
        push("concept_accuracy_random_tube".into(), k, concept_accuracy(&records, slot, |c| &c.random_tube));
    }
    Ok(MetricReport {
        samples: dataset.test.len(),
        queries: records.len(),
        correctly_classified,
        concept_excluded,
        metrics,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::target::GtBox;

    #[test]
    fn rank_excludes_positive_by_default() {
        let p = [0.7, 0.1, 0.1, 0.1];
        let pm = [0.4, 0.3, 0.2, 0.1];
        assert_eq!(negative_rank(&p, &pm, 0, 1, false), 0);
        assert_eq!(negative_rank(&p, &pm, 0, 3, false), 2);
        // c_pos lost probability, so it ranks last when included
        assert_eq!(negative_rank(&p, &pm, 0, 1, true), 0);
        // with all negatives admitted, n = |C| - 1 always succeeds
        for c in 1..4 {
            assert!(negative_rank(&p, &pm, 0, c, false) < 3);
        }
    }

    fn meta() -> SampleMeta {
        let b = |attribute, x| GtBox { attribute, t: 0, x, y: 0, w: 4, h: 4 };
        SampleMeta {
            id: "s".into(),
            split: crate::target::Split::Test,
            index: 0,
            class: 0,
            attributes: vec![1, 2],
            boxes: vec![b(1, 0), b(2, 8)],
        }
    }

    #[test]
    fn concept_matching() {
        let m = meta();
        let on_two = vec![PixelBox { t: 0, x: 8, y: 0, w: 4, h: 4 }];
        assert_eq!(best_matching_attribute(&on_two, &m), Some(2));
        let nowhere = vec![PixelBox { t: 3, x: 8, y: 0, w: 4, h: 4 }];
        assert_eq!(best_matching_attribute(&nowhere, &m), None);
        let tube = TubePath::new(vec![PathElement::new(0, 0, 0, 0, 0)]).unwrap();
        let e = |attribute| Explanation { attribute, score: 0.9, tube: tube.clone(), boxes: on_two.clone() };
        assert!(concept_hit(&[e(2)], &m, 1));
        assert!(!concept_hit(&[e(1)], &m, 1));
        assert!(concept_hit(&[e(1), e(2)], &m, 2));
    }

    #[test]
    fn random_tube_keeps_frames_and_moves_locally() {
        let like = TubePath::new((3..9).map(|t| PathElement::new(1, 2, 0, 0, t)).collect()).unwrap();
        let mut r = rng::seeded(4);
        let cfg = SubpathConfig::default();
        let t = random_tube_like(&mut r, &like, 8, 8, &cfg);
        assert_eq!((t.t0(), t.t1()), (3, 8));
        t.validate([2, 4, 8, 8, 16], &cfg).unwrap();
    }

    #[test]
    fn accuracy_aggregation() {
        let rec = |sample: &str, order, rank| QueryRecord {
            sample: sample.into(),
            c_pos: 0,
            c_neg: order + 1,
            negative_order: order,
            attribute: 0,
            score: 0.5,
            explainer: MaskOutcome { rank, positive_drop: rank == 0 },
            random_tube: MaskOutcome { rank: 2, positive_drop: false },
            concept: None,
        };
        let rs = vec![rec("a", 0, 0), rec("a", 1, 1), rec("b", 0, 2), rec("b", 1, 0)];
        assert_eq!(negative_class_accuracy(&rs, 1, 1, |r| &r.explainer), (0.5, 2));
        assert_eq!(negative_class_accuracy(&rs, 1, 2, |r| &r.explainer), (0.5, 2));
        assert_eq!(negative_class_accuracy(&rs, 2, 2, |r| &r.explainer), (0.75, 2));
        assert_eq!(positive_drop_ratio(&rs, |r| &r.explainer), (0.5, 4));
        assert_eq!(positive_drop_ratio(&rs, |r| &r.random_tube), (0.0, 4));
    }
}
