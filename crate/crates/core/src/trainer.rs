//! Worst-tube loss, its subgradient, and minibatch SGD with momentum.
//!
//! For a sample with attributes `S_x` and a positive class `c_pos`, the loss is
//! `(1/|S_x|) Σ_s Σ_{c_neg} -log σ(min_R Σ_R Δm)`. Because `Δm` is linear in
//! the difference kernel, the aggregate over a fixed tube equals
//! `Σ_scale Δw · pool(h, R)`, which is what the gradient is built from.

use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{delta_m, log_sigmoid, pooled_features, sigmoid, Composition, ExplainModel, FeaturePack, GradientSet, KernelSet};
use crate::rng;
use crate::subpath::{min_subpath, SubpathConfig, TubePath};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub subpath: SubpathConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            momentum: 0.9,
            weight_decay: 1e-3,
            batch_size: 30,
            epochs: 30,
            seed: 0,
            subpath: SubpathConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight decay must be non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// The argmin tube of one (negative class, attribute) term and its aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub c_neg: usize,
    pub attribute: usize,
    pub value: f64,
    pub path: TubePath,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleLoss {
    pub loss: f64,
    pub witnesses: Vec<Witness>,
}

fn check_query(model: &ExplainModel, attrs: &[usize], c_pos: usize) -> Result<()> {
    if attrs.is_empty() {
        return Err(Error::NoAttributes);
    }
    if model.n_classes() < 2 {
        return Err(Error::NoNegatives);
    }
    if c_pos >= model.n_classes() {
        return Err(Error::UnknownName(format!("class index {c_pos}")));
    }
    if let Some(&s) = attrs.iter().find(|&&s| s >= model.n_attributes()) {
        return Err(Error::UnknownName(format!("attribute index {s}")));
    }
    Ok(())
}

/// Loss of one sample plus the witness tube of every term, ordered by
/// attribute (as given) then negative class.
pub fn sample_loss(
    features: &FeaturePack,
    attrs: &[usize],
    c_pos: usize,
    model: &ExplainModel,
    cfg: &SubpathConfig,
) -> Result<SampleLoss> {
    check_query(model, attrs, c_pos)?;
    let mut loss = 0.0;
    let mut witnesses = Vec::with_capacity(attrs.len() * (model.n_classes() - 1));
    for &s in attrs {
        for c_neg in (0..model.n_classes()).filter(|&c| c != c_pos) {
            let dm = delta_m(features, model, c_pos, c_neg, s)?;
            let (value, path) = min_subpath(&dm, cfg)?;
            loss -= log_sigmoid(value);
            witnesses.push(Witness { c_neg, attribute: s, value, path });
        }
    }
    Ok(SampleLoss { loss: loss / attrs.len() as f64, witnesses })
}

/// Loss and subgradient with every witness tube held fixed.
pub fn loss_and_gradients(
    features: &FeaturePack,
    attrs: &[usize],
    c_pos: usize,
    model: &ExplainModel,
    cfg: &SubpathConfig,
) -> Result<(SampleLoss, GradientSet)> {
    let sl = sample_loss(features, attrs, c_pos, model, cfg)?;
    let mut grads = KernelSet::zeros_like(&model.kernels);
    let norm = attrs.len() as f64;
    for wit in &sl.witnesses {
        // dℓ/dv for ℓ = -log σ(v) / |S_x|
        let g = -(1.0 - sigmoid(wit.value)) / norm;
        let pooled = pooled_features(features, model, &wit.path)?;
        for (sc, pool) in pooled.iter().enumerate() {
            let sk = &model.kernels.scales[sc];
            let (wp, wn, ws) = (&sk.classes[c_pos].w, &sk.classes[wit.c_neg].w, &sk.attributes[wit.attribute].w);
            let gs = &mut grads.scales[sc];
            for (k, &p) in pool.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let gp = g * p;
                let (dc, ds) = match model.composition {
                    Composition::Decomposed => (ws[k] + 1.0, wp[k] - wn[k]),
                    Composition::Raw => (ws[k], wp[k] - wn[k]),
                };
                gs.classes[c_pos].w[k] += gp * dc;
                gs.classes[wit.c_neg].w[k] -= gp * dc;
                gs.attributes[wit.attribute].w[k] += gp * ds;
            }
        }
    }
    Ok((sl, grads))
}

pub fn gradients(
    features: &FeaturePack,
    attrs: &[usize],
    c_pos: usize,
    model: &ExplainModel,
    cfg: &SubpathConfig,
) -> Result<GradientSet> {
    Ok(loss_and_gradients(features, attrs, c_pos, model, cfg)?.1)
}

/// Momentum buffers, one per weight.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumState {
    pub velocity: KernelSet,
}

impl MomentumState {
    pub fn new(model: &ExplainModel) -> Self {
        Self { velocity: KernelSet::zeros_like(&model.kernels) }
    }
}

/// `v ← μ v + g + λ w`, then `w ← w − η v`.
pub fn sgd_step(model: &mut ExplainModel, grads: &GradientSet, cfg: &TrainConfig, state: &mut MomentumState) -> Result<()> {
    if !model.kernels.congruent(grads) || !model.kernels.congruent(&state.velocity) {
        return Err(Error::ShapeMismatch("gradient or momentum layout differs from the model".into()));
    }
    for ((w, &g), v) in model.kernels.values_mut().zip(grads.values()).zip(state.velocity.values_mut()) {
        *v = cfg.momentum * *v + g + cfg.weight_decay * *w;
        *w -= cfg.learning_rate * *v;
    }
    Ok(())
}

/// One training sample as seen by the explainer: frozen-target features, the
/// target's class posterior, and the annotated attribute indices.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub features: FeaturePack,
    pub probs: Vec<f64>,
    pub attributes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: ExplainModel,
    /// Mean sample loss of every epoch, accumulated while that epoch trains.
    pub loss_trace: Vec<f64>,
    pub skipped: usize,
}

/// Minibatch SGD over `samples`, drawing `c_pos ~ p(c|x)` once per visit.
pub fn train(mut model: ExplainModel, samples: &[TrainSample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let usable: Vec<usize> = (0..samples.len()).filter(|&k| !samples[k].attributes.is_empty()).collect();
    let skipped = samples.len() - usable.len();
    if skipped > 0 {
        eprintln!("warning: skipped {skipped} samples without attributes");
    }
    if usable.is_empty() {
        return Err(Error::NoAttributes);
    }
    let mut state = MomentumState::new(&model);
    let mut r = rng::seeded(cfg.seed);
    let mut order = usable;
    let mut loss_trace = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut r);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let queries: Vec<(usize, usize)> =
                batch.iter().map(|&k| (k, rng::categorical(&mut r, &samples[k].probs))).collect();
            let results = queries
                .par_iter()
                .map(|&(k, c_pos)| {
                    let s = &samples[k];
                    loss_and_gradients(&s.features, &s.attributes, c_pos, &model, &cfg.subpath)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut acc = KernelSet::zeros_like(&model.kernels);
            for (sl, g) in &results {
                epoch_loss += sl.loss;
                acc.axpy(1.0, g)?;
            }
            acc.scale(1.0 / batch.len() as f64);
            sgd_step(&mut model, &acc, cfg, &mut state)?;
        }
        loss_trace.push(epoch_loss / order.len() as f64);
    }
    Ok(TrainOutcome { model, loss_trace, skipped })
}

pub fn write_loss_csv<W: Write>(trace: &[f64], mut out: W) -> Result<()> {
    writeln!(out, "epoch,mean_loss")?;
    for (e, l) in trace.iter().enumerate() {
        writeln!(out, "{e},{l:.17e}")?;
    }
    Ok(())
}
