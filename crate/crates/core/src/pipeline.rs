//! End-to-end run: generate, fit the target, train the explainer, evaluate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::eval::{evaluate, EvalConfig, MetricReport};
use crate::model::{Composition, ExplainModel, FeaturePack, ShapeKind};
use crate::rng;
use crate::target::{accuracy, train_target, Dataset, SampleMeta, SynthConfig, TargetClassifier, TargetConfig};
use crate::trainer::{train, TrainConfig, TrainSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainConfig {
    pub shapes: Vec<ShapeKind>,
    pub composition: Composition,
    pub init_seed: u64,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self { shapes: ShapeKind::ALL.to_vec(), composition: Composition::Decomposed, init_seed: 0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub synth: SynthConfig,
    pub target: TargetConfig,
    pub explain: ExplainConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl PipelineConfig {
    /// Derives every stage's seed from one root seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.synth.seed = seed;
        self.target.seed = rng::derive(seed, 1);
        self.explain.init_seed = rng::derive(seed, 2);
        self.train.seed = rng::derive(seed, 3);
        self.eval.seed = rng::derive(seed, 4);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetReport {
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

/// `h(x)` of every sample in `metas`, in order.
pub fn featurize(target: &TargetClassifier, dataset: &Dataset, metas: &[SampleMeta]) -> Result<Vec<FeaturePack>> {
    metas.par_iter().map(|m| target.features(&dataset.video(m)?)).collect()
}

fn labels(metas: &[SampleMeta]) -> Vec<usize> {
    metas.iter().map(|m| m.class).collect()
}

/// Fits the target head on the training split. Returns the training features
/// too, since the explainer reuses them.
pub fn fit_target(dataset: &Dataset, cfg: &TargetConfig) -> Result<(TargetClassifier, TargetReport, Vec<FeaturePack>)> {
    let untrained = TargetClassifier::new(&dataset.config, rng::derive(cfg.seed, 0))?;
    let train_feats = featurize(&untrained, dataset, &dataset.train)?;
    let sgd = TargetConfig { seed: rng::derive(cfg.seed, 1), ..cfg.clone() };
    let target = train_target(untrained, &train_feats, &labels(&dataset.train), &sgd)?;
    let report = target_report(&target, dataset, &train_feats)?;
    Ok((target, report, train_feats))
}

pub fn target_report(target: &TargetClassifier, dataset: &Dataset, train_feats: &[FeaturePack]) -> Result<TargetReport> {
    let test_feats = featurize(target, dataset, &dataset.test)?;
    Ok(TargetReport {
        train_accuracy: accuracy(target, train_feats, &labels(&dataset.train))?,
        test_accuracy: if dataset.test.is_empty() { 0.0 } else { accuracy(target, &test_feats, &labels(&dataset.test))? },
    })
}

pub fn train_samples(target: &TargetClassifier, metas: &[SampleMeta], features: Vec<FeaturePack>) -> Result<Vec<TrainSample>> {
    metas
        .iter()
        .zip(features)
        .map(|(m, f)| Ok(TrainSample { probs: target.probs_from_features(&f)?, features: f, attributes: m.attributes.clone() }))
        .collect()
}

pub fn init_model(synth: &SynthConfig, cfg: &ExplainConfig) -> Result<ExplainModel> {
    let geometry = synth.geometry()?;
    let channels = vec![synth.feature_dim; geometry.n_scales()];
    ExplainModel::init(
        synth.class_names(),
        synth.attribute_names(),
        geometry,
        &channels,
        cfg.shapes.clone(),
        cfg.composition,
        cfg.init_seed,
    )
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub dataset: Dataset,
    pub target: TargetClassifier,
    pub target_report: TargetReport,
    pub target_hash_before: String,
    pub target_hash_after: String,
    pub model: ExplainModel,
    pub loss_trace: Vec<f64>,
    pub report: MetricReport,
}

pub fn run(cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let dataset = Dataset::generate(&cfg.synth)?;
    let (target, target_report, train_feats) = fit_target(&dataset, &cfg.target)?;
    let target_hash_before = target.param_hash();
    let samples = train_samples(&target, &dataset.train, train_feats)?;
    let init = init_model(&cfg.synth, &cfg.explain)?;
    let outcome = train(init, &samples, &cfg.train)?;
    let target_hash_after = target.param_hash();
    let report = evaluate(&target, &outcome.model, &dataset, &cfg.eval)?;
    Ok(PipelineOutput {
        dataset,
        target,
        target_report,
        target_hash_before,
        target_hash_after,
        model: outcome.model,
        loss_trace: outcome.loss_trace,
        report,
    })
}
