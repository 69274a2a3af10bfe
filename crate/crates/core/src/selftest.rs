//! Randomized self-checks: the DP against the brute-force oracle and the
//! layerized form, sign duality, analytic subgradients against central
//! differences, the MI bound, and a runtime scaling table.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::eval::{mi_bound_check, random_mi_instance, MIInstance};
use crate::model::{Composition, ExplainModel, FeatureMap, FeaturePack, ShapeKind};
use crate::rng::{self, DetRng};
use crate::subpath::{brute_force_subpath, layerized_max_score, max_subpath, min_subpath, ScoreVolume, SubpathConfig};
use crate::tensor::Geometry;
use crate::trainer::{loss_and_gradients, sample_loss};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    /// Largest observed error, where the suite measures one.
    pub max_error: f64,
    pub seconds: f64,
    pub first_failure: Option<String>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.cases > 0
    }

    fn new(name: &str) -> Self {
        Self { name: name.into(), cases: 0, failures: 0, max_error: 0.0, seconds: 0.0, first_failure: None }
    }

    fn fail(&mut self, msg: String) {
        self.failures += 1;
        if self.first_failure.is_none() {
            self.first_failure = Some(msg);
        }
    }
}

/// Volume with integer entries in `[-5, 5]` and extents drawn up to `max`.
pub fn random_int_volume(r: &mut DetRng, max: [usize; 5]) -> ScoreVolume {
    let dims = max.map(|m| r.random_range(1..=m));
    let data = (0..dims.iter().product()).map(|_| r.random_range(-5i32..=5) as f64).collect();
    ScoreVolume::new_5d(dims, data).expect("dims are positive")
}

pub fn random_real_volume(r: &mut DetRng, max: [usize; 5]) -> ScoreVolume {
    let dims = max.map(|m| r.random_range(1..=m));
    let data = (0..dims.iter().product()).map(|_| rng::normal(r)).collect();
    ScoreVolume::new_5d(dims, data).expect("dims are positive")
}

fn random_radii(r: &mut DetRng) -> SubpathConfig {
    SubpathConfig { k_move: r.random_range(0..=1), r_scale: r.random_range(0..=1), r_shape: r.random_range(0..=1) }
}

/// DP against exhaustive enumeration: score and canonical path must agree.
pub fn oracle_suite(n: usize, seed: u64) -> Result<SuiteReport> {
    let start = Instant::now();
    let mut rep = SuiteReport::new("oracle");
    let mut r = rng::seeded(seed);
    for case in 0..n {
        let m = random_int_volume(&mut r, [2, 2, 3, 3, 4]);
        let cfg = random_radii(&mut r);
        let dp = max_subpath(&m, &cfg)?;
        let bf = brute_force_subpath(&m, &cfg)?;
        rep.cases += 1;
        if dp != bf {
            rep.fail(format!("case {case} dims {:?} {cfg:?}: dp {:?} vs brute {:?}", m.dims(), dp, bf));
        }
    }
    rep.seconds = start.elapsed().as_secs_f64();
    Ok(rep)
}

/// Layerized score against the DP on 3D volumes: exact for integers, within
/// `1e-12` relative for reals. Each case checks one volume of each kind.
pub fn layerized_suite(n: usize, seed: u64) -> Result<SuiteReport> {
    let start = Instant::now();
    let mut rep = SuiteReport::new("layerized");
    let mut r = rng::seeded(seed);
    for case in 0..n {
        let cfg = SubpathConfig::spatial(r.random_range(0..=2));
        let m = random_int_volume(&mut r, [1, 1, 6, 6, 8]);
        let (dp, _) = max_subpath(&m, &cfg)?;
        let lz = layerized_max_score(&m, &cfg)?;
        rep.cases += 1;
        if dp != lz {
            rep.fail(format!("integer case {case} dims {:?} k={}: dp {dp} vs layerized {lz}", m.dims(), cfg.k_move));
        }
        let m = random_real_volume(&mut r, [1, 1, 6, 6, 8]);
        let (dp, _) = max_subpath(&m, &cfg)?;
        let lz = layerized_max_score(&m, &cfg)?;
        let rel = (dp - lz).abs() / dp.abs().max(f64::MIN_POSITIVE);
        rep.max_error = rep.max_error.max(rel);
        if rel > 1e-12 {
            rep.fail(format!("real case {case} dims {:?}: dp {dp} vs layerized {lz}", m.dims()));
        }
    }
    rep.seconds = start.elapsed().as_secs_f64();
    Ok(rep)
}

/// `min_subpath(M) = -max_subpath(-M)`, score and path.
pub fn duality_suite(n: usize, seed: u64) -> Result<SuiteReport> {
    let start = Instant::now();
    let mut rep = SuiteReport::new("duality");
    let mut r = rng::seeded(seed);
    for case in 0..n {
        let m = if case % 2 == 0 { random_int_volume(&mut r, [2, 2, 4, 4, 6]) } else { random_real_volume(&mut r, [2, 2, 4, 4, 6]) };
        let cfg = random_radii(&mut r);
        let (lo, lo_path) = min_subpath(&m, &cfg)?;
        let (hi, hi_path) = max_subpath(&m.neg(), &cfg)?;
        rep.cases += 1;
        if lo != -hi || lo_path != hi_path {
            rep.fail(format!("case {case}: min {lo} vs -max(-M) {}", -hi));
        }
    }
    rep.seconds = start.elapsed().as_secs_f64();
    Ok(rep)
}

/// A small random explainer with features and one query.
#[derive(Debug, Clone)]
pub struct GradInstance {
    pub model: ExplainModel,
    pub features: FeaturePack,
    pub attrs: Vec<usize>,
    pub c_pos: usize,
    pub subpath: SubpathConfig,
}

pub fn random_grad_instance(r: &mut DetRng, composition: Composition) -> Result<GradInstance> {
    let n_classes = r.random_range(2..=3);
    let n_attributes = r.random_range(1..=3);
    let d = r.random_range(1..=3);
    let frames = r.random_range(2..=4);
    let geometry = Geometry::new(8, 8, frames, vec![2, 4])?;
    let shapes = ShapeKind::ALL.iter().copied().filter(|_| r.random_bool(0.5)).collect::<Vec<_>>();
    let shapes = if shapes.is_empty() { vec![ShapeKind::S3x3] } else { shapes };
    let names = |p: &str, n: usize| (0..n).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
    let mut model = ExplainModel::init(
        names("c", n_classes),
        names("s", n_attributes),
        geometry.clone(),
        &[d, d],
        shapes,
        composition,
        r.random(),
    )?;
    // init is small; spread the weights so Δm is not dominated by one sign
    model.kernels.values_mut().for_each(|v| *v *= 3.0);
    let scales = (0..geometry.n_scales())
        .map(|s| {
            let (w, h) = geometry.grid(s);
            FeatureMap::new(w, h, frames, d, (0..w * h * frames * d).map(|_| rng::normal(r)).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let features = FeaturePack::new(geometry, scales)?;
    let mut attrs: Vec<usize> = (0..n_attributes).filter(|_| r.random_bool(0.6)).collect();
    if attrs.is_empty() {
        attrs.push(r.random_range(0..n_attributes));
    }
    let subpath = SubpathConfig { k_move: 1, r_scale: r.random_range(0..=1), r_shape: r.random_range(0..=1) };
    Ok(GradInstance { model, features, attrs, c_pos: r.random_range(0..n_classes), subpath })
}

/// Largest relative error between the analytic subgradient and central
/// differences, or `None` if some witness tube changes under the perturbation.
pub fn grad_check(inst: &GradInstance, step: f64) -> Result<Option<f64>> {
    let (base, grads) = loss_and_gradients(&inst.features, &inst.attrs, inst.c_pos, &inst.model, &inst.subpath)?;
    let paths: Vec<_> = base.witnesses.iter().map(|w| &w.path).collect();
    let mut model = inst.model.clone();
    let mut worst: f64 = 0.0;
    for k in 0..model.kernels.len() {
        let w0 = model.kernels.get(k);
        let mut eval_at = |v: f64| -> Result<Option<f64>> {
            model.kernels.set(k, v);
            let sl = sample_loss(&inst.features, &inst.attrs, inst.c_pos, &model, &inst.subpath)?;
            let stable = sl.witnesses.iter().map(|w| &w.path).eq(paths.iter().copied());
            Ok(stable.then_some(sl.loss))
        };
        let (Some(up), Some(down)) = (eval_at(w0 + step)?, eval_at(w0 - step)?) else {
            return Ok(None);
        };
        model.kernels.set(k, w0);
        let numeric = (up - down) / (2.0 * step);
        let analytic = grads.get(k);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    Ok(Some(worst))
}

/// `n` gradient checks on instances whose witnesses are stable, alternating
/// the two compositions. Unstable instances are redrawn and not counted.
pub fn gradcheck_suite(n: usize, seed: u64) -> Result<SuiteReport> {
    let start = Instant::now();
    let mut rep = SuiteReport::new("gradcheck");
    let mut r = rng::seeded(seed);
    let mut redrawn = 0usize;
    while rep.cases < n {
        let composition = if rep.cases % 2 == 0 { Composition::Decomposed } else { Composition::Raw };
        let inst = random_grad_instance(&mut r, composition)?;
        match grad_check(&inst, 1e-5)? {
            None => {
                redrawn += 1;
                if redrawn > 100 * n {
                    rep.fail("witness paths never stable".into());
                    break;
                }
            }
            Some(err) => {
                rep.cases += 1;
                rep.max_error = rep.max_error.max(err);
                if err >= 1e-4 {
                    rep.fail(format!("instance {}: relative error {err:e}", rep.cases - 1));
                }
            }
        }
    }
    rep.seconds = start.elapsed().as_secs_f64();
    Ok(rep)
}

/// The all-zero instance: two classes, one attribute, one region.
pub fn zero_mi_instance() -> MIInstance {
    MIInstance {
        p_x: vec![1.0],
        p_c_given_x: vec![vec![0.5, 0.5]],
        attributes: vec![vec![0]],
        n_classes: 2,
        n_attributes: 1,
        n_regions: 1,
        scores: vec![vec![vec![vec![0.0]], vec![vec![0.0]]]],
    }
}

/// `n` random instances plus the zero instance.
pub fn mi_suite(n: usize, seed: u64) -> Result<SuiteReport> {
    let start = Instant::now();
    let mut rep = SuiteReport::new("mi-bound");
    let mut r = rng::seeded(seed);
    let zero = mi_bound_check(&zero_mi_instance())?;
    rep.cases += 1;
    if !(zero.holds && zero.mi == 0.0 && (zero.bound + std::f64::consts::LN_2).abs() < 1e-12) {
        rep.fail(format!("zero instance: {zero:?}"));
    }
    for case in 0..n {
        let inst = random_mi_instance(&mut r, 3, 3, 2, 4, 4.0);
        let out = mi_bound_check(&inst)?;
        rep.cases += 1;
        if !out.holds {
            rep.fail(format!("instance {case}: MI {} < bound {}", out.mi, out.bound));
        }
    }
    rep.seconds = start.elapsed().as_secs_f64();
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub frames: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub width: usize,
    pub height: usize,
    pub rows: Vec<BenchRow>,
    /// Slope of `log(seconds)` against `log(frames)`.
    pub loglog_slope: f64,
    /// Per-frame cost at the longest volume over that at the shortest; 1 for
    /// exactly linear scaling.
    pub superlinear_ratio: f64,
}

impl BenchReport {
    pub fn linear(&self) -> bool {
        self.superlinear_ratio < 1.5
    }
}

/// Times `max_subpath` on random `width × height × T` volumes, best of `reps`.
pub fn bench(frames: &[usize], width: usize, height: usize, reps: usize, seed: u64) -> Result<BenchReport> {
    let mut r = rng::seeded(seed);
    let cfg = SubpathConfig::default();
    let mut rows = Vec::with_capacity(frames.len());
    for &t in frames {
        let data = (0..width * height * t).map(|_| rng::normal(&mut r)).collect();
        let m = ScoreVolume::new_3d(width, height, t, data)?;
        let mut best = f64::INFINITY;
        for _ in 0..reps.max(1) {
            let start = Instant::now();
            std::hint::black_box(max_subpath(&m, &cfg)?);
            best = best.min(start.elapsed().as_secs_f64());
        }
        rows.push(BenchRow { frames: t, seconds: best });
    }
    let n = rows.len() as f64;
    let xs: Vec<f64> = rows.iter().map(|b| (b.frames as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|b| b.seconds.max(1e-12).ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let loglog_slope = if sxx > 0.0 { sxy / sxx } else { 1.0 };
    let per_frame = |b: &BenchRow| b.seconds / b.frames as f64;
    let superlinear_ratio = match (rows.first(), rows.last()) {
        (Some(a), Some(b)) => per_frame(b) / per_frame(a),
        _ => 1.0,
    };
    Ok(BenchReport { width, height, rows, loglog_slope, superlinear_ratio })
}
