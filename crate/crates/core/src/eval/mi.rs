//! Exhaustive check that the training objective lower-bounds the conditional
//! mutual information `MI(c, s | x, R)` of the model's joint over (class, attribute).
//!
//! The joint is `p(x) p(c|x) p(s|c,x) p(R)` with `p(s|c,x) = [s ∈ S(x)] / |S(x)|`
//! and uniform `p(R)`; the model's `p̂(c, s | x, R)` is a softmax of the scores
//! over all (class, attribute) pairs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{log_sigmoid, sigmoid};
use crate::rng::DetRng;

const MAX_TERMS: usize = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MIInstance {
    pub p_x: Vec<f64>,
    /// `p_c_given_x[x][c]`
    pub p_c_given_x: Vec<Vec<f64>>,
    /// Annotated attributes `S(x)`.
    pub attributes: Vec<Vec<usize>>,
    pub n_classes: usize,
    pub n_attributes: usize,
    pub n_regions: usize,
    /// `scores[x][c][s][r] = m_cs[R_r]` for sample `x`.
    pub scores: Vec<Vec<Vec<Vec<f64>>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MIReport {
    /// `E[log p̂(c,s) / (p̂(c) p̂(s))]` under the joint normalization.
    pub mi: f64,
    /// `E[log p̂(c | s)]`, the first lower bound.
    pub conditional: f64,
    /// `E[Σ_{c_neg} min_R log σ(Δm)]`, the loss-side bound.
    pub bound: f64,
    /// Same with `σ` in place of `log σ`, reported only.
    pub bound_sigma: f64,
    /// `E[min_R log p̂(c, s)]` with the joint normalization, reported only.
    pub bound_joint: f64,
    pub holds: bool,
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl MIInstance {
    pub fn validate(&self) -> Result<()> {
        let nx = self.p_x.len();
        let bad = |m: &str| Err(Error::Config(format!("MI instance: {m}")));
        if nx == 0 || self.n_classes < 2 || self.n_attributes == 0 || self.n_regions == 0 {
            return bad("empty support");
        }
        if nx * self.n_classes * self.n_attributes * self.n_regions * self.n_classes > MAX_TERMS {
            return Err(Error::TooLarge(format!("{nx} samples x {} classes x {} attributes x {} regions", self.n_classes, self.n_attributes, self.n_regions)));
        }
        if self.p_c_given_x.len() != nx || self.attributes.len() != nx || self.scores.len() != nx {
            return bad("per-sample tables disagree in length");
        }
        let norm = |p: &[f64]| p.iter().all(|&v| v >= 0.0 && v.is_finite()) && (p.iter().sum::<f64>() - 1.0).abs() < 1e-9;
        if !norm(&self.p_x) {
            return bad("p(x) is not a distribution");
        }
        for x in 0..nx {
            if self.p_c_given_x[x].len() != self.n_classes || !norm(&self.p_c_given_x[x]) {
                return bad("p(c|x) is not a distribution");
            }
            let a = &self.attributes[x];
            if a.is_empty() || a.iter().any(|&s| s >= self.n_attributes) {
                return bad("S(x) must be a non-empty set of known attributes");
            }
            let sc = &self.scores[x];
            if sc.len() != self.n_classes
                || sc.iter().any(|c| c.len() != self.n_attributes || c.iter().any(|s| s.len() != self.n_regions || s.iter().any(|v| !v.is_finite())))
            {
                return bad("score table has the wrong shape");
            }
        }
        Ok(())
    }
}

/// Evaluates both sides exhaustively and compares them.
pub fn mi_bound_check(inst: &MIInstance) -> Result<MIReport> {
    inst.validate()?;
    let (nc, ns, nr) = (inst.n_classes, inst.n_attributes, inst.n_regions);
    let (mut mi, mut conditional, mut bound, mut bound_sigma, mut bound_joint) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (x, &px) in inst.p_x.iter().enumerate() {
        let m = &inst.scores[x];
        // log-normalizers per region: joint, per attribute (over classes), per class (over attributes)
        let mut log_z = vec![0.0; nr];
        let mut log_zs = vec![vec![0.0; nr]; ns];
        let mut log_zc = vec![vec![0.0; nr]; nc];
        for r in 0..nr {
            log_z[r] = log_sum_exp((0..nc).flat_map(|c| (0..ns).map(move |s| m[c][s][r])));
            for s in 0..ns {
                log_zs[s][r] = log_sum_exp((0..nc).map(|c| m[c][s][r]));
            }
            for c in 0..nc {
                log_zc[c][r] = log_sum_exp((0..ns).map(|s| m[c][s][r]));
            }
        }
        let attrs = &inst.attributes[x];
        let ps = 1.0 / attrs.len() as f64;
        for c in 0..nc {
            let w = px * inst.p_c_given_x[x][c] * ps;
            if w == 0.0 {
                continue;
            }
            for &s in attrs {
                let mut mi_r = 0.0;
                let mut cond_r = 0.0;
                let mut joint_min = f64::INFINITY;
                for r in 0..nr {
                    let log_joint = m[c][s][r] - log_z[r];
                    // p̂(c) sums the joint over attributes, p̂(s) over classes
                    let log_pc = log_zc[c][r] - log_z[r];
                    let log_ps = log_zs[s][r] - log_z[r];
                    mi_r += log_joint - log_pc - log_ps;
                    cond_r += m[c][s][r] - log_zs[s][r];
                    joint_min = joint_min.min(log_joint);
                }
                mi += w * mi_r / nr as f64;
                conditional += w * cond_r / nr as f64;
                bound_joint += w * joint_min;
                for c_neg in (0..nc).filter(|&k| k != c) {
                    let deltas = (0..nr).map(|r| m[c][s][r] - m[c_neg][s][r]);
                    let dmin = deltas.fold(f64::INFINITY, f64::min);
                    // σ and log σ are increasing, so both minima sit at the smallest Δm
                    bound += w * log_sigmoid(dmin);
                    bound_sigma += w * sigmoid(dmin);
                }
            }
        }
    }
    Ok(MIReport { mi, conditional, bound, bound_sigma, bound_joint, holds: mi >= bound })
}

/// Random instance with every extent drawn from `1..=max` (classes from `2..=max`).
pub fn random_mi_instance(r: &mut DetRng, max_x: usize, max_c: usize, max_s: usize, max_r: usize, scale: f64) -> MIInstance {
    let nx = r.random_range(1..=max_x);
    let nc = r.random_range(2..=max_c.max(2));
    let ns = r.random_range(1..=max_s);
    let nr = r.random_range(1..=max_r);
    let simplex = |r: &mut DetRng, n: usize| {
        let v: Vec<f64> = (0..n).map(|_| r.random::<f64>() + 1e-3).collect();
        let z: f64 = v.iter().sum();
        v.into_iter().map(|a| a / z).collect::<Vec<f64>>()
    };
    let p_x = simplex(r, nx);
    let p_c_given_x = (0..nx).map(|_| simplex(r, nc)).collect();
    let attributes = (0..nx)
        .map(|_| {
            let mut a: Vec<usize> = (0..ns).filter(|_| r.random_bool(0.5)).collect();
            if a.is_empty() {
                a.push(r.random_range(0..ns));
            }
            a
        })
        .collect();
    let scores = (0..nx)
        .map(|_| (0..nc).map(|_| (0..ns).map(|_| (0..nr).map(|_| scale * (2.0 * r.random::<f64>() - 1.0)).collect()).collect()).collect())
        .collect();
    MIInstance { p_x, p_c_given_x, attributes, n_classes: nc, n_attributes: ns, n_regions: nr, scores }
}
