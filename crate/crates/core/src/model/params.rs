use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::masks::ShapeKind;
use crate::rng;
use crate::tensor::Geometry;

/// A 3x3 x d convolution kernel, laid out `(di, dj, channel)` with channel fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub d: usize,
    pub w: Vec<f64>,
}

impl Kernel {
    pub const TAPS: usize = 9;

    pub fn zeros(d: usize) -> Self {
        Self { d, w: vec![0.0; Self::TAPS * d] }
    }

    pub fn filled(d: usize, v: f64) -> Self {
        Self { d, w: vec![v; Self::TAPS * d] }
    }

    pub fn from_vec(d: usize, w: Vec<f64>) -> Result<Self> {
        if w.len() != Self::TAPS * d {
            return Err(Error::ShapeMismatch(format!("kernel with d={d} needs {} weights", 9 * d)));
        }
        Ok(Self { d, w })
    }

    #[inline]
    pub fn tap(&self, di: usize, dj: usize) -> &[f64] {
        let o = (di * 3 + dj) * self.d;
        &self.w[o..o + self.d]
    }

    pub fn sub(&self, other: &Kernel) -> Result<Kernel> {
        check_same(self, other)?;
        Ok(Kernel { d: self.d, w: self.w.iter().zip(&other.w).map(|(a, b)| a - b).collect() })
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.w.iter().zip(other).map(|(a, b)| a * b).sum()
    }
}

fn check_same(a: &Kernel, b: &Kernel) -> Result<()> {
    if a.d != b.d || a.w.len() != b.w.len() {
        return Err(Error::ShapeMismatch(format!("kernel d={} vs d={}", a.d, b.d)));
    }
    Ok(())
}

/// `w_c ⊙ w_s + w_c + w_s`, elementwise.
pub fn compose_weights(w_c: &Kernel, w_s: &Kernel) -> Result<Kernel> {
    check_same(w_c, w_s)?;
    let w = w_c.w.iter().zip(&w_s.w).map(|(c, s)| c * s + c + s).collect();
    Ok(Kernel { d: w_c.d, w })
}

/// Class and attribute kernels of one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleKernels {
    pub classes: Vec<Kernel>,
    pub attributes: Vec<Kernel>,
}

/// Every trainable kernel, grouped by scale. Also the layout of gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSet {
    pub scales: Vec<ScaleKernels>,
}

/// Gradients share the parameter layout.
pub type GradientSet = KernelSet;

impl KernelSet {
    pub fn zeros(n_classes: usize, n_attributes: usize, channels: &[usize]) -> Self {
        let scales = channels
            .iter()
            .map(|&d| ScaleKernels {
                classes: vec![Kernel::zeros(d); n_classes],
                attributes: vec![Kernel::zeros(d); n_attributes],
            })
            .collect();
        Self { scales }
    }

    pub fn zeros_like(other: &KernelSet) -> Self {
        let scales = other
            .scales
            .iter()
            .map(|s| ScaleKernels {
                classes: s.classes.iter().map(|k| Kernel::zeros(k.d)).collect(),
                attributes: s.attributes.iter().map(|k| Kernel::zeros(k.d)).collect(),
            })
            .collect();
        Self { scales }
    }

    fn kernels(&self) -> impl Iterator<Item = &Kernel> {
        self.scales.iter().flat_map(|s| s.classes.iter().chain(&s.attributes))
    }

    fn kernels_mut(&mut self) -> impl Iterator<Item = &mut Kernel> {
        self.scales.iter_mut().flat_map(|s| s.classes.iter_mut().chain(s.attributes.iter_mut()))
    }

    /// All weights in canonical order: scale, classes then attributes, kernel layout.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.kernels().flat_map(|k| k.w.iter())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.kernels_mut().flat_map(|k| k.w.iter_mut())
    }

    pub fn len(&self) -> usize {
        self.kernels().map(|k| k.w.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn congruent(&self, other: &KernelSet) -> bool {
        self.scales.len() == other.scales.len()
            && self.kernels().zip(other.kernels()).all(|(a, b)| a.d == b.d && a.w.len() == b.w.len())
            && self.kernels().count() == other.kernels().count()
    }

    pub fn get(&self, k: usize) -> f64 {
        *self.values().nth(k).expect("parameter index in range")
    }

    pub fn set(&mut self, k: usize, v: f64) {
        *self.values_mut().nth(k).expect("parameter index in range") = v;
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &KernelSet) -> Result<()> {
        if !self.congruent(other) {
            return Err(Error::ShapeMismatch("kernel sets are not congruent".into()));
        }
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: f64) {
        self.values_mut().for_each(|v| *v *= alpha);
    }

    pub fn max_abs(&self) -> f64 {
        self.values().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// How a (class, attribute) kernel is formed from the shared factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Composition {
    /// `w_c ⊙ w_s + w_c + w_s`
    Decomposed,
    /// `w_c ⊙ w_s`: bilinear, used to check linearity in each factor.
    Raw,
}

/// The explanation head: per-scale class and attribute kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplainModel {
    pub classes: Vec<String>,
    pub attributes: Vec<String>,
    pub geometry: Geometry,
    pub shapes: Vec<ShapeKind>,
    pub composition: Composition,
    pub kernels: KernelSet,
}

impl ExplainModel {
    /// Kernels drawn from `U(-b, b)` with `b = 1 / sqrt(9 d)`.
    pub fn init(
        classes: Vec<String>,
        attributes: Vec<String>,
        geometry: Geometry,
        channels: &[usize],
        shapes: Vec<ShapeKind>,
        composition: Composition,
        seed: u64,
    ) -> Result<Self> {
        let mut kernels = KernelSet::zeros(classes.len(), attributes.len(), channels);
        let mut r = rng::seeded(seed);
        for sk in &mut kernels.scales {
            for k in sk.classes.iter_mut().chain(sk.attributes.iter_mut()) {
                let b = 1.0 / ((Kernel::TAPS * k.d) as f64).sqrt();
                k.w.iter_mut().for_each(|v| *v = rng::uniform(&mut r, -b, b));
            }
        }
        let m = Self { classes, attributes, geometry, shapes, composition, kernels };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.len() < 2 {
            return Err(Error::NoNegatives);
        }
        if self.attributes.is_empty() {
            return Err(Error::NoAttributes);
        }
        if self.shapes.is_empty() {
            return Err(Error::Config("at least one shape is required".into()));
        }
        self.geometry.validate()?;
        if self.kernels.scales.len() != self.geometry.n_scales() {
            return Err(Error::ShapeMismatch("kernel scales do not match geometry".into()));
        }
        for sk in &self.kernels.scales {
            if sk.classes.len() != self.classes.len() || sk.attributes.len() != self.attributes.len() {
                return Err(Error::ShapeMismatch("kernel counts do not match classes/attributes".into()));
            }
            let d = sk.classes[0].d;
            if sk.classes.iter().chain(&sk.attributes).any(|k| k.d != d || k.w.len() != 9 * d) {
                return Err(Error::ShapeMismatch("kernels within a scale differ in channels".into()));
            }
        }
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn n_attributes(&self) -> usize {
        self.attributes.len()
    }

    pub fn channels(&self) -> Vec<usize> {
        self.kernels.scales.iter().map(|s| s.classes[0].d).collect()
    }

    pub fn class_index(&self, name: &str) -> Result<usize> {
        self.classes.iter().position(|c| c == name).ok_or_else(|| Error::UnknownName(name.into()))
    }

    pub fn attribute_index(&self, name: &str) -> Result<usize> {
        self.attributes.iter().position(|c| c == name).ok_or_else(|| Error::UnknownName(name.into()))
    }

    /// Effective kernel `w_cs` of one scale.
    pub fn pair_kernel(&self, scale: usize, c: usize, s: usize) -> Result<Kernel> {
        let sk = &self.kernels.scales[scale];
        let (wc, ws) = (&sk.classes[c], &sk.attributes[s]);
        match self.composition {
            Composition::Decomposed => compose_weights(wc, ws),
            Composition::Raw => {
                check_same(wc, ws)?;
                Ok(Kernel { d: wc.d, w: wc.w.iter().zip(&ws.w).map(|(a, b)| a * b).collect() })
            }
        }
    }

    /// `w_{c_pos s} - w_{c_neg s}` of one scale.
    pub fn delta_kernel(&self, scale: usize, c_pos: usize, c_neg: usize, s: usize) -> Result<Kernel> {
        self.pair_kernel(scale, c_pos, s)?.sub(&self.pair_kernel(scale, c_neg, s)?)
    }
}
