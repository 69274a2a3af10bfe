use crate::error::{Error, Result};
use crate::tensor::{Geometry, Tensor};

/// One scale of mid-level features, `W_s x H_s x T x d`, channel fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub w: usize,
    pub h: usize,
    pub t: usize,
    pub d: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(w: usize, h: usize, t: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if w * h * t * d != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "feature map {w}x{h}x{t}x{d} needs {} scalars, got {}",
                w * h * t * d,
                data.len()
            )));
        }
        Ok(Self { w, h, t, d, data })
    }

    pub fn zeros(w: usize, h: usize, t: usize, d: usize) -> Self {
        Self { w, h, t, d, data: vec![0.0; w * h * t * d] }
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match *t.dims() {
            [w, h, nt, d] => Self::new(w, h, nt, d, t.to_f64_vec()),
            _ => Err(Error::ShapeMismatch(format!("feature tensor must be 4D, got {:?}", t.dims()))),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_f64(vec![self.w, self.h, self.t, self.d], self.data.clone())
            .expect("feature map invariants imply a valid tensor")
    }

    #[inline]
    pub fn offset(&self, i: usize, j: usize, t: usize) -> usize {
        ((i * self.h + j) * self.t + t) * self.d
    }

    /// Channel vector at a cell, or `None` outside the grid (zero padding).
    #[inline]
    pub fn at(&self, i: isize, j: isize, t: usize) -> Option<&[f64]> {
        if i < 0 || j < 0 || i as usize >= self.w || j as usize >= self.h {
            return None;
        }
        let o = self.offset(i as usize, j as usize, t);
        Some(&self.data[o..o + self.d])
    }
}

/// Features of one sample at every scale, finest scale first.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePack {
    pub geometry: Geometry,
    pub scales: Vec<FeatureMap>,
}

impl FeaturePack {
    pub fn new(geometry: Geometry, scales: Vec<FeatureMap>) -> Result<Self> {
        if scales.len() != geometry.n_scales() {
            return Err(Error::ShapeMismatch(format!(
                "{} feature maps for {} scales",
                scales.len(),
                geometry.n_scales()
            )));
        }
        for (s, f) in scales.iter().enumerate() {
            if (f.w, f.h) != geometry.grid(s) || f.t != geometry.frames {
                return Err(Error::ShapeMismatch(format!(
                    "scale {s} is {}x{}x{}, geometry expects {:?}x{}",
                    f.w,
                    f.h,
                    f.t,
                    geometry.grid(s),
                    geometry.frames
                )));
            }
        }
        Ok(Self { geometry, scales })
    }

    pub fn frames(&self) -> usize {
        self.geometry.frames
    }

    pub fn channels(&self) -> Vec<usize> {
        self.scales.iter().map(|f| f.d).collect()
    }
}
