use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Score volume indexed (scale, shape, i, j, t), row-major with `t` fastest.
///
/// A 3D volume is stored with unit scale and shape extents and remembers its
/// original rank, so it round-trips through [`Tensor`] unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVolume {
    rank: usize,
    dims: [usize; 5],
    data: Vec<f64>,
}

impl ScoreVolume {
    pub fn new_3d(w: usize, h: usize, t: usize, data: Vec<f64>) -> Result<Self> {
        Self::build(3, [1, 1, w, h, t], data)
    }

    pub fn new_5d(dims: [usize; 5], data: Vec<f64>) -> Result<Self> {
        Self::build(5, dims, data)
    }

    pub fn zeros_5d(dims: [usize; 5]) -> Self {
        let n = dims.iter().product();
        Self { rank: 5, dims, data: vec![0.0; n] }
    }

    pub fn zeros_like(other: &ScoreVolume) -> Self {
        Self { rank: other.rank, dims: other.dims, data: vec![0.0; other.data.len()] }
    }

    fn build(rank: usize, dims: [usize; 5], data: Vec<f64>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::ShapeMismatch(format!("zero extent in {dims:?}")));
        }
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "volume {dims:?} needs {n} scalars, got {}",
                data.len()
            )));
        }
        Ok(Self { rank, dims, data })
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let d = t.dims();
        match d.len() {
            3 => Self::new_3d(d[0], d[1], d[2], t.to_f64_vec()),
            5 => Self::new_5d([d[0], d[1], d[2], d[3], d[4]], t.to_f64_vec()),
            other => Err(Error::Dimensionality(other)),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        let dims = if self.rank == 3 { self.dims[2..].to_vec() } else { self.dims.to_vec() };
        Tensor::from_f64(dims, self.data.clone()).expect("volume invariants imply a valid tensor")
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Always (n_scales, n_shapes, W, H, T); 3D volumes report (1, 1, W, H, T).
    pub fn dims(&self) -> [usize; 5] {
        self.dims
    }

    pub fn frames(&self) -> usize {
        self.dims[4]
    }

    /// Number of (scale, shape, i, j) cells per frame.
    pub fn cells_per_frame(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2] * self.dims[3]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn index(&self, scale: usize, shape: usize, i: usize, j: usize, t: usize) -> usize {
        let [_, nsh, w, h, nt] = self.dims;
        (((scale * nsh + shape) * w + i) * h + j) * nt + t
    }

    #[inline]
    pub fn get(&self, scale: usize, shape: usize, i: usize, j: usize, t: usize) -> f64 {
        self.data[self.index(scale, shape, i, j, t)]
    }

    #[inline]
    pub fn set(&mut self, scale: usize, shape: usize, i: usize, j: usize, t: usize, v: f64) {
        let k = self.index(scale, shape, i, j, t);
        self.data[k] = v;
    }

    /// Value of the flat cell `u` (lexicographic over scale, shape, i, j) at frame `t`.
    #[inline]
    pub(crate) fn cell(&self, u: usize, t: usize) -> f64 {
        self.data[u * self.dims[4] + t]
    }

    pub fn neg(&self) -> Self {
        self.map(|x| -x)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { rank: self.rank, dims: self.dims, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    /// Elementwise `self - other`.
    pub fn sub(&self, other: &ScoreVolume) -> Result<Self> {
        if self.dims != other.dims {
            return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", self.dims, other.dims)));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self { rank: self.rank, dims: self.dims, data })
    }

    pub fn dot(&self, other: &ScoreVolume) -> Result<f64> {
        if self.dims != other.dims {
            return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", self.dims, other.dims)));
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    /// The 3D (W, H, T) slice at a fixed scale and shape.
    pub fn slice(&self, scale: usize, shape: usize) -> ScoreVolume {
        let [_, _, w, h, t] = self.dims;
        let start = self.index(scale, shape, 0, 0, 0);
        let data = self.data[start..start + w * h * t].to_vec();
        Self { rank: 3, dims: [1, 1, w, h, t], data }
    }

    pub fn contains(&self, e: &PathElement) -> bool {
        let [ns, nsh, w, h, t] = self.dims;
        e.scale < ns && e.shape < nsh && e.i < w && e.j < h && e.t < t
    }
}

/// One region element of a tube: a cell at a given scale, shape and frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 5]", into = "[usize; 5]")]
pub struct PathElement {
    pub scale: usize,
    pub shape: usize,
    pub i: usize,
    pub j: usize,
    pub t: usize,
}

impl PathElement {
    pub fn new(scale: usize, shape: usize, i: usize, j: usize, t: usize) -> Self {
        Self { scale, shape, i, j, t }
    }

    /// Key used for lexicographic tie-breaking within one frame.
    pub fn cell_key(&self) -> (usize, usize, usize, usize) {
        (self.scale, self.shape, self.i, self.j)
    }
}

impl From<[usize; 5]> for PathElement {
    fn from(a: [usize; 5]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4])
    }
}

impl From<PathElement> for [usize; 5] {
    fn from(e: PathElement) -> Self {
        [e.scale, e.shape, e.i, e.j, e.t]
    }
}

/// Transition radii between consecutive frames of a tube.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubpathConfig {
    pub k_move: usize,
    pub r_scale: usize,
    pub r_shape: usize,
}

impl Default for SubpathConfig {
    fn default() -> Self {
        Self { k_move: 1, r_scale: 0, r_shape: 0 }
    }
}

impl SubpathConfig {
    pub fn spatial(k_move: usize) -> Self {
        Self { k_move, r_scale: 0, r_shape: 0 }
    }

    pub fn adjacent(&self, a: &PathElement, b: &PathElement) -> bool {
        a.scale.abs_diff(b.scale) <= self.r_scale
            && a.shape.abs_diff(b.shape) <= self.r_shape
            && a.i.abs_diff(b.i) <= self.k_move
            && a.j.abs_diff(b.j) <= self.k_move
    }
}

/// A temporally contiguous tube with one element per covered frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TubePath {
    elements: Vec<PathElement>,
}

impl TubePath {
    /// Builds a path after checking non-emptiness and frame contiguity.
    pub fn new(elements: Vec<PathElement>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidPath("empty path".into()));
        }
        for w in elements.windows(2) {
            if w[1].t != w[0].t + 1 {
                return Err(Error::InvalidPath(format!(
                    "frames {} -> {} are not consecutive",
                    w[0].t, w[1].t
                )));
            }
        }
        Ok(Self { elements })
    }

    pub fn elements(&self) -> &[PathElement] {
        &self.elements
    }

    pub fn t0(&self) -> usize {
        self.elements[0].t
    }

    pub fn t1(&self) -> usize {
        self.elements[self.elements.len() - 1].t
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Checks every tube invariant against a volume's extents and the radii.
    pub fn validate(&self, dims: [usize; 5], cfg: &SubpathConfig) -> Result<()> {
        let probe = ScoreVolume { rank: 5, dims, data: Vec::new() };
        for e in &self.elements {
            if !probe.contains(e) {
                return Err(Error::InvalidPath(format!("{e:?} outside {dims:?}")));
            }
        }
        for w in self.elements.windows(2) {
            if w[1].t != w[0].t + 1 {
                return Err(Error::InvalidPath("frames not consecutive".into()));
            }
            if !cfg.adjacent(&w[0], &w[1]) {
                return Err(Error::InvalidPath(format!("{:?} -> {:?} exceeds radii", w[0], w[1])));
            }
        }
        Ok(())
    }

    /// Sum of the volume over the path's elements, in path order.
    pub fn sum(&self, m: &ScoreVolume) -> Result<f64> {
        let mut acc = 0.0;
        for e in &self.elements {
            if !m.contains(e) {
                return Err(Error::InvalidPath(format!("{e:?} outside {:?}", m.dims())));
            }
            acc += m.get(e.scale, e.shape, e.i, e.j, e.t);
        }
        Ok(acc)
    }
}
