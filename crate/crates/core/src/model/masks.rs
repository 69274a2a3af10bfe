use serde::{Deserialize, Serialize};

/// Region shape in cells of its scale, `width x height`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ShapeKind {
    #[serde(rename = "2x2")]
    S2x2,
    #[serde(rename = "2x3")]
    S2x3,
    #[serde(rename = "3x2")]
    S3x2,
    #[serde(rename = "3x3")]
    S3x3,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 4] = [ShapeKind::S2x2, ShapeKind::S2x3, ShapeKind::S3x2, ShapeKind::S3x3];

    pub fn width(self) -> usize {
        match self {
            ShapeKind::S2x2 | ShapeKind::S2x3 => 2,
            ShapeKind::S3x2 | ShapeKind::S3x3 => 3,
        }
    }

    pub fn height(self) -> usize {
        match self {
            ShapeKind::S2x2 | ShapeKind::S3x2 => 2,
            ShapeKind::S2x3 | ShapeKind::S3x3 => 3,
        }
    }

    pub fn mask(self) -> ShapeMask {
        ShapeMask::for_box(self.width(), self.height())
    }
}

/// Per-tap weights of a 3x3 kernel for one region shape.
///
/// `weights[dy][dx]`: rows follow the height axis (j), columns the width axis (i).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeMask {
    pub width: usize,
    pub height: usize,
    pub weights: [[f64; 3]; 3],
}

/// Length of `[c - 1/2, c + 1/2]` inside a box of `extent` cells centered at 0.
fn overlap(c: f64, extent: usize) -> f64 {
    let half = extent as f64 / 2.0;
    ((c + 0.5).min(half) - (c - 0.5).max(-half)).max(0.0)
}

impl ShapeMask {
    /// Overlap area of a centered `width x height` box with each unit cell,
    /// normalized by the box area.
    pub fn for_box(width: usize, height: usize) -> Self {
        let area = (width * height) as f64;
        let mut weights = [[0.0; 3]; 3];
        for (dy, row) in weights.iter_mut().enumerate() {
            for (dx, cell) in row.iter_mut().enumerate() {
                *cell = overlap(dx as f64 - 1.0, width) * overlap(dy as f64 - 1.0, height) / area;
            }
        }
        Self { width, height, weights }
    }

    /// Weight of kernel tap `(di, dj)`, both in `0..3`, `di` along width.
    #[inline]
    pub fn at(&self, di: usize, dj: usize) -> f64 {
        self.weights[dj][di]
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().flatten().sum()
    }
}

/// The four masks in shape-index order: 2x2, 2x3, 3x2, 3x3.
pub fn shape_masks() -> [ShapeMask; 4] {
    ShapeKind::ALL.map(ShapeKind::mask)
}
