//! The explanation head: class/attribute kernels, shape masks and score volumes.

mod features;
mod io;
mod masks;
mod params;
mod scoring;

pub use features::{FeatureMap, FeaturePack};
pub use io::{ModelManifest, MANIFEST};
pub use masks::{shape_masks, ShapeKind, ShapeMask};
pub use params::{compose_weights, Composition, ExplainModel, GradientSet, Kernel, KernelSet, ScaleKernels};
pub use scoring::{
    aggregate, conv_masked, counterfactuality, delta_m, log_sigmoid, pooled_features, score_maps, sigmoid,
    volume_for_kernels,
};
