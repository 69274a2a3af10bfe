//! Counterfactual attribute/tube explanations over spatio-temporal features.
//!
//! Given a positive and a negative class, the explainer scores every
//! (attribute, tube) pair by how strongly the tube supports the positive class
//! over the negative one for that attribute, and finds the best tube for each
//! attribute exactly with a maximum-subpath dynamic program.
//!
//! - [`tensor`]: dense tensors and the CFT1 on-disk format
//! - [`subpath`]: max/min subpath DP, brute-force oracle, layerized form
//! - [`model`]: class/attribute kernels, shape masks, score volumes
//! - [`trainer`]: worst-tube loss, subgradients, SGD with momentum
//! - [`inference`]: ranked explanations and input-space boxes
//! - [`target`]: synthetic planted-tube videos and a frozen linear classifier
//! - [`eval`]: negative-class / concept accuracy, positive drop, MI bound check

pub mod error;
pub mod eval;
pub mod inference;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod selftest;
pub mod subpath;
pub mod target;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
