//! Maximum and minimum subpath search over 3D and 5D score volumes.

mod brute;
mod dp;
mod layerized;
mod volume;

pub use brute::{brute_force_subpath, count_tubes, MAX_CANDIDATES};
pub use dp::{kadane_1d, max_subpath, min_subpath, path_indicator};
pub use layerized::{layerized_max_score, max_pool2d, relu};
pub use volume::{PathElement, ScoreVolume, SubpathConfig, TubePath};
