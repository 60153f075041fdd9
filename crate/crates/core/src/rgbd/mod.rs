//! RGBD geometry: pinhole projection, patches and their image encodings,
//! point subsampling, normals, and handcrafted dense descriptors.

mod camera;
mod features;
pub mod io;
mod patch;
mod sampling;

pub use camera::{project, Intrinsics};
pub use features::{
    extract_toy_features, geometry_histograms, sampled_cloud, FeatureCloud, FeatureParams, COLOR_DIM, DESCRIPTOR_DIM,
};
pub use patch::{PixelBox, RgbdPatch};
pub use sampling::{estimate_normals, farthest_point_sample, normals_near};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RgbdError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("invalid sample count {n} for {available} points")]
    InvalidN { n: usize, available: usize },
    #[error("need more than k = {k} points for normals, have {points}")]
    TooFewPoints { points: usize, k: usize },
    #[error("patch mask is empty")]
    EmptyMask,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("depth must be finite and non-negative")]
    InvalidDepth,
    #[error("missing file {0}")]
    MissingFile(String),
    #[error("image error: {0}")]
    Image(String),
}
