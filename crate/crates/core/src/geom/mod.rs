//! Rigid-body geometry: poses and quaternions, closed-form and robust
//! point-set alignment, ICP refinement, rotation-space sampling.

mod cloud;
mod icp;
mod pose;
mod ransac;
mod sampling;
mod umeyama;

pub use cloud::{chain_poses, transform_points, CorrespondenceSet, PointCloud};
pub use icp::{icp_refine, icp_refine_point_to_plane, IcpParams, IcpResult, Oriented};
pub use pose::{quat_distance, Pose, Quaternion};
pub use ransac::{ransac_align, AlignmentResult, RansacParams};
pub use sampling::farthest_rotation_sample;
pub use umeyama::umeyama_align;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("need at least 3 correspondences, got {0}")]
    InsufficientCorrespondences(usize),
    #[error("degenerate point configuration (collinear or coincident sources)")]
    DegenerateConfiguration,
    #[error("no consensus: best hypothesis has {best} inliers, need {required}")]
    NoConsensus { best: usize, required: usize },
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("quaternion is not unit length (norm {0})")]
    NonUnitQuaternion(f64),
    #[error("invalid sample count k = {k} for {n} elements")]
    InvalidK { k: usize, n: usize },
    #[error("start index {index} out of range for {n} elements")]
    InvalidStartIndex { index: usize, n: usize },
    #[error("source and target lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
}
