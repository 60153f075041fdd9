//! End-to-end orchestration: support sets, best-of-K pose estimation,
//! batch evaluation with report files, and support sets from video.

mod config;
pub mod dataset;
mod estimate;
mod eval;
mod support;
mod video;

pub use config::{AttentionConfig, EvalConfig};
pub use dataset::{
    crop_object, load_frame_dir, load_video_dir, write_frame_dir, DatasetSource, FrameRef, ObjectInfo, SynthDataset,
};
pub use estimate::{
    estimate_pose, estimate_prepared, EstimateResult, FeatureMatcher, Matcher, OracleMatcher, Pair, PreparedQuery,
    PreparedSupport, PreparedView,
};
pub use eval::{
    random_pose_baseline, read_per_frame_csv, read_poses_csv, run_eval, EvalOptions, EvalReport, FrameResult,
    ObjectReport, PerFrameRow,
};
pub use support::{
    build_support_set, build_support_set_from, sample_support_views, select_views, SupportFile, SupportSet,
    SupportView, SupportViewRef,
};
pub use video::{
    fit_dominant_plane, fit_plane_lsq, register_from_video, register_sequence, segment_object, Plane, Registration,
    VideoParams,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("dataset format error: {0}")]
    DatasetFormat(String),
    #[error("pose estimation failed: {0}")]
    PoseEstimationFailed(String),
    #[error("query mask is empty")]
    EmptyQuery,
    #[error("need {needed} labeled frames, have {available}")]
    NotEnoughFrames { needed: usize, available: usize },
    #[error("need at least 2 frames, have {0}")]
    TooFewFrames(usize),
    #[error("registration diverged at frame {frame} (residual {residual} m²)")]
    RegistrationDiverged { frame: usize, residual: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl PipelineError {
    /// Process exit code: 2 for input/dataset problems, 3 for estimation
    /// failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::PoseEstimationFailed(_) | PipelineError::RegistrationDiverged { .. } => 3,
            _ => 2,
        }
    }
}
