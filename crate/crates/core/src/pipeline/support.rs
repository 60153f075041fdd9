use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::dataset::{crop_object, load_frame_dir, DatasetSource, SynthDataset};
use super::{EvalConfig, PipelineError};
use crate::geom::{farthest_rotation_sample, Pose, Quaternion};
use crate::rgbd::RgbdPatch;

/// One cropped support view and its object-to-camera pose.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportView {
    /// Where the view came from (frame directory or sequence index).
    pub source: String,
    pub patch: RgbdPatch,
    pub pose: Pose,
}

/// K posed views of one object. Poses map the object frame into each view's
/// camera frame. With labeled data the object frame is the model frame;
/// after video registration it is the first frame's camera frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportSet {
    pub object_id: String,
    pub views: Vec<SupportView>,
}

/// On-disk form of a support set: frame directories plus poses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportFile {
    pub object_id: String,
    pub views: Vec<SupportViewRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportViewRef {
    pub dir: PathBuf,
    pub pose: Pose,
}

impl SupportFile {
    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let text = serde_json::to_string_pretty(self).expect("serializable");
        fs::write(path, text + "\n").map_err(|e| PipelineError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|_| PipelineError::DatasetFormat(format!("missing file {}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::DatasetFormat(format!("{}: {e}", path.display())))
    }

    /// Loads and crops every referenced frame. Relative directories resolve
    /// against `base`.
    pub fn resolve(&self, base: &Path, config: &EvalConfig) -> Result<SupportSet, PipelineError> {
        if self.views.is_empty() {
            return Err(PipelineError::NotEnoughFrames { needed: 1, available: 0 });
        }
        let views = self
            .views
            .iter()
            .map(|v| {
                let dir = if v.dir.is_absolute() { v.dir.clone() } else { base.join(&v.dir) };
                let mut patch = load_frame_dir(&dir, &self.object_id)?;
                patch.pose = Some(v.pose);
                let patch = crop_object(&patch, config.box_padding, config.patch_size)?;
                Ok(SupportView { source: dir.display().to_string(), patch, pose: v.pose })
            })
            .collect::<Result<_, PipelineError>>()?;
        Ok(SupportSet { object_id: self.object_id.clone(), views })
    }
}

/// Indices of `k` views by farthest rotation sampling from view 0.
pub fn select_views(poses: &[Pose], k: usize) -> Result<Vec<usize>, PipelineError> {
    if poses.len() < k || k == 0 {
        return Err(PipelineError::NotEnoughFrames { needed: k.max(1), available: poses.len() });
    }
    let quats: Vec<Quaternion> = poses.iter().map(Pose::quaternion).collect();
    farthest_rotation_sample(&quats, k, 0).map_err(|e| PipelineError::InvalidConfig(e.to_string()))
}

/// Chooses `k` support frames of `object_id` from the support split and
/// returns their file references.
pub fn sample_support_views(
    source: &dyn DatasetSource,
    object_id: &str,
    k: usize,
) -> Result<SupportFile, PipelineError> {
    let frames = source.support_frames(object_id)?;
    let poses = frames.iter().map(|f| source.frame_pose(f)).collect::<Result<Vec<_>, _>>()?;
    let picked = select_views(&poses, k)?;
    Ok(SupportFile {
        object_id: object_id.to_string(),
        views: picked.iter().map(|&i| SupportViewRef { dir: frames[i].dir.clone(), pose: poses[i] }).collect(),
    })
}

pub fn build_support_set_from(
    source: &dyn DatasetSource,
    object_id: &str,
    k: usize,
    config: &EvalConfig,
) -> Result<SupportSet, PipelineError> {
    sample_support_views(source, object_id, k)?.resolve(Path::new(""), config)
}

/// Support set of `k` views from a synthetic dataset directory.
pub fn build_support_set(
    dataset_dir: &Path,
    object_id: &str,
    k: usize,
    config: &EvalConfig,
) -> Result<SupportSet, PipelineError> {
    let ds = SynthDataset::open(dataset_dir)?;
    build_support_set_from(&ds, object_id, k, config)
}
