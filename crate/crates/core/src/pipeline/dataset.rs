//! Dataset access. The evaluation talks to a [`DatasetSource`]; the
//! synthetic scene layout is the built-in implementation.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;

use super::PipelineError;
use crate::geom::Pose;
use crate::metrics::ObjectModel;
use crate::rgbd::io::{
    encode_depth_png, encode_mask_png, encode_rgb_png, read_depth_png, read_intrinsics, read_mask_png, read_rgb_png,
};
use crate::rgbd::{Intrinsics, PixelBox, RgbdError, RgbdPatch};
use crate::synth::dataset::{DatasetIndex, ModelFile, DATASET_VERSION};

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectInfo {
    pub id: String,
    pub symmetric: bool,
    pub diameter: f64,
}

/// One labeled observation of one object.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct FrameRef {
    pub object_id: String,
    pub frame_id: String,
    pub dir: PathBuf,
}

pub trait DatasetSource: Sync {
    fn objects(&self) -> &[ObjectInfo];
    fn model(&self, object_id: &str) -> Result<ObjectModel, PipelineError>;
    fn support_frames(&self, object_id: &str) -> Result<Vec<FrameRef>, PipelineError>;
    fn query_frames(&self, object_id: &str) -> Result<Vec<FrameRef>, PipelineError>;
    fn frame_pose(&self, frame: &FrameRef) -> Result<Pose, PipelineError>;
    /// Full image with the object's mask and ground-truth pose.
    fn load_frame(&self, frame: &FrameRef) -> Result<RgbdPatch, PipelineError>;
}

fn missing(path: &Path) -> PipelineError {
    PipelineError::DatasetFormat(format!("missing file {}", path.display()))
}

pub(crate) fn rgbd_to_dataset(e: RgbdError) -> PipelineError {
    match e {
        RgbdError::MissingFile(p) => PipelineError::DatasetFormat(format!("missing file {p}")),
        other => PipelineError::DatasetFormat(other.to_string()),
    }
}

fn first_existing(dir: &Path, names: &[String]) -> Option<PathBuf> {
    names.iter().map(|n| dir.join(n)).find(|p| p.is_file())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path).map_err(|_| missing(path))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::DatasetFormat(format!("{}: {e}", path.display())))
}

/// Ground-truth pose file of an object in a frame directory:
/// `gt_<object>.json`, falling back to `gt.json`.
pub fn frame_pose_file(dir: &Path, object_id: &str) -> Result<PathBuf, PipelineError> {
    first_existing(dir, &[format!("gt_{object_id}.json"), "gt.json".into()])
        .ok_or_else(|| missing(&dir.join(format!("gt_{object_id}.json"))))
}

/// Loads `rgb.png`, `depth.png`, `intrinsics.json` and the object mask
/// (`mask_<object>.png`, else `mask.png`) from a frame directory. The
/// ground-truth pose is attached when present.
pub fn load_frame_dir(dir: &Path, object_id: &str) -> Result<RgbdPatch, PipelineError> {
    for name in ["rgb.png", "depth.png", "intrinsics.json"] {
        if !dir.join(name).is_file() {
            return Err(missing(&dir.join(name)));
        }
    }
    let mask_path = first_existing(dir, &[format!("mask_{object_id}.png"), "mask.png".into()])
        .ok_or_else(|| missing(&dir.join(format!("mask_{object_id}.png"))))?;
    let intrinsics = read_intrinsics(&dir.join("intrinsics.json")).map_err(rgbd_to_dataset)?;
    let (w, h, rgb) = read_rgb_png(&dir.join("rgb.png")).map_err(rgbd_to_dataset)?;
    let (dw, dh, depth) = read_depth_png(&dir.join("depth.png")).map_err(rgbd_to_dataset)?;
    let (mw, mh, mask) = read_mask_png(&mask_path).map_err(rgbd_to_dataset)?;
    if (w, h) != (intrinsics.width, intrinsics.height) || (dw, dh) != (w, h) || (mw, mh) != (w, h) {
        return Err(PipelineError::DatasetFormat(format!(
            "{}: image sizes disagree (rgb {w}x{h}, depth {dw}x{dh}, mask {mw}x{mh}, intrinsics {}x{})",
            dir.display(),
            intrinsics.width,
            intrinsics.height
        )));
    }
    let pose = match first_existing(dir, &[format!("gt_{object_id}.json"), "gt.json".into()]) {
        Some(p) => Some(read_json::<Pose>(&p)?),
        None => None,
    };
    let mut patch = RgbdPatch { width: w, height: h, rgb, depth, mask, intrinsics, pose };
    patch.validate().map_err(rgbd_to_dataset)?;
    Ok(patch)
}

/// Loads an ordered frame sequence: every subdirectory of `dir` in name
/// order, each with `rgb.png`, `depth.png`, `intrinsics.json` and an
/// optional `mask.png`. Frames without a mask get an empty one.
pub fn load_video_dir(dir: &Path) -> Result<Vec<RgbdPatch>, PipelineError> {
    let entries =
        fs::read_dir(dir).map_err(|_| PipelineError::DatasetFormat(format!("missing directory {}", dir.display())))?;
    let mut dirs: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_dir()).collect();
    dirs.sort();
    dirs.iter()
        .map(|d| {
            if d.join("mask.png").is_file() {
                return load_frame_dir(d, "");
            }
            for name in ["rgb.png", "depth.png", "intrinsics.json"] {
                if !d.join(name).is_file() {
                    return Err(missing(&d.join(name)));
                }
            }
            let intrinsics = read_intrinsics(&d.join("intrinsics.json")).map_err(rgbd_to_dataset)?;
            let (w, h, rgb) = read_rgb_png(&d.join("rgb.png")).map_err(rgbd_to_dataset)?;
            let (dw, dh, depth) = read_depth_png(&d.join("depth.png")).map_err(rgbd_to_dataset)?;
            if (w, h) != (intrinsics.width, intrinsics.height) || (dw, dh) != (w, h) {
                return Err(PipelineError::DatasetFormat(format!("{}: image sizes disagree", d.display())));
            }
            let mut patch =
                RgbdPatch { width: w, height: h, rgb, depth, mask: vec![false; w * h], intrinsics, pose: None };
            patch.validate().map_err(rgbd_to_dataset)?;
            Ok(patch)
        })
        .collect()
}

/// Writes a frame in the layout [`load_frame_dir`] reads: images, intrinsics,
/// `mask_<object>.png` and, when the patch has one, `gt_<object>.json`.
pub fn write_frame_dir(dir: &Path, patch: &RgbdPatch, object_id: &str) -> Result<(), PipelineError> {
    let io = |p: &Path, e: &dyn std::fmt::Display| PipelineError::Io(format!("{}: {e}", p.display()));
    let enc = |e: RgbdError| PipelineError::Io(e.to_string());
    fs::create_dir_all(dir).map_err(|e| io(dir, &e))?;
    let (w, h) = (patch.width, patch.height);
    let mut files = vec![
        ("rgb.png".to_string(), encode_rgb_png(w, h, &patch.rgb).map_err(enc)?),
        ("depth.png".to_string(), encode_depth_png(w, h, &patch.depth).map_err(enc)?),
        (format!("mask_{object_id}.png"), encode_mask_png(w, h, &patch.mask).map_err(enc)?),
        ("intrinsics.json".to_string(), serde_json::to_vec_pretty(&patch.intrinsics).expect("serializable")),
    ];
    if let Some(pose) = &patch.pose {
        files.push((format!("gt_{object_id}.json"), serde_json::to_vec_pretty(pose).expect("serializable")));
    }
    for (name, bytes) in files {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| io(&path, &e))?;
    }
    Ok(())
}

/// Square crop around the padded mask box, resampled to
/// `patch_size × patch_size`.
pub fn crop_object(patch: &RgbdPatch, box_padding: f64, patch_size: usize) -> Result<RgbdPatch, PipelineError> {
    let b = patch.mask_bbox(box_padding).ok_or(PipelineError::EmptyQuery)?;
    let side = b.width().max(b.height()).min(patch.width.min(patch.height));
    let place = |lo: usize, len: usize, limit: usize| {
        let center2 = 2 * lo + len;
        let start = center2.saturating_sub(side) / 2;
        start.min(limit - side)
    };
    let x0 = place(b.x0, b.width(), patch.width);
    let y0 = place(b.y0, b.height(), patch.height);
    let bbox = PixelBox { x0, y0, x1: x0 + side, y1: y0 + side };
    let mut out = patch.crop_resize(bbox, patch_size, patch_size).map_err(rgbd_to_dataset)?;
    if out.mask_count() == 0 {
        return Err(PipelineError::EmptyQuery);
    }
    out.validate().map_err(rgbd_to_dataset)?;
    Ok(out)
}

/// The synthetic scene layout written by `synth::dataset`.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub root: PathBuf,
    pub index: DatasetIndex,
    objects: Vec<ObjectInfo>,
}

impl SynthDataset {
    pub fn open(root: &Path) -> Result<Self, PipelineError> {
        let index: DatasetIndex = read_json(&root.join("dataset.json"))?;
        if index.version != DATASET_VERSION {
            return Err(PipelineError::DatasetFormat(format!("unsupported dataset version {}", index.version)));
        }
        let objects = index
            .objects
            .iter()
            .map(|o| ObjectInfo { id: o.id.clone(), symmetric: o.symmetric, diameter: o.diameter })
            .collect();
        Ok(SynthDataset { root: root.to_path_buf(), index, objects })
    }

    fn frames(&self, object_id: &str, scenes: &[String]) -> Result<Vec<FrameRef>, PipelineError> {
        self.check_object(object_id)?;
        Ok(scenes
            .iter()
            .map(|s| FrameRef { object_id: object_id.to_string(), frame_id: s.clone(), dir: self.root.join(s) })
            .collect())
    }

    fn check_object(&self, object_id: &str) -> Result<(), PipelineError> {
        if self.objects.iter().any(|o| o.id == object_id) {
            Ok(())
        } else {
            Err(PipelineError::DatasetFormat(format!("unknown object {object_id:?}")))
        }
    }

    fn check_intrinsics(&self, k: &Intrinsics, dir: &Path) -> Result<(), PipelineError> {
        if *k != self.index.intrinsics {
            return Err(PipelineError::DatasetFormat(format!(
                "{}: intrinsics differ from dataset.json",
                dir.join("intrinsics.json").display()
            )));
        }
        Ok(())
    }
}

impl DatasetSource for SynthDataset {
    fn objects(&self) -> &[ObjectInfo] {
        &self.objects
    }

    fn model(&self, object_id: &str) -> Result<ObjectModel, PipelineError> {
        self.check_object(object_id)?;
        let file: ModelFile = read_json(&self.root.join("models").join(format!("{object_id}.json")))?;
        let points = file.points.iter().map(|p| Vector3::new(p[0], p[1], p[2])).collect();
        ObjectModel::new(points, file.symmetric).map_err(|e| PipelineError::DatasetFormat(format!("{object_id}: {e}")))
    }

    fn support_frames(&self, object_id: &str) -> Result<Vec<FrameRef>, PipelineError> {
        self.frames(object_id, &self.index.support_scenes)
    }

    fn query_frames(&self, object_id: &str) -> Result<Vec<FrameRef>, PipelineError> {
        self.frames(object_id, &self.index.query_scenes)
    }

    fn frame_pose(&self, frame: &FrameRef) -> Result<Pose, PipelineError> {
        read_json(&frame_pose_file(&frame.dir, &frame.object_id)?)
    }

    fn load_frame(&self, frame: &FrameRef) -> Result<RgbdPatch, PipelineError> {
        let patch = load_frame_dir(&frame.dir, &frame.object_id)?;
        self.check_intrinsics(&patch.intrinsics, &frame.dir)?;
        if patch.pose.is_none() {
            return Err(missing(&frame.dir.join(format!("gt_{}.json", frame.object_id))));
        }
        Ok(patch)
    }
}
