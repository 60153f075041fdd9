use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{crop_object, DatasetSource, FrameRef};
use super::estimate::{estimate_prepared, FeatureMatcher, Matcher, OracleMatcher, PreparedQuery, PreparedSupport};
use super::support::build_support_set_from;
use super::{EvalConfig, PipelineError};
use crate::geom::Pose;
use crate::metrics::{add_recall_at, auc, evaluate, MetricKind, ObjectModel};
use crate::synth::random_rotation;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalOptions {
    /// Replace every prediction with the ground truth (harness self-check).
    pub oracle_pose: bool,
    /// Replace the feature matcher with ground-truth correspondences.
    pub oracle_correspondences: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameResult {
    pub object_id: String,
    pub frame_id: String,
    /// `None` when estimation failed.
    pub pose: Option<Pose>,
    pub gt: Pose,
    pub add: f64,
    pub adds: f64,
    pub chosen_view: Option<usize>,
}

impl FrameResult {
    pub fn error(&self, kind: MetricKind) -> f64 {
        match kind {
            MetricKind::Add => self.add,
            MetricKind::Adds => self.adds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectReport {
    pub object_id: String,
    pub diameter: f64,
    /// Metric behind the recall figure: ADD-S for symmetric objects, else ADD.
    pub recall_metric: MetricKind,
    pub add_auc: f64,
    pub adds_auc: f64,
    /// Fraction of frames with error below `recall_fraction × diameter`.
    pub recall: f64,
    /// The same recall for uniformly random rotations at the true translation.
    pub baseline_recall: f64,
    pub frames: Vec<FrameResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub objects: Vec<ObjectReport>,
}

fn metric_err(e: crate::metrics::MetricError) -> PipelineError {
    PipelineError::InvalidConfig(e.to_string())
}

/// Recall over `poses` random rotations placed at the query translations.
pub fn random_pose_baseline(
    model: &ObjectModel,
    gts: &[Pose],
    poses: usize,
    fraction: f64,
    seed: u64,
) -> Result<f64, PipelineError> {
    if gts.is_empty() || poses == 0 {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kind = model.default_metric();
    let errors = (0..poses)
        .map(|i| {
            let gt = &gts[i % gts.len()];
            let pred = Pose::new(random_rotation(&mut rng), gt.translation);
            evaluate(kind, model, &pred, gt)
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(metric_err)?;
    add_recall_at(&errors, model.diameter, fraction).map_err(metric_err)
}

struct ObjectJob {
    model: ObjectModel,
    support: Option<PreparedSupport>,
    frames: Vec<FrameRef>,
}

fn run_frame(
    source: &dyn DatasetSource,
    job: &ObjectJob,
    frame: &FrameRef,
    config: &EvalConfig,
    options: EvalOptions,
    matcher: Option<&FeatureMatcher>,
) -> Result<FrameResult, PipelineError> {
    let full = source.load_frame(frame)?;
    let gt =
        full.pose.ok_or_else(|| PipelineError::DatasetFormat(format!("{}: no ground truth", frame.dir.display())))?;
    let pose = if options.oracle_pose {
        Some((gt, None))
    } else {
        let support = job.support.as_ref().expect("support prepared unless oracle_pose");
        let estimate = crop_object(&full, config.box_padding, config.patch_size).and_then(|patch| {
            let q = PreparedQuery::new(&patch, config)?;
            let oracle = OracleMatcher { query_pose: gt, tolerance: config.ransac.inlier_threshold };
            let m: &dyn Matcher = match matcher {
                Some(m) if !options.oracle_correspondences => m,
                _ => &oracle,
            };
            estimate_prepared(support, &q, config, m)
        });
        match estimate {
            Ok(r) => Some((r.pose, Some(r.chosen_view))),
            Err(PipelineError::PoseEstimationFailed(_) | PipelineError::EmptyQuery) => None,
            Err(e) => return Err(e),
        }
    };
    let (add, adds) = match &pose {
        Some((p, _)) => (
            evaluate(MetricKind::Add, &job.model, p, &gt).map_err(metric_err)?,
            evaluate(MetricKind::Adds, &job.model, p, &gt).map_err(metric_err)?,
        ),
        None => (f64::INFINITY, f64::INFINITY),
    };
    Ok(FrameResult {
        object_id: frame.object_id.clone(),
        frame_id: frame.frame_id.clone(),
        pose: pose.map(|p| p.0),
        gt,
        add,
        adds,
        chosen_view: pose.and_then(|p| p.1),
    })
}

/// Builds a support set per object, estimates every query frame in
/// parallel and aggregates AUC and recall. Failed frames count as `+∞`.
/// Output order is by object, then frame, independent of scheduling.
pub fn run_eval(
    source: &dyn DatasetSource,
    config: &EvalConfig,
    options: EvalOptions,
) -> Result<EvalReport, PipelineError> {
    config.validate()?;
    let matcher = if options.oracle_pose || options.oracle_correspondences {
        None
    } else {
        Some(FeatureMatcher::from_config(config)?)
    };
    let mut jobs = Vec::new();
    for obj in source.objects() {
        let model = source.model(&obj.id)?;
        let support = if options.oracle_pose {
            None
        } else {
            let set = build_support_set_from(source, &obj.id, config.support_k, config)?;
            Some(PreparedSupport::new(&set, config)?)
        };
        let mut frames = source.query_frames(&obj.id)?;
        frames.sort();
        jobs.push(ObjectJob { model, support, frames });
    }
    let tasks: Vec<(usize, usize)> =
        jobs.iter().enumerate().flat_map(|(o, j)| (0..j.frames.len()).map(move |f| (o, f))).collect();
    let results: Vec<FrameResult> = tasks
        .par_iter()
        .map(|&(o, f)| run_frame(source, &jobs[o], &jobs[o].frames[f], config, options, matcher.as_ref()))
        .collect::<Result<_, _>>()?;

    let mut objects = Vec::new();
    let mut cursor = 0;
    for (o, (obj, job)) in source.objects().iter().zip(&jobs).enumerate() {
        let frames: Vec<FrameResult> = results[cursor..cursor + job.frames.len()].to_vec();
        cursor += job.frames.len();
        let kind = job.model.default_metric();
        let errors = |k: MetricKind| frames.iter().map(|f| f.error(k)).collect::<Vec<_>>();
        let gts: Vec<Pose> = frames.iter().map(|f| f.gt).collect();
        objects.push(ObjectReport {
            object_id: obj.id.clone(),
            diameter: job.model.diameter,
            recall_metric: kind,
            add_auc: auc(&errors(MetricKind::Add), config.auc_max, config.auc_step).map_err(metric_err)?,
            adds_auc: auc(&errors(MetricKind::Adds), config.auc_max, config.auc_step).map_err(metric_err)?,
            recall: add_recall_at(&errors(kind), job.model.diameter, config.recall_fraction).map_err(metric_err)?,
            baseline_recall: random_pose_baseline(
                &job.model,
                &gts,
                config.baseline_poses,
                config.recall_fraction,
                config.seed ^ (o as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
            )?,
            frames,
        });
    }
    Ok(EvalReport { objects })
}

fn csv_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Io(format!("{}: {e}", path.display()))
}

impl EvalReport {
    /// Writes `per_frame.csv`, `summary.csv`, `baseline.csv` and `poses.csv`.
    pub fn write(&self, dir: &Path, metrics: &[MetricKind]) -> Result<(), PipelineError> {
        fs::create_dir_all(dir).map_err(|e| csv_err(dir, e))?;

        let path = dir.join("per_frame.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
        w.write_record(["object_id", "frame_id", "metric_kind", "error_m"]).map_err(|e| csv_err(&path, e))?;
        for o in &self.objects {
            for f in &o.frames {
                for &k in metrics {
                    w.write_record([&o.object_id, &f.frame_id, &k.to_string(), &f.error(k).to_string()])
                        .map_err(|e| csv_err(&path, e))?;
                }
            }
        }
        w.flush().map_err(|e| csv_err(&path, e))?;

        let path = dir.join("summary.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
        w.write_record(["object_id", "adds_auc", "add_auc", "add_recall_0p1d", "recall_metric", "diameter_m"])
            .map_err(|e| csv_err(&path, e))?;
        for o in &self.objects {
            w.write_record([
                o.object_id.clone(),
                o.adds_auc.to_string(),
                o.add_auc.to_string(),
                o.recall.to_string(),
                o.recall_metric.to_string(),
                o.diameter.to_string(),
            ])
            .map_err(|e| csv_err(&path, e))?;
        }
        w.flush().map_err(|e| csv_err(&path, e))?;

        let path = dir.join("baseline.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
        w.write_record(["object_id", "random_pose_recall_0p1d", "method_recall_0p1d"])
            .map_err(|e| csv_err(&path, e))?;
        for o in &self.objects {
            w.write_record([o.object_id.clone(), o.baseline_recall.to_string(), o.recall.to_string()])
                .map_err(|e| csv_err(&path, e))?;
        }
        w.flush().map_err(|e| csv_err(&path, e))?;

        let path = dir.join("poses.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
        let mut header = vec!["object_id".to_string(), "frame_id".to_string(), "estimated".to_string()];
        header.extend((0..3).flat_map(|r| (0..3).map(move |c| format!("r{r}{c}"))));
        header.extend(["tx", "ty", "tz"].map(String::from));
        w.write_record(&header).map_err(|e| csv_err(&path, e))?;
        for o in &self.objects {
            for f in &o.frames {
                let mut row = vec![o.object_id.clone(), f.frame_id.clone(), f.pose.is_some().to_string()];
                match &f.pose {
                    Some(p) => {
                        row.extend((0..3).flat_map(|r| (0..3).map(move |c| p.rotation[(r, c)].to_string())));
                        row.extend(p.translation.iter().map(|v| v.to_string()));
                    }
                    None => row.extend(std::iter::repeat_n(String::new(), 12)),
                }
                w.write_record(&row).map_err(|e| csv_err(&path, e))?;
            }
        }
        w.flush().map_err(|e| csv_err(&path, e))?;
        Ok(())
    }
}

/// One row of `per_frame.csv`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct PerFrameRow {
    pub object_id: String,
    pub frame_id: String,
    pub metric_kind: MetricKind,
    pub error_m: f64,
}

pub fn read_per_frame_csv(path: &Path) -> Result<Vec<PerFrameRow>, PipelineError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

/// Parses `poses.csv` into `(object_id, frame_id, pose)`.
pub fn read_poses_csv(path: &Path) -> Result<Vec<(String, String, Option<Pose>)>, PipelineError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let pose = if &rec[2] == "true" {
            let v: Vec<f64> =
                (3..15).map(|i| rec[i].parse::<f64>()).collect::<Result<_, _>>().map_err(|e| csv_err(path, e))?;
            Some(Pose::new(nalgebra::Matrix3::from_row_slice(&v[..9]), nalgebra::Vector3::new(v[9], v[10], v[11])))
        } else {
            None
        };
        out.push((rec[0].to_string(), rec[1].to_string(), pose));
    }
    Ok(out)
}
