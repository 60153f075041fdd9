//! 6D pose evaluation: ADD, ADD-S, accuracy-threshold AUC and ADD-0.1d recall.

use std::fmt;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{PointCloud, Pose};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("object model has no vertices")]
    EmptyModel,
    #[error("invalid threshold: max {max}, step {step}")]
    InvalidThreshold { max: f64, step: f64 },
    #[error("invalid diameter {0}")]
    InvalidDiameter(f64),
}

pub const DEFAULT_AUC_MAX: f64 = 0.1;
pub const DEFAULT_AUC_STEP: f64 = 0.001;
pub const DEFAULT_RECALL_FRACTION: f64 = 0.1;

/// Evaluation model: vertices in the object frame, diameter, symmetry flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectModel {
    pub vertices: Vec<Vector3<f64>>,
    pub diameter: f64,
    pub symmetric: bool,
}

impl ObjectModel {
    /// Builds a model, deriving the diameter from the vertices.
    pub fn new(vertices: Vec<Vector3<f64>>, symmetric: bool) -> Result<Self, MetricError> {
        let diameter = diameter(&PointCloud::new(vertices.clone()))?;
        Ok(ObjectModel { vertices, diameter, symmetric })
    }

    /// ADD-S for symmetric objects, ADD otherwise.
    pub fn default_metric(&self) -> MetricKind {
        if self.symmetric {
            MetricKind::Adds
        } else {
            MetricKind::Add
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetricKind {
    #[serde(rename = "ADD")]
    Add,
    #[serde(rename = "ADDS")]
    Adds,
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetricKind::Add => "ADD",
            MetricKind::Adds => "ADDS",
        })
    }
}

impl std::str::FromStr for MetricKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ADD" => Ok(MetricKind::Add),
            "ADDS" => Ok(MetricKind::Adds),
            other => Err(format!("unknown metric kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric_kind: MetricKind,
    pub per_frame_errors: Vec<f64>,
    pub auc: f64,
    pub recall_at_0p1d: f64,
}

impl MetricReport {
    pub fn from_errors(kind: MetricKind, errors: Vec<f64>, diameter_m: f64) -> Result<Self, MetricError> {
        let auc = auc(&errors, DEFAULT_AUC_MAX, DEFAULT_AUC_STEP)?;
        let recall = add_recall_at(&errors, diameter_m, DEFAULT_RECALL_FRACTION)?;
        Ok(MetricReport { metric_kind: kind, per_frame_errors: errors, auc, recall_at_0p1d: recall })
    }
}

pub fn evaluate(kind: MetricKind, model: &ObjectModel, pred: &Pose, gt: &Pose) -> Result<f64, MetricError> {
    match kind {
        MetricKind::Add => add(model, pred, gt),
        MetricKind::Adds => adds(model, pred, gt),
    }
}

/// Mean distance between corresponding model vertices under the two poses.
pub fn add(model: &ObjectModel, pred: &Pose, gt: &Pose) -> Result<f64, MetricError> {
    if model.vertices.is_empty() {
        return Err(MetricError::EmptyModel);
    }
    let sum: f64 = model.vertices.iter().map(|v| (pred.apply(v) - gt.apply(v)).norm()).sum();
    Ok(sum / model.vertices.len() as f64)
}

/// Mean closest-point distance from predicted vertices to ground-truth vertices.
///
/// Exact O(m²) scan; models at this scale are small enough that a spatial
/// index buys nothing.
pub fn adds(model: &ObjectModel, pred: &Pose, gt: &Pose) -> Result<f64, MetricError> {
    if model.vertices.is_empty() {
        return Err(MetricError::EmptyModel);
    }
    let target: Vec<Vector3<f64>> = model.vertices.iter().map(|v| gt.apply(v)).collect();
    let mut sum = 0.0;
    for v in &model.vertices {
        let p = pred.apply(v);
        let best = target.iter().map(|t| (p - t).norm_squared()).fold(f64::INFINITY, f64::min);
        sum += best.sqrt();
    }
    Ok(sum / model.vertices.len() as f64)
}

/// Mean, over thresholds `step, 2·step, …, max_threshold`, of the fraction of
/// errors strictly below the threshold. Non-finite errors never count.
pub fn auc(errors: &[f64], max_threshold: f64, step: f64) -> Result<f64, MetricError> {
    if !(max_threshold > 0.0) || !(step > 0.0) || !max_threshold.is_finite() || step > max_threshold {
        return Err(MetricError::InvalidThreshold { max: max_threshold, step });
    }
    if errors.is_empty() {
        return Ok(0.0);
    }
    let count = (max_threshold / step + 1e-9).floor() as usize;
    let mut sorted: Vec<f64> = errors.iter().map(|e| if e.is_nan() { f64::INFINITY } else { *e }).collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut total = 0.0;
    for k in 1..=count {
        let t = step * k as f64;
        let below = sorted.partition_point(|&e| e < t);
        total += below as f64 / n;
    }
    Ok(total / count as f64)
}

/// Share of errors strictly below `fraction × diameter`.
pub fn add_recall_at(errors: &[f64], diameter_m: f64, fraction: f64) -> Result<f64, MetricError> {
    if !(diameter_m > 0.0) || !diameter_m.is_finite() {
        return Err(MetricError::InvalidDiameter(diameter_m));
    }
    if !(fraction > 0.0) {
        return Err(MetricError::InvalidThreshold { max: fraction, step: fraction });
    }
    if errors.is_empty() {
        return Ok(0.0);
    }
    let limit = fraction * diameter_m;
    Ok(errors.iter().filter(|&&e| e < limit).count() as f64 / errors.len() as f64)
}

/// Largest pairwise vertex distance.
pub fn diameter(vertices: &PointCloud) -> Result<f64, MetricError> {
    let pts = &vertices.points;
    if pts.is_empty() {
        return Err(MetricError::EmptyModel);
    }
    let mut best = 0.0f64;
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            best = best.max((a - b).norm_squared());
        }
    }
    Ok(best.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn square() -> ObjectModel {
        ObjectModel::new(
            vec![
                Vector3::new(0.05, 0.05, 0.0),
                Vector3::new(-0.05, 0.05, 0.0),
                Vector3::new(-0.05, -0.05, 0.0),
                Vector3::new(0.05, -0.05, 0.0),
            ],
            true,
        )
        .unwrap()
    }

    #[test]
    fn zero_error_at_ground_truth() {
        let gt = Pose::from_axis_angle(&Vector3::new(1.0, 1.0, 0.0), 0.4, Vector3::new(0.0, 0.0, 0.7));
        let m = square();
        assert_eq!(add(&m, &gt, &gt).unwrap(), 0.0);
        assert_eq!(adds(&m, &gt, &gt).unwrap(), 0.0);
    }

    #[test]
    fn translation_offset_is_exact() {
        let gt = Pose::from_axis_angle(&Vector3::new(0.0, 1.0, 0.0), 0.9, Vector3::new(0.1, 0.0, 0.7));
        let t = Vector3::new(0.003, -0.004, 0.0);
        let pred = Pose::from_translation(t).compose(&gt);
        assert!((add(&square(), &pred, &gt).unwrap() - 0.005).abs() < 1e-15);
    }

    #[test]
    fn square_quarter_turn_is_adds_zero() {
        let gt = Pose::from_translation(Vector3::new(0.0, 0.0, 0.5));
        let pred = gt.compose(&Pose::from_axis_angle(&Vector3::z(), FRAC_PI_2, Vector3::zeros()));
        assert!(adds(&square(), &pred, &gt).unwrap() < 1e-15);
        assert!(add(&square(), &pred, &gt).unwrap() > 0.05);
    }

    #[test]
    fn empty_model() {
        let m = ObjectModel { vertices: vec![], diameter: 0.0, symmetric: false };
        assert_eq!(add(&m, &Pose::identity(), &Pose::identity()), Err(MetricError::EmptyModel));
        assert_eq!(adds(&m, &Pose::identity(), &Pose::identity()), Err(MetricError::EmptyModel));
        assert_eq!(diameter(&PointCloud::default()), Err(MetricError::EmptyModel));
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.0, 0.0], 0.1, 0.001).unwrap(), 1.0);
        assert_eq!(auc(&[0.1, 0.5, f64::INFINITY], 0.1, 0.001).unwrap(), 0.0);
        // thresholds strictly above 0.05: 0.051..=0.1 → 50 of 100
        let a = auc(&[0.05], 0.1, 0.001).unwrap();
        assert!((a - 0.5).abs() <= 0.01);
        assert!(matches!(auc(&[0.0], 0.0, 0.001), Err(MetricError::InvalidThreshold { .. })));
    }

    #[test]
    fn recall_examples() {
        assert_eq!(DEFAULT_RECALL_FRACTION, 0.1);
        assert_eq!(add_recall_at(&[0.0, 0.0], 0.2, 0.1).unwrap(), 1.0);
        assert_eq!(add_recall_at(&[0.009, 0.011], 0.1, 0.1).unwrap(), 0.5);
        assert_eq!(add_recall_at(&[0.0], 0.0, 0.1), Err(MetricError::InvalidDiameter(0.0)));
    }

    #[test]
    fn diameter_examples() {
        let mut corners = Vec::new();
        for i in 0..8 {
            corners.push(Vector3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64));
        }
        assert!((diameter(&PointCloud::new(corners)).unwrap() - 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(diameter(&PointCloud::new(vec![Vector3::new(1.0, 2.0, 3.0)])).unwrap(), 0.0);
    }
}
