use nalgebra::Vector3;

use super::{GeomError, Pose};

/// 3D points in meters with optional per-point RGB in `[0, 1]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vector3<f64>>,
    pub colors: Option<Vec<[f64; 3]>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Self {
        PointCloud { points, colors: None }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.points.iter().all(|p| p.iter().all(|v| v.is_finite()))
    }

    pub fn centroid(&self) -> Option<Vector3<f64>> {
        if self.points.is_empty() {
            return None;
        }
        let sum: Vector3<f64> = self.points.iter().sum();
        Some(sum / self.points.len() as f64)
    }

    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            colors: self.colors.as_ref().map(|c| indices.iter().map(|&i| c[i]).collect()),
        }
    }
}

/// Matched point pairs `(p_i, q_i)` with optional confidences.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorrespondenceSet {
    pub source: Vec<Vector3<f64>>,
    pub target: Vec<Vector3<f64>>,
    pub confidence: Option<Vec<f64>>,
}

impl CorrespondenceSet {
    pub fn new(source: Vec<Vector3<f64>>, target: Vec<Vector3<f64>>) -> Result<Self, GeomError> {
        if source.len() != target.len() {
            return Err(GeomError::LengthMismatch(source.len(), target.len()));
        }
        Ok(CorrespondenceSet { source, target, confidence: None })
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Vector3<f64>, Vector3<f64>)>) -> Self {
        let (source, target) = pairs.into_iter().unzip();
        CorrespondenceSet { source, target, confidence: None }
    }

    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> CorrespondenceSet {
        CorrespondenceSet {
            source: indices.iter().map(|&i| self.source[i]).collect(),
            target: indices.iter().map(|&i| self.target[i]).collect(),
            confidence: self.confidence.as_ref().map(|c| indices.iter().map(|&i| c[i]).collect()),
        }
    }
}

pub fn transform_points(cloud: &PointCloud, pose: &Pose) -> PointCloud {
    PointCloud { points: cloud.points.iter().map(|p| pose.apply(p)).collect(), colors: cloud.colors.clone() }
}

/// Accumulates relative poses: `out[0] = anchor`, `out[i] = out[i-1] ∘ relative[i-1]`.
pub fn chain_poses(relative: &[Pose], anchor: &Pose) -> Vec<Pose> {
    let mut out = Vec::with_capacity(relative.len() + 1);
    out.push(*anchor);
    for rel in relative {
        let next = out[out.len() - 1].compose(rel);
        out.push(next);
    }
    out
}
