use nalgebra::{Matrix6, Rotation3, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use super::umeyama::umeyama_points;
use super::{GeomError, PointCloud, Pose};
use crate::nn::PointIndex;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcpParams {
    pub max_iterations: usize,
    /// Stop once the residual changes by less than this (m²).
    pub convergence_eps: f64,
    /// Pairs farther apart than this (m) are ignored.
    pub max_corr_dist: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        IcpParams { max_iterations: 50, convergence_eps: 1e-6, max_corr_dist: 0.02 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    pub pose: Pose,
    /// Truncated residual of `pose`: mean over source points of
    /// `min(d², max_corr_dist²)`, `d` the nearest-neighbour distance.
    pub residual: f64,
    pub initial_residual: f64,
    pub iterations: usize,
}

struct Matching {
    residual: f64,
    src: Vec<Vector3<f64>>,
    dst: Vec<Vector3<f64>>,
}

fn match_points(src: &PointCloud, dst: &PointCloud, index: &PointIndex, pose: &Pose, gate: f64) -> Matching {
    let gate2 = gate * gate;
    let mut sum = 0.0;
    let mut s = Vec::new();
    let mut d = Vec::new();
    for p in &src.points {
        let (j, d2) = index.nearest(&pose.apply(p));
        if d2 <= gate2 {
            s.push(*p);
            d.push(dst.points[j]);
            sum += d2;
        } else {
            sum += gate2;
        }
    }
    Matching { residual: sum / src.len() as f64, src: s, dst: d }
}

/// Point-to-point ICP from `init`, mapping `src` onto `dst`.
///
/// The truncated residual is non-increasing across iterations, and the
/// returned pose is the best iterate seen, so it never exceeds the residual
/// of `init`.
pub fn icp_refine(src: &PointCloud, dst: &PointCloud, init: &Pose, params: &IcpParams) -> Result<IcpResult, GeomError> {
    if src.is_empty() || dst.is_empty() {
        return Err(GeomError::EmptyCloud);
    }
    let index = PointIndex::new(&dst.points);
    let mut pose = *init;
    let mut current = match_points(src, dst, &index, &pose, params.max_corr_dist);
    let initial_residual = current.residual;
    let mut best = (pose, current.residual);
    let mut iterations = 0;

    while iterations < params.max_iterations {
        let Ok(next) = umeyama_points(&current.src, &current.dst) else {
            break;
        };
        iterations += 1;
        let matched = match_points(src, dst, &index, &next, params.max_corr_dist);
        let change = (current.residual - matched.residual).abs();
        pose = next;
        current = matched;
        if current.residual < best.1 {
            best = (pose, current.residual);
        }
        if change < params.convergence_eps {
            break;
        }
    }

    Ok(IcpResult { pose: best.0, residual: best.1, initial_residual, iterations })
}

/// Points with unit normals. Target points flagged in `boundary` never
/// take part in a pair.
#[derive(Debug, Clone, Copy)]
pub struct Oriented<'a> {
    pub points: &'a [Vector3<f64>],
    pub normals: &'a [Vector3<f64>],
    pub boundary: Option<&'a [bool]>,
}

impl<'a> Oriented<'a> {
    pub fn new(cloud: &'a PointCloud, normals: &'a [Vector3<f64>]) -> Result<Self, GeomError> {
        if cloud.is_empty() {
            return Err(GeomError::EmptyCloud);
        }
        if normals.len() != cloud.len() {
            return Err(GeomError::LengthMismatch(cloud.len(), normals.len()));
        }
        Ok(Oriented { points: &cloud.points, normals, boundary: None })
    }

    pub fn with_boundary(self, boundary: &'a [bool]) -> Result<Self, GeomError> {
        if boundary.len() != self.points.len() {
            return Err(GeomError::LengthMismatch(self.points.len(), boundary.len()));
        }
        Ok(Oriented { boundary: Some(boundary), ..self })
    }
}

struct PlaneStep {
    residual: f64,
    ata: Matrix6<f64>,
    atb: Vector6<f64>,
    used: usize,
}

fn plane_step(src: &Oriented, dst: &Oriented, index: &PointIndex, pose: &Pose, gate: f64, min_cos: f64) -> PlaneStep {
    let gate2 = gate * gate;
    let mut step = PlaneStep { residual: 0.0, ata: Matrix6::zeros(), atb: Vector6::zeros(), used: 0 };
    for (p, ns) in src.points.iter().zip(src.normals) {
        let x = pose.apply(p);
        let (j, d2) = index.nearest(&x);
        let n = dst.normals[j];
        if d2 > gate2 || dst.boundary.is_some_and(|b| b[j]) || (pose.rotation * ns).dot(&n) < min_cos {
            step.residual += gate2;
            continue;
        }
        let r = n.dot(&(x - dst.points[j]));
        step.residual += (r * r).min(gate2);
        let c = x.cross(&n);
        let a = Vector6::new(c.x, c.y, c.z, n.x, n.y, n.z);
        step.ata += a * a.transpose();
        step.atb -= a * r;
        step.used += 1;
    }
    step.residual /= src.points.len() as f64;
    step
}

/// Point-to-plane ICP from `init`. Pairs farther than `max_corr_dist` or
/// whose normals differ by more than `max_normal_angle` (radians) are
/// dropped. Each step solves the small-angle linearization; the residual is
/// the truncated squared distance to the matched tangent plane. Returns the
/// last iterate, or `init` if that ended above the starting residual.
pub fn icp_refine_point_to_plane(
    src: Oriented<'_>,
    dst: Oriented<'_>,
    init: &Pose,
    params: &IcpParams,
    max_normal_angle: f64,
) -> Result<IcpResult, GeomError> {
    let min_cos = max_normal_angle.cos();
    let index = PointIndex::new(dst.points);
    let mut pose = *init;
    let mut current = plane_step(&src, &dst, &index, &pose, params.max_corr_dist, min_cos);
    let initial_residual = current.residual;
    let mut iterations = 0;

    while iterations < params.max_iterations && current.used >= 6 {
        let Some(x) = current.ata.cholesky().map(|c| c.solve(&current.atb)) else {
            break;
        };
        let delta =
            Pose::new(Rotation3::new(Vector3::new(x[0], x[1], x[2])).into_inner(), Vector3::new(x[3], x[4], x[5]));
        iterations += 1;
        pose = delta.compose(&pose);
        let next = plane_step(&src, &dst, &index, &pose, params.max_corr_dist, min_cos);
        let change = (current.residual - next.residual).abs();
        current = next;
        if change < params.convergence_eps {
            break;
        }
    }

    if current.residual > initial_residual {
        return Ok(IcpResult { pose: *init, residual: initial_residual, initial_residual, iterations });
    }
    Ok(IcpResult { pose, residual: current.residual, initial_residual, iterations })
}
