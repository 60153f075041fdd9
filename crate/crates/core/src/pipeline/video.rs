use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::crop_object;
use super::support::select_views;
use super::{PipelineError, SupportSet, SupportView};
use crate::geom::{chain_poses, icp_refine_point_to_plane, IcpParams, Oriented, PointCloud, Pose};
use crate::rgbd::{estimate_normals, RgbdPatch};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VideoParams {
    /// Support views to keep.
    pub k: usize,
    pub icp: IcpParams,
    /// Largest accepted adjacent-frame ICP residual (m²).
    pub max_residual: f64,
    /// Source points per ICP step; the target keeps every point.
    pub max_points: usize,
    /// Neighbours for the target normals used by point-to-plane ICP.
    pub normal_neighbors: usize,
    /// Depth step (m) between neighbouring pixels that marks an occlusion
    /// boundary; target points on any boundary are not paired.
    pub depth_jump: f64,
    /// Pairs whose normals differ by more than this (radians) are dropped.
    pub max_normal_angle: f64,
    pub plane_threshold: f64,
    pub plane_iterations: usize,
    pub patch_size: usize,
    pub box_padding: f64,
    pub seed: u64,
}

impl Default for VideoParams {
    fn default() -> Self {
        VideoParams {
            k: 16,
            icp: IcpParams { max_iterations: 100, convergence_eps: 1e-12, max_corr_dist: 0.01 },
            max_residual: 2.5e-5,
            max_points: 4000,
            normal_neighbors: 10,
            max_normal_angle: 30f64.to_radians(),
            depth_jump: 0.005,
            plane_threshold: 0.005,
            plane_iterations: 200,
            patch_size: 255,
            box_padding: 0.1,
            seed: 0,
        }
    }
}

/// Unit normal `n` (pointing at the camera) and offset `d` with `n·p + d = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: Vector3<f64>,
    pub offset: f64,
}

impl Plane {
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) + self.offset
    }
}

/// Least-squares plane through `points`: centroid plus the direction of least
/// variance. `None` for fewer than 3 points or a collinear set.
pub fn fit_plane_lsq(points: &[Vector3<f64>]) -> Option<Plane> {
    if points.len() < 3 {
        return None;
    }
    let c = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - c;
        cov += d * d.transpose();
    }
    let eig = cov.symmetric_eigen();
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    if eig.eigenvalues[order[1]] <= 1e-12 * eig.eigenvalues[order[2]].max(f64::MIN_POSITIVE) {
        return None;
    }
    let mut n: Vector3<f64> = eig.eigenvectors.column(order[0]).into_owned().normalize();
    // face the camera at the origin
    if n.dot(&c) > 0.0 {
        n = -n;
    }
    Some(Plane { normal: n, offset: -n.dot(&c) })
}

/// Dominant plane by 3-point RANSAC followed by a least-squares refit on its
/// inliers.
pub fn fit_dominant_plane(points: &[Vector3<f64>], threshold: f64, iterations: usize, seed: u64) -> Option<Plane> {
    if points.len() < 3 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(usize, Plane)> = None;
    for _ in 0..iterations {
        let tri: [usize; 3] = std::array::from_fn(|_| rng.random_range(0..points.len()));
        let Some(plane) = fit_plane_lsq(&tri.map(|i| points[i])) else {
            continue;
        };
        let count = points.iter().filter(|p| plane.signed_distance(p).abs() <= threshold).count();
        if best.is_none_or(|(c, _)| count > c) {
            best = Some((count, plane));
        }
    }
    let (_, plane) = best?;
    let inliers: Vec<Vector3<f64>> =
        points.iter().copied().filter(|p| plane.signed_distance(p).abs() <= threshold).collect();
    fit_plane_lsq(&inliers).or(Some(plane))
}

/// Object mask of one frame: the frame's own mask when it has one, else
/// every measured pixel in front of the dominant plane.
pub fn segment_object(patch: &RgbdPatch, params: &VideoParams) -> Vec<bool> {
    if patch.mask.iter().any(|&m| m) {
        return patch.mask.clone();
    }
    let mut pixels = Vec::new();
    let mut points = Vec::new();
    for row in 0..patch.height {
        for col in 0..patch.width {
            if let Some(p) = patch.point_at(row, col) {
                pixels.push(patch.index(row, col));
                points.push(p);
            }
        }
    }
    let mut mask = vec![false; patch.mask.len()];
    let Some(plane) = fit_dominant_plane(&points, params.plane_threshold, params.plane_iterations, params.seed) else {
        return mask;
    };
    for (i, p) in pixels.iter().zip(&points) {
        mask[*i] = plane.signed_distance(p) > params.plane_threshold;
    }
    mask
}

#[derive(Debug, Clone, PartialEq)]
pub struct Registration {
    /// Object-to-camera pose of every frame; the object frame is frame 0's
    /// camera frame.
    pub poses: Vec<Pose>,
    /// Truncated ICP residual of each adjacent pair.
    pub residuals: Vec<f64>,
    pub support: SupportSet,
}

/// Flags cloud points whose pixel touches the mask edge, the image border or
/// a depth step larger than `jump`.
pub(crate) fn boundary_flags(patch: &RgbdPatch, pixels: &[(usize, usize)], jump: f64) -> Vec<bool> {
    pixels
        .iter()
        .map(|&(r, c)| {
            let z = patch.depth[patch.index(r, c)];
            let neighbours = [(r.wrapping_sub(1), c), (r + 1, c), (r, c.wrapping_sub(1)), (r, c + 1)];
            neighbours.iter().any(|&(nr, nc)| {
                if nr >= patch.height || nc >= patch.width {
                    return true;
                }
                let i = patch.index(nr, nc);
                !patch.mask[i] || patch.depth[i] <= 0.0 || (patch.depth[i] - z).abs() > jump
            })
        })
        .collect()
}

fn subsample(len: usize, max_points: usize) -> Vec<usize> {
    if len <= max_points || max_points == 0 {
        return (0..len).collect();
    }
    (0..max_points).map(|i| i * len / max_points).collect()
}

/// Registers an ordered sequence by adjacent-frame point-to-plane ICP from
/// identity, chains the relative motions from frame 0, and keeps `k` views
/// by farthest rotation sampling.
pub fn register_sequence(
    frames: &[RgbdPatch],
    object_id: &str,
    params: &VideoParams,
) -> Result<Registration, PipelineError> {
    if frames.len() < 2 {
        return Err(PipelineError::TooFewFrames(frames.len()));
    }
    let masked: Vec<RgbdPatch> =
        frames.iter().map(|f| RgbdPatch { mask: segment_object(f, params), ..f.clone() }).collect();
    let (clouds, boundaries): (Vec<PointCloud>, Vec<Vec<bool>>) = masked
        .iter()
        .map(|f| {
            let (cloud, pixels) = f.backproject();
            let boundary = boundary_flags(f, &pixels, params.depth_jump);
            (cloud, boundary)
        })
        .unzip();
    if let Some(i) = clouds.iter().position(|c| c.len() < 3) {
        return Err(PipelineError::RegistrationDiverged { frame: i, residual: f64::INFINITY });
    }
    let normals = clouds
        .iter()
        .enumerate()
        .map(|(i, c)| {
            estimate_normals(c, params.normal_neighbors)
                .map_err(|_| PipelineError::RegistrationDiverged { frame: i, residual: f64::INFINITY })
        })
        .collect::<Result<Vec<_>, _>>()?;
    // relative[i] maps frame i+1 camera coordinates into frame i
    let mut relative = Vec::with_capacity(frames.len() - 1);
    let mut residuals = Vec::with_capacity(frames.len() - 1);
    for i in 0..frames.len() - 1 {
        let diverged = || PipelineError::RegistrationDiverged { frame: i + 1, residual: f64::INFINITY };
        let idx = subsample(clouds[i + 1].len(), params.max_points);
        let src = clouds[i + 1].select(&idx);
        let src_normals: Vec<_> = idx.iter().map(|&j| normals[i + 1][j]).collect();
        let r = icp_refine_point_to_plane(
            Oriented::new(&src, &src_normals).map_err(|_| diverged())?,
            Oriented::new(&clouds[i], &normals[i])
                .and_then(|o| o.with_boundary(&boundaries[i]))
                .map_err(|_| diverged())?,
            &Pose::identity(),
            &params.icp,
            params.max_normal_angle,
        )
        .map_err(|_| diverged())?;
        if !(r.residual <= params.max_residual) {
            return Err(PipelineError::RegistrationDiverged { frame: i + 1, residual: r.residual });
        }
        relative.push(r.pose);
        residuals.push(r.residual);
    }
    let camera_to_object = chain_poses(&relative, &Pose::identity());
    let poses: Vec<Pose> = camera_to_object.iter().map(Pose::inverse).collect();
    let picked = select_views(&poses, params.k.min(poses.len()))?;
    let views = picked
        .iter()
        .map(|&i| {
            let mut patch = masked[i].clone();
            patch.pose = Some(poses[i]);
            let patch = crop_object(&patch, params.box_padding, params.patch_size)?;
            Ok(SupportView { source: format!("frame_{i:04}"), patch, pose: poses[i] })
        })
        .collect::<Result<_, PipelineError>>()?;
    Ok(Registration { poses, residuals, support: SupportSet { object_id: object_id.to_string(), views } })
}

pub fn register_from_video(
    frames: &[RgbdPatch],
    object_id: &str,
    params: &VideoParams,
) -> Result<SupportSet, PipelineError> {
    Ok(register_sequence(frames, object_id, params)?.support)
}
