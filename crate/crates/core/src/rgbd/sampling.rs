use nalgebra::{Matrix3, Vector3};

use super::RgbdError;
use crate::geom::PointCloud;
use crate::nn::PointIndex;

/// Greedy max-min Euclidean subsampling seeded at `start_index`; ties go to
/// the lowest index.
pub fn farthest_point_sample(cloud: &PointCloud, n: usize, start_index: usize) -> Result<Vec<usize>, RgbdError> {
    let total = cloud.len();
    if n == 0 || n > total {
        return Err(RgbdError::InvalidN { n, available: total });
    }
    if start_index >= total {
        return Err(RgbdError::InvalidN { n: start_index, available: total });
    }
    let pts = &cloud.points;
    let mut min_d2 = vec![f64::INFINITY; total];
    let mut taken = vec![false; total];
    let mut out = Vec::with_capacity(n);
    let mut current = start_index;
    loop {
        out.push(current);
        taken[current] = true;
        if out.len() == n {
            return Ok(out);
        }
        let c = pts[current];
        let mut best = usize::MAX;
        let mut best_d = f64::NEG_INFINITY;
        for i in 0..total {
            if taken[i] {
                continue;
            }
            let d = (pts[i] - c).norm_squared();
            if d < min_d2[i] {
                min_d2[i] = d;
            }
            if min_d2[i] > best_d {
                best_d = min_d2[i];
                best = i;
            }
        }
        current = best;
    }
}

/// PCA plane normal of the `k` nearest neighbours (the point included),
/// flipped to face the camera at the origin.
pub fn estimate_normals(cloud: &PointCloud, k_neighbors: usize) -> Result<Vec<Vector3<f64>>, RgbdError> {
    if k_neighbors < 3 || cloud.len() <= k_neighbors {
        return Err(RgbdError::TooFewPoints { points: cloud.len(), k: k_neighbors });
    }
    let index = PointIndex::new(&cloud.points);
    Ok(normals_at(&cloud.points, &cloud.points, &index, k_neighbors))
}

/// Normals at `queries` fitted to their `k` nearest points of `reference`,
/// facing the camera.
pub fn normals_near(queries: &[Vector3<f64>], reference: &PointCloud, k: usize) -> Vec<Vector3<f64>> {
    if reference.is_empty() {
        return vec![Vector3::zeros(); queries.len()];
    }
    let index = PointIndex::new(&reference.points);
    normals_at(queries, &reference.points, &index, k.min(reference.len()).max(1))
}

/// Normals at `queries`, fitted to neighbours taken from `reference`.
pub(crate) fn normals_at(
    queries: &[Vector3<f64>],
    reference: &[Vector3<f64>],
    index: &PointIndex,
    k: usize,
) -> Vec<Vector3<f64>> {
    queries
        .iter()
        .map(|q| {
            let nbrs = index.nearest_k(q, k);
            let mean = nbrs.iter().map(|&(i, _)| reference[i]).sum::<Vector3<f64>>() / nbrs.len() as f64;
            let mut cov = Matrix3::zeros();
            for &(i, _) in &nbrs {
                let d = reference[i] - mean;
                cov += d * d.transpose();
            }
            let eig = cov.symmetric_eigen();
            let (imin, _) =
                eig.eigenvalues
                    .iter()
                    .enumerate()
                    .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
            let mut n: Vector3<f64> = eig.eigenvectors.column(imin).into_owned().normalize();
            let facing = n.dot(q);
            if facing > 0.0 || (facing == 0.0 && n.z > 0.0) {
                n = -n;
            }
            n
        })
        .collect()
}
