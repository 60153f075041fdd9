use nalgebra::{Matrix3, Vector3};

use super::{CorrespondenceSet, GeomError, Pose};

const DEGENERACY_RATIO: f64 = 1e-9;

/// Closed-form rigid alignment minimizing `Σ |q_i - (R p_i + T)|²`.
///
/// Scale is fixed to one. Reflections are removed with the usual
/// `diag(1, 1, sign(det(U Vᵀ)))` correction so `R` is always proper.
pub fn umeyama_align(corr: &CorrespondenceSet) -> Result<Pose, GeomError> {
    umeyama_points(&corr.source, &corr.target)
}

pub(crate) fn umeyama_points(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Result<Pose, GeomError> {
    if src.len() != dst.len() {
        return Err(GeomError::LengthMismatch(src.len(), dst.len()));
    }
    let n = src.len();
    if n < 3 {
        return Err(GeomError::InsufficientCorrespondences(n));
    }
    let inv_n = 1.0 / n as f64;
    let mu_src = src.iter().sum::<Vector3<f64>>() * inv_n;
    let mu_dst = dst.iter().sum::<Vector3<f64>>() * inv_n;

    let mut cross = Matrix3::zeros();
    let mut scatter = Matrix3::zeros();
    for (p, q) in src.iter().zip(dst) {
        let dp = p - mu_src;
        let dq = q - mu_dst;
        cross += dq * dp.transpose();
        scatter += dp * dp.transpose();
    }

    // Singular values of the centered source matrix are the square roots of
    // the scatter eigenvalues.
    let mut spread: Vec<f64> = scatter.symmetric_eigenvalues().iter().map(|v| v.max(0.0).sqrt()).collect();
    spread.sort_by(|a, b| b.total_cmp(a));
    if !(spread[0] > 0.0) || spread[1] < DEGENERACY_RATIO * spread[0] {
        return Err(GeomError::DegenerateConfiguration);
    }

    let svd = cross.svd(true, true);
    let u = svd.u.ok_or(GeomError::DegenerateConfiguration)?;
    let v_t = svd.v_t.ok_or(GeomError::DegenerateConfiguration)?;
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let rotation = u * d * v_t;
    let translation = mu_dst - rotation * mu_src;
    Ok(Pose { rotation, translation })
}
