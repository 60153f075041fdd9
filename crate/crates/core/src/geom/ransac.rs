use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::umeyama::umeyama_points;
use super::{CorrespondenceSet, GeomError, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacParams {
    pub iterations: usize,
    /// Per-pair Euclidean distance (meters) under which a pair is an inlier.
    pub inlier_threshold: f64,
    /// `None` means `max(10, 10% of pairs)`.
    pub min_inliers: Option<usize>,
    pub seed: u64,
    /// Score hypotheses on the rayon pool. Results are identical either way.
    pub parallel: bool,
}

impl Default for RansacParams {
    fn default() -> Self {
        RansacParams { iterations: 512, inlier_threshold: 0.01, min_inliers: None, seed: 0, parallel: false }
    }
}

impl RansacParams {
    pub fn required_inliers(&self, pairs: usize) -> usize {
        self.min_inliers.unwrap_or_else(|| 10.max(pairs.div_ceil(10)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    pub pose: Pose,
    pub inlier_mask: Vec<bool>,
    /// Mean squared distance over inliers (m²).
    pub residual: f64,
}

impl AlignmentResult {
    pub fn inlier_count(&self) -> usize {
        self.inlier_mask.iter().filter(|&&b| b).count()
    }
}

#[derive(Debug, Clone, Copy)]
struct Hypothesis {
    iteration: usize,
    inliers: usize,
    sq_sum: f64,
    pose: Pose,
}

impl Hypothesis {
    /// More inliers wins, then smaller residual sum, then earlier iteration.
    fn better_than(&self, other: &Hypothesis) -> bool {
        if self.inliers != other.inliers {
            return self.inliers > other.inliers;
        }
        if self.sq_sum != other.sq_sum {
            return self.sq_sum < other.sq_sum;
        }
        self.iteration < other.iteration
    }
}

fn pick_better(a: Option<Hypothesis>, b: Option<Hypothesis>) -> Option<Hypothesis> {
    match (a, b) {
        (Some(a), Some(b)) => Some(if b.better_than(&a) { b } else { a }),
        (a, None) => a,
        (None, b) => b,
    }
}

fn score(pose: &Pose, corr: &CorrespondenceSet, threshold: f64) -> (usize, f64) {
    let t2 = threshold * threshold;
    let mut count = 0;
    let mut sum = 0.0;
    for (p, q) in corr.source.iter().zip(&corr.target) {
        let d2 = (q - pose.apply(p)).norm_squared();
        if d2 <= t2 {
            count += 1;
            sum += d2;
        }
    }
    (count, sum)
}

fn hypothesis(corr: &CorrespondenceSet, params: &RansacParams, iteration: usize) -> Option<Hypothesis> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(iteration as u64);
    let idx = rand::seq::index::sample(&mut rng, corr.len(), 3);
    let src: Vec<Vector3<f64>> = idx.iter().map(|i| corr.source[i]).collect();
    let dst: Vec<Vector3<f64>> = idx.iter().map(|i| corr.target[i]).collect();
    let pose = umeyama_points(&src, &dst).ok()?;
    let (inliers, sq_sum) = score(&pose, corr, params.inlier_threshold);
    Some(Hypothesis { iteration, inliers, sq_sum, pose })
}

/// Robust rigid alignment: minimal 3-pair hypotheses scored by inlier count,
/// then a least-squares refit on the winning inlier set.
///
/// Iteration `i` draws from its own ChaCha stream keyed by `(seed, i)`, so
/// serial and parallel evaluation pick the same winner.
pub fn ransac_align(corr: &CorrespondenceSet, params: &RansacParams) -> Result<AlignmentResult, GeomError> {
    let n = corr.len();
    if corr.target.len() != n {
        return Err(GeomError::LengthMismatch(n, corr.target.len()));
    }
    if n < 3 {
        return Err(GeomError::InsufficientCorrespondences(n));
    }
    let required = params.required_inliers(n);

    let best = if params.parallel {
        (0..params.iterations).into_par_iter().map(|i| hypothesis(corr, params, i)).reduce(|| None, pick_better)
    } else {
        (0..params.iterations).map(|i| hypothesis(corr, params, i)).fold(None, pick_better)
    };
    let best = best.ok_or(GeomError::NoConsensus { best: 0, required })?;
    if best.inliers < required.max(3) {
        return Err(GeomError::NoConsensus { best: best.inliers, required });
    }

    let t2 = params.inlier_threshold * params.inlier_threshold;
    let mask_for = |pose: &Pose| -> Vec<bool> {
        corr.source.iter().zip(&corr.target).map(|(p, q)| (q - pose.apply(p)).norm_squared() <= t2).collect()
    };
    let indices = |mask: &[bool]| -> Vec<usize> { (0..n).filter(|&i| mask[i]).collect() };

    let mut pose = best.pose;
    let mut mask = mask_for(&pose);
    let inl = indices(&mask);
    let sub = corr.subset(&inl);
    if let Ok(refit) = umeyama_points(&sub.source, &sub.target) {
        let refit_mask = mask_for(&refit);
        if refit_mask.iter().filter(|&&b| b).count() >= inl.len() {
            pose = refit;
            mask = refit_mask;
        }
    }

    let inl = indices(&mask);
    let residual = inl.iter().map(|&i| (corr.target[i] - pose.apply(&corr.source[i])).norm_squared()).sum::<f64>()
        / inl.len() as f64;
    Ok(AlignmentResult { pose, inlier_mask: mask, residual })
}
