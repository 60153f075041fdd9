//! Handcrafted dense descriptors standing in for a learned RGBD backbone.
//!
//! Each descriptor has [`DESCRIPTOR_DIM`] = 32 channels:
//! - 8 color channels: pixel RGB, window mean RGB, window luminance spread,
//!   window chroma spread;
//! - 24 geometry channels: a soft histogram over 3 distance shells × 8 bins
//!   of `|n · d̂|`, the angle between the point normal and the direction to
//!   each neighbour within `geometry_radius`.
//!
//! The geometry histogram depends only on distances and unsigned angles, so
//! it is unchanged by a rigid motion of the cloud.

use nalgebra::{DMatrix, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sampling::{farthest_point_sample, normals_at};
use super::{RgbdError, RgbdPatch};
use crate::geom::PointCloud;
use crate::nn::PointIndex;

pub const DESCRIPTOR_DIM: usize = 32;
pub const COLOR_DIM: usize = 8;
const ANGLE_BINS: usize = 8;
const SHELLS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureParams {
    pub n_points: usize,
    pub normal_neighbors: usize,
    /// Neighbourhood radius of the geometry histogram (m).
    pub geometry_radius: f64,
    /// Half-width of the color statistics window (pixels).
    pub color_window: usize,
    pub color_weight: f64,
    pub geometry_weight: f64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        FeatureParams {
            n_points: 512,
            normal_neighbors: 16,
            geometry_radius: 0.03,
            color_window: 3,
            color_weight: 1.0,
            geometry_weight: 1.0,
        }
    }
}

/// Sampled points with one descriptor row each.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCloud {
    pub points: Vec<Vector3<f64>>,
    /// `N × d`, one row per point.
    pub descriptors: DMatrix<f64>,
    /// `(row, col)` of the patch pixel each point came from.
    pub source_pixels: Vec<(usize, usize)>,
}

impl FeatureCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.descriptors.ncols()
    }

    pub fn validate(&self) -> Result<(), RgbdError> {
        if self.descriptors.nrows() != self.points.len() || self.source_pixels.len() != self.points.len() {
            return Err(RgbdError::ShapeMismatch(format!(
                "{} points, {} descriptors, {} pixels",
                self.points.len(),
                self.descriptors.nrows(),
                self.source_pixels.len()
            )));
        }
        Ok(())
    }
}

fn luminance(c: &[f64; 3]) -> f64 {
    0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]
}

fn color_channels(patch: &RgbdPatch, row: usize, col: usize, half: usize) -> [f64; COLOR_DIM] {
    let center = patch.rgb[patch.index(row, col)];
    let mut sum = [0.0; 3];
    let mut sum_sq = [0.0; 3];
    let mut lum = 0.0;
    let mut lum_sq = 0.0;
    let mut count = 0.0;
    let r0 = row.saturating_sub(half);
    let r1 = (row + half).min(patch.height - 1);
    let c0 = col.saturating_sub(half);
    let c1 = (col + half).min(patch.width - 1);
    for r in r0..=r1 {
        for c in c0..=c1 {
            let i = patch.index(r, c);
            if !patch.mask[i] {
                continue;
            }
            let px = patch.rgb[i];
            for k in 0..3 {
                sum[k] += px[k];
                sum_sq[k] += px[k] * px[k];
            }
            let l = luminance(&px);
            lum += l;
            lum_sq += l * l;
            count += 1.0;
        }
    }
    // the center pixel is masked, so count >= 1
    let mean = sum.map(|s| s / count);
    let chroma_var = (0..3).map(|k| (sum_sq[k] / count - mean[k] * mean[k]).max(0.0)).sum::<f64>() / 3.0;
    let lum_var = (lum_sq / count - (lum / count).powi(2)).max(0.0);
    [
        2.0 * center[0] - 1.0,
        2.0 * center[1] - 1.0,
        2.0 * center[2] - 1.0,
        2.0 * mean[0] - 1.0,
        2.0 * mean[1] - 1.0,
        2.0 * mean[2] - 1.0,
        4.0 * lum_var.sqrt(),
        4.0 * chroma_var.sqrt(),
    ]
}

/// Linear split of `x ∈ [0, 1]` between the two nearest of `bins` centers.
fn soft_bin(x: f64, bins: usize) -> [(usize, f64); 2] {
    let pos = (x * bins as f64 - 0.5).clamp(0.0, (bins - 1) as f64);
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(bins - 1);
    let t = pos - lo as f64;
    [(lo, 1.0 - t), (hi, t)]
}

/// Rigid-invariant shell/angle histograms for each `(point, normal)` pair,
/// built from neighbours in `context`.
pub fn geometry_histograms(
    points: &[Vector3<f64>],
    normals: &[Vector3<f64>],
    context: &[Vector3<f64>],
    context_index: &PointIndex,
    radius: f64,
) -> Vec<[f64; SHELLS * ANGLE_BINS]> {
    points
        .iter()
        .zip(normals)
        .map(|(p, n)| {
            let mut hist = [0.0; SHELLS * ANGLE_BINS];
            let mut total = 0.0;
            for (j, d2) in context_index.within(p, radius) {
                let dist = d2.sqrt();
                if dist < 1e-9 {
                    continue;
                }
                let r = dist / radius;
                // fade out toward the boundary so the histogram is continuous
                let w = ((1.0 - r) / 0.2).min(1.0);
                if w <= 0.0 {
                    continue;
                }
                let cos = (n.dot(&(context[j] - p)) / dist).abs().min(1.0);
                for (shell, ws) in soft_bin(r, SHELLS) {
                    for (bin, wa) in soft_bin(cos, ANGLE_BINS) {
                        hist[shell * ANGLE_BINS + bin] += w * ws * wa;
                    }
                }
                total += w;
            }
            if total > 0.0 {
                hist.iter_mut().for_each(|h| *h /= total);
            }
            hist
        })
        .collect()
}

/// Back-projects the masked patch, farthest-point-samples `n_points` of it
/// and describes each sample by color and local shape. Deterministic for a
/// given `(patch, params, seed)`; the seed only picks the sampling start.
pub fn extract_toy_features(patch: &RgbdPatch, params: &FeatureParams, seed: u64) -> Result<FeatureCloud, RgbdError> {
    let (cloud, pixels) = patch.backproject();
    if cloud.is_empty() {
        return Err(RgbdError::EmptyMask);
    }
    let n = params.n_points.min(cloud.len());
    let start = ChaCha8Rng::seed_from_u64(seed).random_range(0..cloud.len());
    let picked = farthest_point_sample(&cloud, n, start)?;

    let index = PointIndex::new(&cloud.points);
    let sample: Vec<Vector3<f64>> = picked.iter().map(|&i| cloud.points[i]).collect();
    let k = params.normal_neighbors.min(cloud.len()).max(1);
    let normals = normals_at(&sample, &cloud.points, &index, k);
    let hists = geometry_histograms(&sample, &normals, &cloud.points, &index, params.geometry_radius);

    let mut descriptors = DMatrix::zeros(n, DESCRIPTOR_DIM);
    let mut source_pixels = Vec::with_capacity(n);
    for (row_idx, &i) in picked.iter().enumerate() {
        let (r, c) = pixels[i];
        source_pixels.push((r, c));
        let color = color_channels(patch, r, c, params.color_window);
        let mut row = [0.0; DESCRIPTOR_DIM];
        for k in 0..COLOR_DIM {
            row[k] = params.color_weight * color[k];
        }
        for k in 0..SHELLS * ANGLE_BINS {
            row[COLOR_DIM + k] = params.geometry_weight * hists[row_idx][k];
        }
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        for k in 0..DESCRIPTOR_DIM {
            descriptors[(row_idx, k)] = if norm > 0.0 {
                row[k] / norm
            } else if k == 0 {
                1.0
            } else {
                0.0
            };
        }
    }
    Ok(FeatureCloud { points: sample, descriptors, source_pixels })
}

/// Convenience for tests and diagnostics: the sampled cloud only.
pub fn sampled_cloud(features: &FeatureCloud) -> PointCloud {
    PointCloud::new(features.points.clone())
}
