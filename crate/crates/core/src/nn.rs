//! Nearest-neighbour lookup over 3D points, backed by a static k-d tree.

use std::num::NonZero;

use kiddo::immutable::float::kdtree::ImmutableKdTree;
use kiddo::SquaredEuclidean;
use nalgebra::Vector3;

pub struct PointIndex {
    tree: ImmutableKdTree<f64, u32, 3, 32>,
    len: usize,
}

impl PointIndex {
    /// Panics on an empty slice; callers check emptiness first.
    pub fn new(points: &[Vector3<f64>]) -> Self {
        assert!(!points.is_empty(), "cannot index an empty point set");
        let raw: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        PointIndex { tree: ImmutableKdTree::new_from_slice(&raw), len: points.len() }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `(index, squared distance)` of the closest point.
    pub fn nearest(&self, q: &Vector3<f64>) -> (usize, f64) {
        let nn = self.tree.nearest_one::<SquaredEuclidean>(&[q.x, q.y, q.z]);
        (nn.item as usize, nn.distance)
    }

    /// Up to `k` closest points, nearest first, ties by index.
    pub fn nearest_k(&self, q: &Vector3<f64>, k: usize) -> Vec<(usize, f64)> {
        let k = k.min(self.len);
        let Some(k) = NonZero::new(k) else {
            return Vec::new();
        };
        let mut out: Vec<(usize, f64)> = self
            .tree
            .nearest_n::<SquaredEuclidean>(&[q.x, q.y, q.z], k)
            .into_iter()
            .map(|nn| (nn.item as usize, nn.distance))
            .collect();
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        out
    }

    /// All points within `radius` (inclusive), sorted by index.
    pub fn within(&self, q: &Vector3<f64>, radius: f64) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = self
            .tree
            .within::<SquaredEuclidean>(&[q.x, q.y, q.z], radius * radius)
            .into_iter()
            .map(|nn| (nn.item as usize, nn.distance))
            .collect();
        out.sort_by_key(|&(i, _)| i);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_brute_force_on_planar_grid() {
        // many equal z values: a mutable k-d tree with small buckets would choke
        let pts: Vec<_> = (0..400).map(|i| Vector3::new((i % 20) as f64 * 0.01, (i / 20) as f64 * 0.01, 1.0)).collect();
        let index = PointIndex::new(&pts);
        let q = Vector3::new(0.053, 0.071, 1.002);
        let (i, d2) = index.nearest(&q);
        let brute = pts.iter().map(|p| (p - q).norm_squared()).fold(f64::INFINITY, f64::min);
        assert!((d2 - brute).abs() < 1e-15);
        assert!(((pts[i] - q).norm_squared() - brute).abs() < 1e-15);
        let knn = index.nearest_k(&q, 5);
        assert_eq!(knn.len(), 5);
        assert!(knn.windows(2).all(|w| w[0].1 <= w[1].1));
    }
}
