use nalgebra::Vector3;

use super::mesh::blend_unchecked;
use super::TexturedMesh;
use crate::geom::Pose;
use crate::rgbd::{Intrinsics, RgbdPatch};

/// Triangles with a vertex closer than this to the camera plane are skipped.
pub const NEAR_PLANE: f64 = 1e-3;

/// Shared color/depth/owner buffers for one image.
#[derive(Debug, Clone)]
pub struct FrameBuffer {
    pub width: usize,
    pub height: usize,
    /// Nearest surface z so far; `+∞` where nothing was drawn.
    pub depth: Vec<f64>,
    pub rgb: Vec<[f64; 3]>,
    /// Index of the object owning each pixel.
    pub owner: Vec<Option<usize>>,
}

impl FrameBuffer {
    pub fn new(width: usize, height: usize) -> Self {
        let n = width * height;
        FrameBuffer { width, height, depth: vec![f64::INFINITY; n], rgb: vec![[0.0; 3]; n], owner: vec![None; n] }
    }

    pub fn mask_of(&self, object: usize) -> Vec<bool> {
        self.owner.iter().map(|o| *o == Some(object)).collect()
    }

    /// Z-buffers `mesh` at `pose` into the frame. Depth and UV are
    /// interpolated perspective-correctly; ties keep the earlier surface.
    pub fn draw(&mut self, mesh: &TexturedMesh, pose: &Pose, k: &Intrinsics, object: usize) {
        let cam: Vec<Vector3<f64>> = mesh.vertices.iter().map(|v| pose.apply(v)).collect();
        for tri in &mesh.triangles {
            let p = tri.map(|i| cam[i]);
            if p.iter().any(|q| !(q.z > NEAR_PLANE)) {
                continue;
            }
            let s = p.map(|q| (k.fx * q.x / q.z + k.cx, k.fy * q.y / q.z + k.cy));
            let area = edge(s[0], s[1], s[2]);
            if !(area.abs() > 1e-12) {
                continue;
            }
            let xmin = s.iter().map(|q| q.0).fold(f64::INFINITY, f64::min).ceil().max(0.0);
            let xmax = s.iter().map(|q| q.0).fold(f64::NEG_INFINITY, f64::max).floor().min(self.width as f64 - 1.0);
            let ymin = s.iter().map(|q| q.1).fold(f64::INFINITY, f64::min).ceil().max(0.0);
            let ymax = s.iter().map(|q| q.1).fold(f64::NEG_INFINITY, f64::max).floor().min(self.height as f64 - 1.0);
            if xmin > xmax || ymin > ymax {
                continue;
            }
            let inv_z = p.map(|q| 1.0 / q.z);
            // tolerance in units of the normalized edge function, so shared
            // edges leave no cracks
            let eps = -1e-9;
            for y in ymin as usize..=ymax as usize {
                for x in xmin as usize..=xmax as usize {
                    let px = (x as f64, y as f64);
                    let l0 = edge(s[1], s[2], px) / area;
                    let l1 = edge(s[2], s[0], px) / area;
                    let l2 = edge(s[0], s[1], px) / area;
                    if l0 < eps || l1 < eps || l2 < eps {
                        continue;
                    }
                    let (l0, l1, l2) = (l0.max(0.0), l1.max(0.0), l2.max(0.0));
                    let w = [l0 * inv_z[0], l1 * inv_z[1], l2 * inv_z[2]];
                    let sum = w[0] + w[1] + w[2];
                    let z = 1.0 / sum;
                    let idx = y * self.width + x;
                    if !(z < self.depth[idx]) {
                        continue;
                    }
                    let bary = [w[0] / sum, w[1] / sum, w[2] / sum];
                    self.depth[idx] = z;
                    self.rgb[idx] = blend_unchecked(mesh, tri, bary);
                    self.owner[idx] = Some(object);
                }
            }
        }
    }

    /// Converts to a patch; pixels without a surface get depth 0.
    pub fn to_patch(&self, k: Intrinsics, mask: Vec<bool>, pose: Option<Pose>) -> RgbdPatch {
        RgbdPatch {
            width: self.width,
            height: self.height,
            rgb: self.rgb.clone(),
            depth: self.depth.iter().map(|&d| if d.is_finite() { d } else { 0.0 }).collect(),
            mask,
            intrinsics: k,
            pose,
        }
    }
}

#[inline]
fn edge(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

/// Renders a single object. Its mask marks every pixel it covers; the
/// patch carries `pose` as ground truth.
pub fn rasterize(mesh: &TexturedMesh, pose: &Pose, k: &Intrinsics) -> RgbdPatch {
    let mut fb = FrameBuffer::new(k.width, k.height);
    fb.draw(mesh, pose, k, 0);
    let mask = fb.mask_of(0);
    fb.to_patch(*k, mask, Some(*pose))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_procedural_mesh, MeshKind, MeshParams, Texture};

    fn k() -> Intrinsics {
        Intrinsics::new(100.0, 100.0, 31.5, 23.5, 64, 48).unwrap()
    }

    #[test]
    fn fronto_parallel_triangle_depth() {
        let mesh = TexturedMesh {
            vertices: vec![Vector3::new(-0.5, -0.5, 0.0), Vector3::new(0.5, -0.5, 0.0), Vector3::new(0.0, 0.5, 0.0)],
            triangles: vec![[0, 1, 2]],
            uvs: vec![[0.0, 0.0], [1.0, 0.0], [0.5, 1.0]],
            texture: Texture::constant([0.3, 0.6, 0.9]),
        };
        let pose = Pose::from_translation(Vector3::new(0.0, 0.0, 1.0));
        let patch = rasterize(&mesh, &pose, &k());
        let center = patch.index(23, 31);
        assert!(patch.mask[center]);
        assert_eq!(patch.depth[center], 1.0);
        assert_eq!(patch.rgb[center], [0.3, 0.6, 0.9]);
    }

    #[test]
    fn behind_camera_is_empty() {
        let mesh = gen_procedural_mesh(MeshKind::Box, &MeshParams::default(), 0).unwrap();
        let patch = rasterize(&mesh, &Pose::from_translation(Vector3::new(0.0, 0.0, -1.0)), &k());
        assert_eq!(patch.mask_count(), 0);
        assert!(patch.depth.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn oblique_plane_depth_is_exact() {
        // perspective-correct interpolation puts every pixel on the true plane
        let mesh =
            gen_procedural_mesh(MeshKind::Box, &MeshParams { extent: [0.4, 0.4, 0.01], ..Default::default() }, 0)
                .unwrap();
        let pose = Pose::from_axis_angle(&Vector3::new(1.0, 0.3, 0.0), 1.0, Vector3::new(0.0, 0.0, 0.8));
        let patch = rasterize(&mesh, &pose, &k());
        let (cloud, _) = patch.backproject();
        assert!(cloud.len() > 100);
        let inv = pose.inverse();
        for p in &cloud.points {
            let q = inv.apply(p);
            let gaps = [0.2 - q.x.abs(), 0.2 - q.y.abs(), 0.005 - q.z.abs()];
            let d = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(d.abs() < 1e-9, "{d}");
        }
    }
}
