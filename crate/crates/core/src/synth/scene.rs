use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{FrameBuffer, SynthError, Texture, TexturedMesh};
use crate::geom::Pose;
use crate::rgbd::{Intrinsics, RgbdPatch};

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub mesh: TexturedMesh,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub objects: Vec<SceneObject>,
    pub intrinsics: Intrinsics,
    /// Fronto-parallel background plane at this depth (meters).
    pub background_depth: Option<f64>,
    /// Standard deviation of additive Gaussian depth noise (meters); 0 disables it.
    pub depth_noise: f64,
}

impl SceneSpec {
    pub fn new(objects: Vec<SceneObject>, intrinsics: Intrinsics) -> Self {
        SceneSpec { objects, intrinsics, background_depth: None, depth_noise: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneRender {
    /// Full image; its mask is the union of object masks.
    pub patch: RgbdPatch,
    pub masks: Vec<Vec<bool>>,
    pub poses: Vec<Pose>,
}

/// Renders all objects into one shared z-buffer. Each mask marks the pixels
/// its object wins. The seed drives the background texture and depth noise.
pub fn compose_scene(spec: &SceneSpec, seed: u64) -> SceneRender {
    let k = spec.intrinsics;
    let mut fb = FrameBuffer::new(k.width, k.height);
    if let Some(b) = spec.background_depth {
        let bg = Texture::noise(64, seed ^ 0x9e37_79b9_7f4a_7c15);
        for row in 0..k.height {
            for col in 0..k.width {
                let idx = row * k.width + col;
                fb.depth[idx] = b;
                fb.rgb[idx] = bg.sample((col as f64 + 0.5) / k.width as f64, (row as f64 + 0.5) / k.height as f64);
            }
        }
    }
    for (i, obj) in spec.objects.iter().enumerate() {
        fb.draw(&obj.mesh, &obj.pose, &k, i);
    }
    if spec.depth_noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, spec.depth_noise).expect("finite positive std");
        for d in fb.depth.iter_mut().filter(|d| d.is_finite()) {
            *d = (*d + noise.sample(&mut rng)).max(0.0);
        }
    }
    let masks: Vec<Vec<bool>> = (0..spec.objects.len()).map(|i| fb.mask_of(i)).collect();
    let union = fb.owner.iter().map(Option::is_some).collect();
    SceneRender { patch: fb.to_patch(k, union, None), masks, poses: spec.objects.iter().map(|o| o.pose).collect() }
}

/// Uniform random rotation from a normalized 4D Gaussian.
pub fn random_rotation<R: Rng>(rng: &mut R) -> nalgebra::Matrix3<f64> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| normal.sample(rng));
        let n = q.iter().map(|c| c * c).sum::<f64>().sqrt();
        if n > 1e-9 {
            let uq = UnitQuaternion::new_normalize(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]));
            return uq.to_rotation_matrix().into_inner();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlacementParams {
    /// Camera-frame depth range of object centers (meters).
    pub depth_range: (f64, f64),
    /// Gap kept between bounding spheres (meters).
    pub clearance: f64,
    pub max_attempts: usize,
}

impl Default for PlacementParams {
    fn default() -> Self {
        PlacementParams { depth_range: (0.45, 0.75), clearance: 0.005, max_attempts: 10_000 }
    }
}

/// Rejection-samples random rotations and in-view positions so that the
/// objects' bounding spheres neither intersect each other nor leave the image.
pub fn place_objects(
    meshes: &[&TexturedMesh],
    k: &Intrinsics,
    params: &PlacementParams,
    seed: u64,
) -> Result<Vec<Pose>, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut placed: Vec<(Vector3<f64>, f64)> = Vec::new();
    let mut poses = Vec::with_capacity(meshes.len());
    let (z0, z1) = params.depth_range;
    if !(z0 > 0.0 && z0 < z1) {
        return Err(SynthError::InvalidRange(format!("depth range [{z0}, {z1}]")));
    }
    for (i, mesh) in meshes.iter().enumerate() {
        let radius = mesh.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let mut found = None;
        for _ in 0..params.max_attempts {
            let z = rng.random_range(z0..z1);
            // keep the projected bounding circle inside the image
            let mx = radius * k.fx / z;
            let my = radius * k.fy / z;
            let (w, h) = (k.width as f64, k.height as f64);
            if 2.0 * mx >= w || 2.0 * my >= h {
                continue;
            }
            let u = rng.random_range(mx..w - 1.0 - mx);
            let v = rng.random_range(my..h - 1.0 - my);
            let c = k.backproject_pixel(u, v, z);
            if placed.iter().all(|(p, r)| (p - c).norm() > r + radius + params.clearance) {
                found = Some(c);
                break;
            }
        }
        let c =
            found.ok_or_else(|| SynthError::Placement(format!("object {i} after {} attempts", params.max_attempts)))?;
        placed.push((c, radius));
        poses.push(Pose::new(random_rotation(&mut rng), c));
    }
    Ok(poses)
}
