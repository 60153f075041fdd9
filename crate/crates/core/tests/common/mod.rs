//! Independent reference implementations and generators shared by the
//! integration tests. Nothing here calls into the code under test except to
//! build inputs.
#![allow(dead_code)]

use nalgebra::{Matrix3, Vector3};
use posekit::geom::{Pose, Quaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform random unit quaternion from a normalized 4D Gaussian.
pub fn random_quat(rng: &mut ChaCha8Rng) -> [f64; 4] {
    loop {
        let v: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.map(|x| x / n);
        }
    }
}

pub fn to_quaternion(q: [f64; 4]) -> Quaternion {
    Quaternion { w: q[0], x: q[1], y: q[2], z: q[3] }
}

/// Rotation matrix of a unit quaternion (w, x, y, z), written out by hand.
pub fn quat_matrix(q: [f64; 4]) -> Matrix3<f64> {
    let [w, x, y, z] = q;
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

pub fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    quat_matrix(random_quat(rng))
}

pub fn random_pose(rng: &mut ChaCha8Rng, t_range: f64) -> Pose {
    let r = random_rotation(rng);
    let t = Vector3::new(
        rng.random_range(-t_range..t_range),
        rng.random_range(-t_range..t_range),
        rng.random_range(-t_range..t_range),
    );
    Pose::new(r, t)
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize, half: f64) -> Vec<Vector3<f64>> {
    (0..n)
        .map(|_| {
            Vector3::new(rng.random_range(-half..half), rng.random_range(-half..half), rng.random_range(-half..half))
        })
        .collect()
}

pub fn quat_dist_ref(a: [f64; 4], b: [f64; 4]) -> f64 {
    let minus: f64 = (0..4).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt();
    let plus: f64 = (0..4).map(|i| (a[i] + b[i]).powi(2)).sum::<f64>().sqrt();
    minus.min(plus)
}

/// Greedy max-min selection by full recomputation at every step: the next
/// element maximizes its distance to the closest already-chosen element,
/// ties to the lowest index.
pub fn greedy_oracle<T>(items: &[T], k: usize, start: usize, dist: impl Fn(&T, &T) -> f64) -> Vec<usize> {
    let mut chosen = vec![start];
    while chosen.len() < k {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..items.len() {
            if chosen.contains(&i) {
                continue;
            }
            let d = chosen.iter().map(|&c| dist(&items[i], &items[c])).fold(f64::INFINITY, f64::min);
            if best.is_none() || d > best.unwrap().1 {
                best = Some((i, d));
            }
        }
        chosen.push(best.unwrap().0);
    }
    chosen
}

fn transform(p: &Pose, v: &Vector3<f64>) -> Vector3<f64> {
    p.rotation * v + p.translation
}

pub fn add_ref(vertices: &[Vector3<f64>], pred: &Pose, gt: &Pose) -> f64 {
    let mut s = 0.0;
    for v in vertices {
        s += (transform(pred, v) - transform(gt, v)).norm();
    }
    s / vertices.len() as f64
}

pub fn adds_ref(vertices: &[Vector3<f64>], pred: &Pose, gt: &Pose) -> f64 {
    let mut s = 0.0;
    for v1 in vertices {
        let a = transform(pred, v1);
        let mut best = f64::INFINITY;
        for v2 in vertices {
            let d = (a - transform(gt, v2)).norm();
            if d < best {
                best = d;
            }
        }
        s += best;
    }
    s / vertices.len() as f64
}

pub fn diameter_ref(vertices: &[Vector3<f64>]) -> f64 {
    let mut d: f64 = 0.0;
    for a in vertices {
        for b in vertices {
            d = d.max((a - b).norm());
        }
    }
    d
}

/// Mean over thresholds `step, 2·step, …, max` of the fraction of errors
/// strictly below the threshold.
pub fn auc_ref(errors: &[f64], max: f64, step: f64) -> f64 {
    let n = (max / step + 1e-9).floor() as usize;
    let mut total = 0.0;
    for i in 1..=n {
        let t = step * i as f64;
        total += errors.iter().filter(|&&e| e < t).count() as f64 / errors.len() as f64;
    }
    total / n as f64
}

pub fn rotation_angle_deg(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let r = a.transpose() * b;
    ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos().to_degrees()
}

/// Closest point on triangle `abc` to `p`, by Voronoi-region case analysis.
pub fn closest_on_triangle(p: Vector3<f64>, a: Vector3<f64>, b: Vector3<f64>, c: Vector3<f64>) -> Vector3<f64> {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// Distance from `p` to the nearest triangle of a mesh given in the same frame.
pub fn mesh_distance(p: &Vector3<f64>, vertices: &[Vector3<f64>], triangles: &[[usize; 3]]) -> f64 {
    triangles
        .iter()
        .map(|t| (closest_on_triangle(*p, vertices[t[0]], vertices[t[1]], vertices[t[2]]) - p).norm())
        .fold(f64::INFINITY, f64::min)
}

/// Small pinhole camera used by the rendering tests.
pub fn small_intrinsics() -> posekit::rgbd::Intrinsics {
    posekit::rgbd::Intrinsics { fx: 300.0, fy: 280.0, cx: 159.5, cy: 119.5, width: 320, height: 240 }
}

/// One to three random procedural objects placed in view, with a background
/// plane on odd seeds.
pub fn random_scene(seed: u64) -> posekit::synth::SceneSpec {
    use posekit::synth::*;
    let mut r = rng(seed);
    let k = small_intrinsics();
    let n = r.random_range(1..=3);
    let meshes: Vec<TexturedMesh> = (0..n)
        .map(|i| {
            let kind = MeshKind::ALL[r.random_range(0..4)];
            let extent = std::array::from_fn(|_| r.random_range(0.05..0.12));
            let params = MeshParams { extent, segments: 24, rings: 12, texture_size: 64, ..Default::default() };
            let mesh = gen_procedural_mesh(kind, &params, seed * 31 + i as u64).unwrap();
            deform_mesh(&mesh, [(0.8, 1.2); 3], seed ^ i as u64).unwrap()
        })
        .collect();
    let refs: Vec<&TexturedMesh> = meshes.iter().collect();
    let poses = place_objects(&refs, &k, &PlacementParams::default(), seed).unwrap();
    let objects = meshes.into_iter().zip(poses).map(|(mesh, pose)| SceneObject { mesh, pose }).collect();
    let mut spec = SceneSpec::new(objects, k);
    if seed % 2 == 1 {
        spec.background_depth = Some(1.0);
    }
    spec
}

/// Fraction of masked pixels whose back-projected depth lies within the
/// half-pixel bound `z·max(1/fx, 1/fy)` of the owning object's surface.
pub fn depth_surface_agreement(
    spec: &posekit::synth::SceneSpec,
    render: &posekit::synth::SceneRender,
) -> (usize, usize) {
    let k = spec.intrinsics;
    let patch = &render.patch;
    let (mut ok, mut total) = (0, 0);
    for (obj, mask) in spec.objects.iter().zip(&render.masks) {
        let to_object = obj.pose.inverse();
        for row in 0..k.height {
            for col in 0..k.width {
                let idx = row * k.width + col;
                if !mask[idx] {
                    continue;
                }
                total += 1;
                let z = patch.depth[idx];
                let p = Vector3::new((col as f64 - k.cx) * z / k.fx, (row as f64 - k.cy) * z / k.fy, z);
                let bound = z * (1.0 / k.fx).max(1.0 / k.fy);
                if z > 0.0 && mesh_distance(&to_object.apply(&p), &obj.mesh.vertices, &obj.mesh.triangles) <= bound {
                    ok += 1;
                }
            }
        }
    }
    (ok, total)
}

/// Object pose in front of the camera at 0.5–0.7 m.
pub fn view_pose(rng: &mut ChaCha8Rng) -> Pose {
    let r = random_rotation(rng);
    Pose::new(r, Vector3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(0.5..0.7)))
}

/// Support set of `poses.len()` noiseless single-object renders.
pub fn rendered_support(
    mesh: &posekit::synth::TexturedMesh,
    k: &posekit::rgbd::Intrinsics,
    poses: &[Pose],
    config: &posekit::pipeline::EvalConfig,
) -> posekit::pipeline::SupportSet {
    use posekit::pipeline::{crop_object, SupportSet, SupportView};
    let views = poses
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let full = posekit::synth::rasterize(mesh, p, k);
            let patch = crop_object(&full, config.box_padding, config.patch_size).unwrap();
            SupportView { source: format!("view_{i}"), patch, pose: *p }
        })
        .collect();
    SupportSet { object_id: "obj".into(), views }
}

/// Frobenius rotation error and translation error between two poses.
pub fn pose_gap(a: &Pose, b: &Pose) -> (f64, f64) {
    ((a.rotation - b.rotation).norm(), (a.translation - b.translation).norm())
}

/// elu(x) + 1.
pub fn phi(x: f64) -> f64 {
    if x > 0.0 {
        x + 1.0
    } else {
        x.exp()
    }
}

/// Row i: Σ_j w_ij v_j / Σ_j w_ij with w_ij = φ(q_i)·φ(k_j), summed pair by pair.
pub fn linear_oracle(
    q: &posekit::attention::TokenMatrix,
    k: &posekit::attention::TokenMatrix,
    v: &posekit::attention::TokenMatrix,
) -> nalgebra::DMatrix<f64> {
    let mut out = nalgebra::DMatrix::zeros(q.rows(), v.cols());
    for i in 0..q.rows() {
        let mut z = 0.0;
        for j in 0..k.rows() {
            let w: f64 = (0..q.cols()).map(|c| phi(q.0[(i, c)]) * phi(k.0[(j, c)])).sum();
            z += w;
            for c in 0..v.cols() {
                out[(i, c)] += w * v.0[(j, c)];
            }
        }
        for c in 0..v.cols() {
            out[(i, c)] /= z;
        }
    }
    out
}
