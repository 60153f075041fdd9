mod common;

use common::*;
use nalgebra::Vector3;
use posekit::geom::Pose;
use posekit::synth::dataset::{generate_dataset, DatasetSpec};
use posekit::synth::*;
use proptest::prelude::*;
use rand::Rng;

fn texel_range(t: &Texture) -> ([f64; 3], [f64; 3]) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for px in &t.data {
        for c in 0..3 {
            lo[c] = lo[c].min(px[c]);
            hi[c] = hi[c].max(px[c]);
        }
    }
    (lo, hi)
}

fn any_kind() -> impl Strategy<Value = MeshKind> {
    prop::sample::select(MeshKind::ALL.to_vec())
}

fn mesh(kind: MeshKind, seed: u64, pattern: TexturePattern) -> TexturedMesh {
    let params = MeshParams {
        extent: [0.1, 0.08, 0.06],
        segments: 16,
        rings: 8,
        pattern,
        texture_size: 32,
        ..Default::default()
    };
    gen_procedural_mesh(kind, &params, seed).unwrap()
}

fn view_pose(seed: u64) -> Pose {
    let mut r = rng(seed);
    Pose::new(
        common::random_rotation(&mut r),
        Vector3::new(r.random_range(-0.03..0.03), r.random_range(-0.03..0.03), 0.4),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn blended_colors_stay_in_texel_hull(kind in any_kind(), seed in any::<u64>(), a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let m = mesh(kind, seed, TexturePattern::Noise);
        let (lo, hi) = texel_range(&m.texture);
        let (a, b) = if a + b > 1.0 { (1.0 - a, 1.0 - b) } else { (a, b) };
        let tri = (seed as usize) % m.triangles.len();
        let c = blend_texture_color(&m, tri, [a, b, 1.0 - a - b]).unwrap();
        for ch in 0..3 {
            prop_assert!(c[ch] >= lo[ch] - 1e-12 && c[ch] <= hi[ch] + 1e-12);
        }
        let patch = rasterize(&m, &view_pose(seed), &small_intrinsics());
        for (px, &on) in patch.rgb.iter().zip(&patch.mask) {
            if on {
                for ch in 0..3 {
                    prop_assert!(px[ch] >= lo[ch] - 1e-12 && px[ch] <= hi[ch] + 1e-12);
                }
            }
        }
    }

    #[test]
    fn deformation_is_axis_scaling(kind in any_kind(), seed in any::<u64>(), lo in 0.5..1.0f64, span in 0.0..0.5f64) {
        let m = mesh(kind, seed, TexturePattern::Checker);
        let d = deform_mesh(&m, [(lo, lo + span); 3], seed).unwrap();
        prop_assert_eq!(&d.triangles, &m.triangles);
        prop_assert_eq!(&d.uvs, &m.uvs);
        // recover one factor per axis from the vertex with the largest coordinate
        for axis in 0..3 {
            let (i, v) = m.vertices.iter().enumerate().max_by(|x, y| x.1[axis].abs().total_cmp(&y.1[axis].abs())).unwrap();
            let f = d.vertices[i][axis] / v[axis];
            prop_assert!(f >= lo - 1e-12 && f <= lo + span + 1e-12);
            for (p, q) in m.vertices.iter().zip(&d.vertices) {
                prop_assert!((q[axis] - f * p[axis]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn deform_then_render_equals_render_of_scaled(kind in any_kind(), seed in any::<u64>(), s in 0.7..1.3f64) {
        let m = mesh(kind, seed, TexturePattern::Gradient);
        let pose = view_pose(seed);
        let k = small_intrinsics();
        let a = rasterize(&deform_mesh(&m, [(s, s), (1.0, 1.0), (s, s)], seed).unwrap(), &pose, &k);
        let b = rasterize(&scale_mesh(&m, [s, 1.0, s]), &pose, &k);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn bad_barycentrics_are_rejected(a in -1.0..-1e-6f64) {
        let m = mesh(MeshKind::Box, 0, TexturePattern::Noise);
        prop_assert!(matches!(blend_texture_color(&m, 0, [a, 0.5, 0.5 - a]), Err(SynthError::InvalidBarycentric(_))));
        prop_assert!(blend_texture_color(&m, 0, [0.5, 0.5, 0.1]).is_err());
        prop_assert!(blend_texture_color(&m, m.triangles.len(), [1.0, 0.0, 0.0]).is_err());
    }
}

#[test]
fn rendered_depth_lies_on_the_surface() {
    for seed in 0..4 {
        let spec = random_scene(seed);
        let render = compose_scene(&spec, seed);
        let (ok, total) = depth_surface_agreement(&spec, &render);
        assert!(total > 100, "seed {seed}: only {total} masked pixels");
        assert!(ok as f64 >= 0.999 * total as f64, "seed {seed}: {ok}/{total}");
    }
}

#[test]
fn masks_partition_the_foreground() {
    let spec = random_scene(3);
    let r = compose_scene(&spec, 3);
    for idx in 0..r.patch.mask.len() {
        let owners = r.masks.iter().filter(|m| m[idx]).count();
        assert!(owners <= 1);
        assert_eq!(owners == 1, r.patch.mask[idx]);
        if r.patch.mask[idx] {
            assert!(r.patch.depth[idx] > 0.0 && r.patch.depth[idx] < 1.0);
        } else {
            assert_eq!(r.patch.depth[idx], 1.0);
        }
    }
}

#[test]
fn scenes_render_deterministically() {
    for seed in [0, 1, 7] {
        let spec = random_scene(seed);
        assert_eq!(compose_scene(&spec, seed), compose_scene(&spec, seed));
        assert_eq!(random_scene(seed), spec);
    }
}

fn read_tree(root: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn datasets_are_byte_identical() {
    let spec = DatasetSpec {
        scenes: 4,
        objects_per_scene: 2,
        seed: 5,
        intrinsics: small_intrinsics(),
        model_points: 200,
        ..Default::default()
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    generate_dataset(&spec, a.path()).unwrap();
    generate_dataset(&spec, b.path()).unwrap();
    let ta = read_tree(a.path());
    assert!(ta.iter().any(|(n, _)| n.ends_with("depth.png")));
    assert_eq!(ta, read_tree(b.path()));
    let other = tempfile::tempdir().unwrap();
    generate_dataset(&DatasetSpec { seed: 6, ..spec }, other.path()).unwrap();
    assert_ne!(ta, read_tree(other.path()));
}
