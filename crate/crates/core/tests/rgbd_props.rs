mod common;

use common::*;
use nalgebra::Vector3;
use posekit::geom::{transform_points, PointCloud, Pose};
use posekit::nn::PointIndex;
use posekit::pipeline::crop_object;
use posekit::rgbd::*;
use posekit::synth::{gen_procedural_mesh, rasterize, MeshKind, MeshParams};
use proptest::prelude::*;
use rand::Rng;

fn fps_oracle(points: &[Vector3<f64>], n: usize, start: usize) -> Vec<usize> {
    greedy_oracle(points, n, start, |a, b| (a - b).norm_squared())
}

fn rendered_view(pose: &Pose) -> RgbdPatch {
    let mesh =
        gen_procedural_mesh(MeshKind::Composite, &MeshParams { extent: [0.1, 0.08, 0.06], ..Default::default() }, 7)
            .unwrap();
    let k = Intrinsics::new(600.0, 600.0, 319.5, 239.5, 640, 480).unwrap();
    crop_object(&rasterize(&mesh, pose, &k), 0.1, 255).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn project_inverts_backproject(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (w, h) = (r.random_range(16..2000usize), r.random_range(16..2000usize));
        let k = Intrinsics::new(
            r.random_range(50.0..2000.0),
            r.random_range(50.0..2000.0),
            r.random_range(0.0..w as f64),
            r.random_range(0.0..h as f64),
            w,
            h,
        )
        .unwrap();
        for _ in 0..10_000 {
            let (u, v, z) = (r.random_range(0.0..w as f64), r.random_range(0.0..h as f64), r.random_range(0.1..10.0));
            let p = k.backproject_pixel(u, v, z);
            let (u2, v2, z2) = project(&p, &k).unwrap();
            prop_assert!((u - u2).abs() < 1e-9 && (v - v2).abs() < 1e-9 && z == z2);
        }
    }

    #[test]
    fn fps_matches_oracle(seed in any::<u64>(), total in 1usize..=256, nf in 0.0..1.0f64, sf in 0.0..1.0f64) {
        let mut r = rng(seed);
        let pts = random_points(&mut r, total, 1.0);
        let n = 1 + ((total - 1) as f64 * nf) as usize;
        let start = ((total - 1) as f64 * sf) as usize;
        let got = farthest_point_sample(&PointCloud::new(pts.clone()), n, start).unwrap();
        prop_assert_eq!(got, fps_oracle(&pts, n, start));
    }

    #[test]
    fn geometry_histograms_are_rigid_invariant(seed in any::<u64>()) {
        let mut r = rng(seed);
        // a bumpy sheet gives non-trivial angle statistics
        let pts: Vec<Vector3<f64>> = (0..400)
            .map(|_| {
                let (x, y): (f64, f64) = (r.random_range(-0.05..0.05), r.random_range(-0.05..0.05));
                Vector3::new(x, y, 0.5 + 0.01 * (60.0 * x).sin() * (40.0 * y).cos())
            })
            .collect();
        let cloud = PointCloud::new(pts.clone());
        let normals = estimate_normals(&cloud, 10).unwrap();
        let index = PointIndex::new(&pts);
        let queries: Vec<usize> = (0..20).map(|i| i * 20).collect();
        let qp: Vec<_> = queries.iter().map(|&i| pts[i]).collect();
        let qn: Vec<_> = queries.iter().map(|&i| normals[i]).collect();
        let before = geometry_histograms(&qp, &qn, &pts, &index, 0.03);

        let motion = random_pose(&mut r, 1.0);
        let moved = transform_points(&cloud, &motion).points;
        let moved_index = PointIndex::new(&moved);
        let mp: Vec<_> = qp.iter().map(|p| motion.apply(p)).collect();
        let mn: Vec<_> = qn.iter().map(|n| motion.rotation * n).collect();
        let after = geometry_histograms(&mp, &mn, &moved, &moved_index, 0.03);
        for (a, b) in before.iter().zip(&after) {
            for (x, y) in a.iter().zip(b) {
                prop_assert!((x - y).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn features_are_deterministic_and_unit_norm() {
    let patch = rendered_view(&Pose::from_axis_angle(&Vector3::new(1.0, 0.5, 0.2), 0.7, Vector3::new(0.0, 0.0, 0.6)));
    let params = FeatureParams::default();
    let a = extract_toy_features(&patch, &params, 3).unwrap();
    let b = extract_toy_features(&patch.clone(), &params, 3).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 512);
    assert_eq!(a.dim(), DESCRIPTOR_DIM);
    for row in a.descriptors.row_iter() {
        assert!((row.norm() - 1.0).abs() < 1e-9);
    }
    a.validate().unwrap();
}

#[test]
fn corresponding_points_have_closer_descriptors() {
    let p1 = Pose::from_axis_angle(&Vector3::new(1.0, 0.5, 0.2), 0.7, Vector3::new(0.0, 0.0, 0.6));
    let p2 = p1.compose(&Pose::from_axis_angle(&Vector3::new(0.0, 1.0, 0.3), 0.35, Vector3::zeros()));
    let params = FeatureParams::default();
    let f1 = extract_toy_features(&rendered_view(&p1), &params, 0).unwrap();
    let f2 = extract_toy_features(&rendered_view(&p2), &params, 0).unwrap();
    let obj1: Vec<_> = f1.points.iter().map(|p| p1.inverse().apply(p)).collect();
    let index = PointIndex::new(&obj1);
    let dist = |i: usize, j: usize| (f1.descriptors.row(i) - f2.descriptors.row(j)).norm();

    let mut matched = Vec::new();
    for (j, q) in f2.points.iter().enumerate() {
        let (i, d2) = index.nearest(&p2.inverse().apply(q));
        if d2 < 0.003f64.powi(2) {
            matched.push(dist(i, j));
        }
    }
    let mut r = rng(5);
    let random: Vec<f64> = (0..2000).map(|_| dist(r.random_range(0..f1.len()), r.random_range(0..f2.len()))).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(matched.len() > 50, "only {} ground-truth pairs", matched.len());
    assert!(mean(&matched) < mean(&random), "{} vs {}", mean(&matched), mean(&random));
}
