mod common;

use common::*;
use nalgebra::Vector3;
use posekit::geom::{PointCloud, Pose};
use posekit::metrics::*;
use proptest::prelude::*;

fn model_from(seed: u64, n: usize) -> Vec<Vector3<f64>> {
    random_points(&mut rng(seed), n, 0.1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn add_and_adds_match_reference(seed in any::<u64>(), n in 1usize..120) {
        let v = model_from(seed, n);
        let mut r = rng(seed ^ 1);
        let (pred, gt) = (random_pose(&mut r, 0.3), random_pose(&mut r, 0.3));
        let model = ObjectModel::new(v.clone(), false).unwrap();
        let a = add(&model, &pred, &gt).unwrap();
        let s = adds(&model, &pred, &gt).unwrap();
        prop_assert!((a - add_ref(&v, &pred, &gt)).abs() < 1e-12);
        prop_assert!((s - adds_ref(&v, &pred, &gt)).abs() < 1e-12);
        prop_assert!(s >= 0.0 && s <= a);
        prop_assert_eq!(add(&model, &gt, &gt).unwrap(), 0.0);
        prop_assert_eq!(adds(&model, &gt, &gt).unwrap(), 0.0);
    }

    #[test]
    fn metrics_ignore_vertex_order(seed in any::<u64>(), n in 2usize..60) {
        let v = model_from(seed, n);
        let mut shuffled = v.clone();
        shuffled.reverse();
        shuffled.rotate_left(n / 3);
        let mut r = rng(seed ^ 2);
        let (pred, gt) = (random_pose(&mut r, 0.3), random_pose(&mut r, 0.3));
        let m1 = ObjectModel::new(v, false).unwrap();
        let m2 = ObjectModel::new(shuffled, false).unwrap();
        prop_assert!((add(&m1, &pred, &gt).unwrap() - add(&m2, &pred, &gt).unwrap()).abs() < 1e-12);
        prop_assert!((adds(&m1, &pred, &gt).unwrap() - adds(&m2, &pred, &gt).unwrap()).abs() < 1e-12);
        prop_assert_eq!(m1.diameter, m2.diameter);
    }

    #[test]
    fn translation_offset_gives_its_norm(seed in any::<u64>(), n in 1usize..50, t in prop::array::uniform3(-0.2..0.2f64)) {
        let v = model_from(seed, n);
        let gt = random_pose(&mut rng(seed ^ 3), 0.5);
        let t = Vector3::from(t);
        // a pure translation applied after gt moves every vertex by t
        let pred = Pose::new(gt.rotation, gt.translation + t);
        let model = ObjectModel::new(v, false).unwrap();
        prop_assert!((add(&model, &pred, &gt).unwrap() - t.norm()).abs() < 1e-12);
    }

    #[test]
    fn symmetric_vertex_sets_give_zero_adds(seed in any::<u64>(), k in 2usize..8) {
        // a regular k-gon in the xy plane maps onto itself under rot-z(2π/k)
        let radius = 0.05;
        let v: Vec<_> = (0..k)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
                Vector3::new(radius * a.cos(), radius * a.sin(), 0.0)
            })
            .collect();
        let gt = random_pose(&mut rng(seed), 0.5);
        let s = Pose::from_axis_angle(&Vector3::z(), 2.0 * std::f64::consts::PI / k as f64, Vector3::zeros());
        let model = ObjectModel::new(v, true).unwrap();
        prop_assert!(adds(&model, &gt.compose(&s), &gt).unwrap() < 1e-12);
    }

    #[test]
    fn auc_matches_step_integral(errors in prop::collection::vec(0.0..0.15f64, 1..100), max_i in 1usize..100) {
        let max = 0.001 * max_i as f64;
        let got = auc(&errors, max, 0.001).unwrap();
        prop_assert!((0.0..=1.0).contains(&got));
        prop_assert!((got - auc_ref(&errors, max, 0.001)).abs() < 1e-12);
    }

    #[test]
    fn auc_grows_with_the_threshold(errors in prop::collection::vec(0.0..0.15f64, 1..100), a in 1usize..100, b in 1usize..100) {
        let (lo, hi) = (a.min(b), a.max(b));
        let at = |m: usize| auc(&errors, 0.001 * m as f64, 0.001).unwrap();
        prop_assert!(at(lo) <= at(hi) + 1e-12);
    }

    #[test]
    fn diameter_matches_pair_scan(seed in any::<u64>(), n in 1usize..200) {
        let v = model_from(seed, n);
        let d = diameter(&PointCloud::new(v.clone())).unwrap();
        prop_assert_eq!(d, diameter_ref(&v));
        prop_assert_eq!(ObjectModel::new(v, false).unwrap().diameter, d);
    }
}

#[test]
fn square_is_symmetric_under_quarter_turn() {
    let v = vec![
        Vector3::new(1.0, 1.0, 0.0),
        Vector3::new(-1.0, 1.0, 0.0),
        Vector3::new(-1.0, -1.0, 0.0),
        Vector3::new(1.0, -1.0, 0.0),
    ];
    let model = ObjectModel::new(v, true).unwrap();
    let quarter = nalgebra::Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let gt = Pose::from_translation(Vector3::new(0.1, -0.2, 1.0));
    let pred = gt.compose(&Pose::new(quarter, Vector3::zeros()));
    assert_eq!(adds(&model, &pred, &gt).unwrap(), 0.0);
    assert!(add(&model, &pred, &gt).unwrap() > 1.0);
    // under a general pose the same symmetry holds to rounding
    let gt = Pose::from_axis_angle(&Vector3::new(0.3, 0.1, 1.0), 0.4, Vector3::new(0.0, 0.0, 1.0));
    assert!(adds(&model, &gt.compose(&Pose::new(quarter, Vector3::zeros())), &gt).unwrap() < 1e-12);
}

#[test]
fn recall_counts_strictly_below() {
    let errs = [0.0, 0.009, 0.01, 0.02, f64::INFINITY];
    // limit = 0.01 × 1.0 exactly; 0.01 itself is not below it
    assert_eq!(add_recall_at(&errs, 1.0, 0.01).unwrap(), 0.4);
    let report = MetricReport::from_errors(MetricKind::Add, errs.to_vec(), 0.0995).unwrap();
    assert!((0.0..=1.0).contains(&report.auc));
    assert_eq!(report.recall_at_0p1d, 0.4);
}
