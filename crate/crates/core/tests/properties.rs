use preshape_align::preprocess::resample_indices;
use preshape_align::{
    apply_transform, cull_outliers, knn, measure_pair, pca, to_preshape, Point3, PointCloud, RotationMatrix,
    SimilarityTransform, Vector3,
};
use proptest::prelude::*;

fn point() -> impl Strategy<Value = Point3> {
    (-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64).prop_map(|(x, y, z)| Point3::new(x, y, z))
}

fn cloud(min: usize, max: usize) -> impl Strategy<Value = Vec<Point3>> {
    prop::collection::vec(point(), min..max)
}

fn rotation() -> impl Strategy<Value = RotationMatrix> {
    (-3.1..3.1f64, -1.5..1.5f64, -3.1..3.1f64).prop_map(|(x, y, z)| RotationMatrix::from_euler_zyx(x, y, z))
}

fn similarity() -> impl Strategy<Value = SimilarityTransform> {
    (0.2..5.0f64, rotation(), point())
        .prop_map(|(s, r, t)| SimilarityTransform::new(s, r, t.coords).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn knn_matches_exhaustive_scan(pts in cloud(5, 400), q in point(), k in 1usize..5) {
        let c = PointCloud::new(pts.clone()).unwrap();
        let got = knn(&c, &q, k).unwrap();
        let mut brute: Vec<f64> = pts.iter().map(|p| (p - q).norm_squared()).collect();
        brute.sort_by(f64::total_cmp);
        let dists: Vec<f64> = got.iter().map(|&i| (pts[i] - q).norm_squared()).collect();
        prop_assert_eq!(dists, brute[..k].to_vec());
    }

    #[test]
    fn pca_spectrum_is_rigid_invariant(pts in cloud(4, 200), r in rotation(), t in point()) {
        let a = pca(&pts).unwrap();
        let moved: Vec<Point3> = pts.iter().map(|p| r.matrix() * p + t.coords).collect();
        let b = pca(&moved).unwrap();
        let top = a.eigenvalues[0].abs().max(1.0);
        for i in 0..3 {
            prop_assert!((a.eigenvalues[i] - b.eigenvalues[i]).abs() <= 1e-8 * top);
        }
    }

    #[test]
    fn transform_composition_and_inverse(pts in cloud(1, 50), f in similarity(), g in similarity()) {
        let c = PointCloud::new(pts).unwrap();
        let diag = c.bbox_diagonal().max(1.0);
        let stepwise = apply_transform(&f, &apply_transform(&g, &c));
        let composed = apply_transform(&f.compose(&g), &c);
        let back = apply_transform(&f.inverse(), &apply_transform(&f, &c));
        for i in 0..c.len() {
            prop_assert!((stepwise.points()[i] - composed.points()[i]).norm() <= 1e-7 * diag * 25.0);
            prop_assert!((back.points()[i] - c.points()[i]).norm() <= 1e-7 * diag);
        }
    }

    #[test]
    fn preshape_quotients_out_scale_and_translation(pts in cloud(3, 200), f in similarity()) {
        let c = PointCloud::new(pts).unwrap();
        let a = to_preshape(&c).unwrap();
        let b = to_preshape(&apply_transform(&f, &c)).unwrap();
        let norm: f64 = a.rows().iter().map(|v| v.norm_squared()).sum();
        prop_assert!((norm - 1.0).abs() < 1e-12);
        prop_assert!((b.scale() / a.scale() - f.scale()).abs() < 1e-9 * f.scale());
        for (u, v) in a.rows().iter().zip(b.rows()) {
            prop_assert!((f.rotation().matrix() * u - v).norm() < 1e-9);
        }
    }

    #[test]
    fn local_measure_vanishes_under_similarity(pts in cloud(4, 60), f in similarity()) {
        let a: Vec<Vector3> = pts.iter().map(|p| p.coords).collect();
        let b: Vec<Vector3> = pts.iter().map(|p| f.apply_point(p).coords).collect();
        let m = measure_pair(&b, &a).unwrap();
        prop_assert!(m.measure < 1e-5);
        prop_assert!((m.local_scale - f.scale()).abs() < 1e-7 * f.scale());
    }

    #[test]
    fn local_measure_is_symmetric(a in cloud(8, 9), b in cloud(8, 9)) {
        let a: Vec<Vector3> = a.iter().map(|p| p.coords).collect();
        let b: Vec<Vector3> = b.iter().map(|p| p.coords).collect();
        let ab = measure_pair(&a, &b).unwrap().measure;
        let ba = measure_pair(&b, &a).unwrap().measure;
        prop_assert!((0.0..=std::f64::consts::PI).contains(&ab));
        prop_assert!((ab - ba).abs() < 1e-9);
    }

    #[test]
    fn culling_is_permutation_invariant(pts in cloud(12, 150), seed in any::<u64>()) {
        let n = pts.len();
        let mut order: Vec<usize> = (0..n).collect();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        let shuffled: Vec<Point3> = order.iter().map(|&i| pts[i]).collect();
        let (_, removed) = cull_outliers(&PointCloud::new(pts).unwrap(), 6).unwrap();
        let (_, removed_shuffled) = cull_outliers(&PointCloud::new(shuffled).unwrap(), 6).unwrap();
        let mut mapped: Vec<usize> = removed_shuffled.iter().map(|&i| order[i]).collect();
        mapped.sort_unstable();
        let mut removed = removed;
        removed.sort_unstable();
        prop_assert_eq!(removed, mapped);
    }

    #[test]
    fn resampling_picks_distinct_members(pts in cloud(2, 300), m in 1usize..120) {
        let c = PointCloud::new(pts).unwrap();
        let idx = resample_indices(&c, m).unwrap();
        prop_assert_eq!(idx.len(), m.min(c.len()));
        let mut sorted = idx.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), idx.len());
        prop_assert_eq!(idx, resample_indices(&c, m).unwrap());
    }
}
