use blowup_core::blowup::blow_up;
use blowup_core::context_map::{aggregate, context_map, hybrid_embed, AggregatorSpec, ContextWindow, HybridRepresentation};
use blowup_core::dimension::{dimension_at, dimension_profile, dimensional_variation, point_profile, DimensionConfig, ProfilePoint};
use blowup_core::geom::projective_term;
use blowup_core::io::{parse_csv, parse_raw, to_csv, to_raw, Format};
use blowup_core::singularity::{singular_locus, SingularityParams};
use blowup_core::synth::{generate, SynthKind, SynthSpec};
use blowup_core::tangent_cone::{cluster_directions, estimate_tangent_cone, ConeParams, LocalDirections};
use blowup_core::{blowup_distance, BlowupPoint, Estimator, PointCloud, ProjectivePoint, RMaxPolicy, RadiusGrid};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cloud_strategy(max_n: usize) -> impl Strategy<Value = PointCloud> {
    (2usize..5).prop_flat_map(move |dim| {
        // coarse coordinates create exact distance ties
        let coord = prop_oneof![(-4i32..=4).prop_map(|k| k as f64 * 0.25), -1.0f64..1.0];
        prop::collection::vec(prop::collection::vec(coord, dim), 1..max_n)
            .prop_map(|rows| PointCloud::from_rows(&rows, None).unwrap())
    })
}

fn vector(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, n).prop_filter("non-zero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-6)
}

fn random_orthogonal(n: usize, seed: u64) -> DMatrix<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
    g.qr().q()
}

fn apply(q: &DMatrix<f64>, shift: &[f64], cloud: &PointCloud) -> PointCloud {
    let rows: Vec<Vec<f64>> = cloud
        .points()
        .map(|p| {
            let v = q * nalgebra::DVector::from_column_slice(p);
            v.iter().zip(shift).map(|(a, b)| a + b).collect()
        })
        .collect();
    PointCloud::from_rows(&rows, None).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn range_count_index_matches_scan_and_is_monotone(
        cloud in cloud_strategy(120),
        q in prop::collection::vec(-1.5f64..1.5, 4),
        radii in prop::collection::vec(0.0f64..3.0, 1..6),
    ) {
        let center = &q[..cloud.dim().min(4)];
        prop_assume!(center.len() == cloud.dim());
        let mut radii = radii;
        radii.extend([0.25, 0.5, 0.0]);
        radii.sort_by(f64::total_cmp);
        let mut last = 0;
        for r in radii {
            let c = cloud.range_count(center, r).unwrap();
            prop_assert_eq!(c, cloud.range_count_naive(center, r));
            prop_assert!(c >= last);
            last = c;
        }
        for i in 0..cloud.len() {
            prop_assert!(cloud.range_count(cloud.point(i), 0.0).unwrap() >= 1);
        }
    }

    #[test]
    fn blowup_metric_is_symmetric_and_triangular(
        a in vector(4), b in vector(4), c in vector(4),
        da in vector(4), db in vector(4), dc in vector(4),
        lambda in 0.01f64..10.0,
    ) {
        let p = |x: &Vec<f64>, d: &Vec<f64>| BlowupPoint { base: x.clone(), dir: ProjectivePoint::from_vector(d).unwrap(), is_exceptional: false };
        let (x, y, z) = (p(&a, &da), p(&b, &db), p(&c, &dc));
        let dxy = blowup_distance(&x, &y, lambda).unwrap();
        prop_assert_eq!(dxy, blowup_distance(&y, &x, lambda).unwrap());
        prop_assert_eq!(blowup_distance(&x, &x, lambda).unwrap(), 0.0);
        let dyz = blowup_distance(&y, &z, lambda).unwrap();
        let dxz = blowup_distance(&x, &z, lambda).unwrap();
        prop_assert!(dxz <= dxy + dyz + 1e-9);
        // doubling λ doubles the projective term exactly
        let t = projective_term(&x, &y, lambda).unwrap();
        prop_assert_eq!(projective_term(&x, &y, 2.0 * lambda).unwrap(), 2.0 * t);
    }

    #[test]
    fn projective_class_ignores_scale(v in vector(8), alpha in prop_oneof![-100.0f64..-1e-3, 1e-3f64..100.0]) {
        let scaled: Vec<f64> = v.iter().map(|x| x * alpha).collect();
        let a = ProjectivePoint::from_vector(&v).unwrap();
        let b = ProjectivePoint::from_vector(&scaled).unwrap();
        let bits = |p: &ProjectivePoint| p.rep().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&a), bits(&b));
        prop_assert_eq!(bits(&ProjectivePoint::from_vector(a.rep()).unwrap()), bits(&a));
    }

    #[test]
    fn lift_then_project_is_identity(cloud in cloud_strategy(80), s in prop::collection::vec(-1.0f64..1.0, 4)) {
        let s = &s[..cloud.dim()];
        let cone = estimate_tangent_cone(&cloud, s, 10.0, &ConeParams { k: Some(1), ..ConeParams::default() });
        prop_assume!(cone.is_ok());
        let cone = cone.unwrap();
        let blown = blow_up(&cloud, s, &cone, 1.0).unwrap();
        let coincident = cloud.points().filter(|p| p.iter().zip(s).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() < 1e-12).count();
        prop_assert_eq!(blown.lifted.len(), cloud.len() - coincident);
        prop_assert_eq!(blown.exceptional.len(), cone.k());
        for (p, &id) in blown.lifted.iter().zip(&blown.origin_ids) {
            prop_assert_eq!(p.project(), cloud.point(id));
            let diff: Vec<f64> = p.base.iter().zip(s).map(|(a, b)| a - b).collect();
            prop_assert_eq!(&p.dir, &ProjectivePoint::from_vector(&diff).unwrap());
        }
        for e in &blown.exceptional {
            prop_assert!(e.is_exceptional);
            prop_assert_eq!(e.project(), s);
        }
    }

    #[test]
    fn profiles_are_scale_covariant(seed in 0u64..1000, c in 0.1f64..10.0) {
        let (cloud, _) = generate(&SynthSpec::flat_patch(4, 2, 300, seed)).unwrap();
        let scaled = PointCloud::from_flat(cloud.coords().iter().map(|x| x * c).collect(), 4, None).unwrap();
        let grid = RadiusGrid::geometric(0.05, 0.6, 16).unwrap();
        let grid_c = RadiusGrid::new(grid.radii().iter().map(|r| r * c).collect()).unwrap();
        for i in [0, 7, 99] {
            for est in [Estimator::TwoPoint, Estimator::RegressionWindow(5)] {
                let a = dimension_profile(&cloud, cloud.point(i), ProfilePoint::Cloud(i), &grid, est, 10).unwrap();
                let b = dimension_profile(&scaled, scaled.point(i), ProfilePoint::Cloud(i), &grid_c, est, 10).unwrap();
                for (x, y) in a.samples.iter().zip(&b.samples) {
                    prop_assert_eq!(x.volume, y.volume);
                    match (x.dim, y.dim) {
                        (Some(p), Some(q)) => prop_assert!((p - q).abs() <= 1e-9),
                        (p, q) => prop_assert_eq!(p, q),
                    }
                }
                let volumes_monotone = a.samples.windows(2).all(|w| w[0].volume <= w[1].volume);
                prop_assert!(volumes_monotone);
            }
        }
    }

    #[test]
    fn profiles_are_isometry_invariant(seed in 0u64..1000) {
        let (cloud, _) = generate(&SynthSpec::flat_patch(4, 2, 300, seed)).unwrap();
        let q = random_orthogonal(4, seed + 1);
        let moved = apply(&q, &[0.3, -1.0, 2.0, 0.5], &cloud);
        let grid = RadiusGrid::geometric(0.05, 0.6, 16).unwrap();
        for i in [0, 5, 50] {
            let a = dimension_profile(&cloud, cloud.point(i), ProfilePoint::Cloud(i), &grid, Estimator::RegressionWindow(5), 10).unwrap();
            let b = dimension_profile(&moved, moved.point(i), ProfilePoint::Cloud(i), &grid, Estimator::RegressionWindow(5), 10).unwrap();
            for (x, y) in a.samples.iter().zip(&b.samples) {
                prop_assert_eq!(x.volume, y.volume);
                match (x.dim, y.dim) {
                    (Some(p), Some(q)) => prop_assert!((p - q).abs() <= 1e-9),
                    (p, q) => prop_assert_eq!(p, q),
                }
            }
        }
    }

    #[test]
    fn two_point_samples_equal_dimension_at(seed in 0u64..1000) {
        let (cloud, _) = generate(&SynthSpec::flat_patch(3, 2, 200, seed)).unwrap();
        let grid = RadiusGrid::geometric(0.05, 0.8, 12).unwrap();
        let p = dimension_profile(&cloud, cloud.point(0), ProfilePoint::Cloud(0), &grid, Estimator::TwoPoint, 10).unwrap();
        let r = grid.radii();
        for i in 0..r.len() - 1 {
            let direct = dimension_at(&cloud, cloud.point(0), r[i], r[i + 1] - r[i], 10).ok();
            prop_assert_eq!(p.samples[i].dim, direct);
        }
    }

    #[test]
    fn locus_shrinks_as_epsilon_grows(seed in 0u64..200, e1 in 0.05f64..1.5, e2 in 0.05f64..1.5) {
        let spec = SynthSpec::new(SynthKind::AffineSubspaceUnion, 4, vec![1, 2], 120, seed);
        let (cloud, _) = generate(&spec).unwrap();
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let base = SingularityParams::default().resolved(&cloud);
        let a = singular_locus(&cloud, &SingularityParams { epsilon: lo, ..base.clone() }).unwrap();
        let b = singular_locus(&cloud, &SingularityParams { epsilon: hi, ..base }).unwrap();
        prop_assert!(b.singular_ids.iter().all(|i| a.contains(*i)));
        // every witness recomputes above ε
        for (&id, w) in &a.witnesses {
            let p = point_profile(&cloud, id, &a.params.dimension).unwrap();
            let v = dimensional_variation(&p, w.r1, w.r2).unwrap();
            prop_assert!(v > lo);
            prop_assert_eq!(v, w.variation);
        }
    }

    #[test]
    fn longer_grid_keeps_witnesses(seed in 0u64..200, eps in 0.1f64..1.0) {
        let spec = SynthSpec::new(SynthKind::AffineSubspaceUnion, 4, vec![1, 2], 150, seed);
        let (cloud, _) = generate(&spec).unwrap();
        let full = RadiusGrid::geometric(0.02, 0.9, 24).unwrap();
        let prefix = RadiusGrid::new(full.radii()[..16].to_vec()).unwrap();
        let params = SingularityParams { epsilon: eps, ..SingularityParams::default() };
        for i in 0..20 {
            for est in [Estimator::TwoPoint, Estimator::RegressionWindow(5)] {
                let short = dimension_profile(&cloud, cloud.point(i), ProfilePoint::Cloud(i), &prefix, est, 10).unwrap();
                let long = dimension_profile(&cloud, cloud.point(i), ProfilePoint::Cloud(i), &full, est, 10).unwrap();
                let s = blowup_core::is_singular(&short, &params).ok().flatten();
                let l = blowup_core::is_singular(&long, &params).ok().flatten();
                if let Some(s) = s {
                    prop_assert!(l.is_some_and(|l| l.variation >= s.variation));
                }
            }
        }
    }

    #[test]
    fn cone_is_rotation_equivariant(seed in 0u64..500) {
        let spec = SynthSpec::new(SynthKind::AffineSubspaceUnion, 5, vec![1, 1], 150, seed).with_noise(0.002);
        let (cloud, _) = generate(&spec).unwrap();
        let q = random_orthogonal(5, seed ^ 0xabc);
        let moved = apply(&q, &[0.0; 5], &cloud);
        let a = estimate_tangent_cone(&cloud, cloud.point(0), 0.6, &ConeParams::default()).unwrap();
        let b = estimate_tangent_cone(&moved, moved.point(0), 0.6, &ConeParams::default()).unwrap();
        prop_assert_eq!(a.k(), b.k());
        for (ca, cb) in a.clusters.iter().zip(&b.clusters) {
            prop_assert_eq!(&ca.member_ids, &cb.member_ids);
            let rotated = &q * nalgebra::DVector::from_column_slice(ca.centroid.rep());
            let rotated = ProjectivePoint::from_vector(rotated.as_slice()).unwrap();
            prop_assert!(rotated.distance(&cb.centroid).unwrap() < 1e-6);
        }
        // partition of the emitted directions
        let mut all: Vec<usize> = a.clusters.iter().flat_map(|c| c.member_ids.clone()).collect();
        let total = all.len();
        all.sort_unstable();
        all.dedup();
        prop_assert_eq!(all.len(), total);
    }

    #[test]
    fn cone_ignores_representative_signs(seed in 0u64..500, flips in prop::collection::vec(any::<bool>(), 60)) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<Vec<f64>> = (0..60)
            .map(|i| {
                let axis = i % 3;
                (0..3).map(|j| if j == axis { 1.0 } else { rng.random_range(-0.05..0.05) }).collect()
            })
            .collect();
        let build = |signs: &[bool]| {
            LocalDirections::from_directions(
                raw.iter()
                    .zip(signs)
                    .enumerate()
                    .map(|(i, (v, &f))| {
                        let v: Vec<f64> = v.iter().map(|x| if f { -x } else { *x }).collect();
                        (i, ProjectivePoint::from_vector(&v).unwrap())
                    })
                    .collect(),
            )
        };
        let a = cluster_directions(&build(&[false; 60]), &ConeParams::default()).unwrap();
        let b = cluster_directions(&build(&flips), &ConeParams::default()).unwrap();
        prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        prop_assert_eq!(a.len(), 3);
    }

    #[test]
    fn aggregation_ignores_entry_order(seed in 0u64..10_000, tau in 0.1f64..5.0) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries: Vec<(usize, Vec<f64>)> = (0..20).map(|i| (i * 3 + 1, (0..6).map(|_| rng.random_range(-1.0..1.0)).collect())).collect();
        let q: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let specs = [AggregatorSpec::Mean, AggregatorSpec::SoftmaxAttention { q, tau }];
        let w = ContextWindow::from_entries(30, 10, entries.clone()).unwrap();
        let base: Vec<Vec<u64>> = specs.iter().map(|s| aggregate(&w, s).unwrap().iter().map(|x| x.to_bits()).collect()).collect();
        let mut shuffled = entries;
        for _ in 0..5 {
            shuffled.shuffle(&mut rng);
            let w = ContextWindow::from_entries(30, 10, shuffled.clone()).unwrap();
            for (s, b) in specs.iter().zip(&base) {
                let got: Vec<u64> = aggregate(&w, s).unwrap().iter().map(|x| x.to_bits()).collect();
                prop_assert_eq!(&got, b);
            }
        }
    }

    #[test]
    fn mean_context_map_ignores_scale(seed in 0u64..10_000, c in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0]) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries: Vec<(usize, Vec<f64>)> = (0..7).map(|i| (i, (0..4).map(|_| rng.random_range(0.1..1.0)).collect())).collect();
        let w = ContextWindow::from_entries(9, 8, entries).unwrap();
        let a = context_map(&w, &AggregatorSpec::Mean).unwrap();
        let b = context_map(&w.scaled(c), &AggregatorSpec::Mean).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn raw_and_csv_round_trip(rows in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 3), 1..40)) {
        let cloud = PointCloud::from_rows(&rows, None).unwrap();
        let back = parse_raw(&to_raw(&cloud, Format::RawF64).unwrap(), Format::RawF64).unwrap();
        prop_assert_eq!(back.coords(), cloud.coords());
        let f32_rows: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&x| x as f32 as f64).collect()).collect();
        let f32_cloud = PointCloud::from_rows(&f32_rows, None).unwrap();
        let back = parse_raw(&to_raw(&f32_cloud, Format::RawF32).unwrap(), Format::RawF32).unwrap();
        prop_assert_eq!(back.coords(), f32_cloud.coords());
        let back = parse_csv(&to_csv(&cloud).unwrap()).unwrap();
        for (a, b) in back.coords().iter().zip(cloud.coords()) {
            prop_assert!((a - b).abs() <= 1e-15 * b.abs().max(1.0));
        }
    }

    #[test]
    fn synthetic_samples_lie_on_their_components(seed in 0u64..10_000, kind in 0usize..5) {
        let spec = match kind {
            0 => SynthSpec::new(SynthKind::AffineSubspaceUnion, 6, vec![1, 2], 100, seed),
            1 => SynthSpec::crossing_lines(3, 100, seed),
            2 => SynthSpec::new(SynthKind::Cone, 4, vec![2], 100, seed),
            3 => SynthSpec::new(SynthKind::SpherePatch, 5, vec![2], 100, seed),
            _ => SynthSpec::flat_patch(5, 3, 100, seed),
        };
        let (cloud, truth) = generate(&spec).unwrap();
        for (i, m) in truth.membership.iter().enumerate() {
            match m {
                Some(j) => prop_assert!(truth.components[*j].distance(cloud.point(i)) <= truth.tolerance(*j)),
                None => prop_assert!(truth.singular_points.iter().any(|s| s.as_slice() == cloud.point(i))),
            }
        }
        let (again, _) = generate(&spec).unwrap();
        prop_assert_eq!(again.coords(), cloud.coords());
    }

    #[test]
    fn hybrid_embedding_follows_the_locus(seed in 0u64..100, eps in 0.2f64..1.5) {
        let spec = SynthSpec::new(SynthKind::AffineSubspaceUnion, 4, vec![1, 2], 80, seed);
        let (cloud, _) = generate(&spec).unwrap();
        let locus = singular_locus(&cloud, &SingularityParams { epsilon: eps, ..SingularityParams::default() }).unwrap();
        let rows: Vec<Vec<f64>> = cloud.points().map(|p| p.to_vec()).collect();
        for t in 0..cloud.len() {
            let w = ContextWindow::from_sequence(&rows, t, 2).unwrap();
            match hybrid_embed(t, &w, &locus, &cloud, &AggregatorSpec::Mean) {
                Ok(HybridRepresentation::Regular { vector }) => {
                    prop_assert!(!locus.contains(t));
                    prop_assert_eq!(vector.as_slice(), cloud.point(t));
                }
                Ok(HybridRepresentation::Desingularized { token_id, .. }) => {
                    prop_assert!(locus.contains(t));
                    prop_assert_eq!(token_id, t);
                }
                Err(_) => prop_assert!(locus.contains(t)),
            }
        }
    }
}

#[test]
fn per_point_r_max_is_accepted() {
    let (cloud, _) = generate(&SynthSpec::flat_patch(3, 2, 300, 5)).unwrap();
    let config = DimensionConfig {
        r_max: RMaxPolicy::PerPointNeighbor(100),
        ..DimensionConfig::default()
    };
    let p = point_profile(&cloud, 0, &config).unwrap();
    assert_eq!(p.grid.r_max(), cloud.kth_neighbor_distance(cloud.point(0), 100).unwrap());
}
