use std::collections::BTreeSet;

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use softpod_core::sampling::{connect_springs, poisson_sample, ShapeKind, SolidShape};
use softpod_core::Vec3;

fn kind_strategy() -> impl Strategy<Value = ShapeKind> {
    prop_oneof![
        (0.05f64..0.2, 0.05f64..0.2, 0.05f64..0.2).prop_map(|(x, y, z)| ShapeKind::Box {
            half_extents: [x, y, z]
        }),
        (0.05f64..0.15, 0.1f64..0.3).prop_map(|(radius, length)| ShapeKind::Cylinder { radius, length }),
        (0.05f64..0.15, 0.02f64..0.15, 0.1f64..0.3).prop_map(|(base_radius, top_radius, length)| {
            ShapeKind::Frustum {
                base_radius,
                top_radius,
                length,
            }
        }),
        (0.08f64..0.15, 0.06f64..0.1, 0.1f64..0.3).prop_map(|(ob, ot, length)| ShapeKind::HollowFrustum {
            outer_base_radius: ob,
            outer_top_radius: ot,
            inner_base_radius: ob - 0.04,
            inner_top_radius: ot - 0.04,
            length,
        }),
    ]
}

fn pose_strategy() -> impl Strategy<Value = Isometry3<f64>> {
    (
        -1.0f64..1.0,
        -1.0f64..1.0,
        -1.0f64..1.0,
        -3.0f64..3.0,
        -3.0f64..3.0,
        -3.0f64..3.0,
    )
        .prop_map(|(x, y, z, a, b, c)| {
            Isometry3::from_parts(Translation3::new(x, y, z), UnitQuaternion::from_euler_angles(a, b, c))
        })
}

fn min_pair_distance(points: &[Vec3]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            best = best.min((points[i] - points[j]).norm());
        }
    }
    best
}

fn pair_set(points: &[Vec3], radius: f64) -> BTreeSet<(usize, usize)> {
    connect_springs(points, radius, 1.0, 0.0)
        .unwrap()
        .springs
        .iter()
        .map(|s| (s.endpoint_a, s.endpoint_b))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn samples_are_spaced_and_inside(kind in kind_strategy(), pose in pose_strategy(), seed in 0u64..1_000_000) {
        let shape = SolidShape::new(kind, pose).unwrap();
        let r = 0.03;
        let part = poisson_sample(&shape, r, seed).unwrap();
        prop_assert!(!part.is_empty());
        if part.len() > 1 {
            prop_assert!(min_pair_distance(&part.points) >= r * (1.0 - 1e-12));
        }
        for p in &part.points {
            prop_assert!(shape.contains(p), "{:?} outside", p);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn same_seed_same_points(kind in kind_strategy(), seed in 0u64..1000) {
        let shape = SolidShape::at_origin(kind).unwrap();
        prop_assert_eq!(poisson_sample(&shape, 0.03, seed).unwrap(), poisson_sample(&shape, 0.03, seed).unwrap());
    }

    #[test]
    fn pose_only_moves_the_points(kind in kind_strategy(), pose in pose_strategy(), seed in 0u64..1000) {
        let local = poisson_sample(&SolidShape::at_origin(kind.clone()).unwrap(), 0.03, seed).unwrap();
        let placed = poisson_sample(&SolidShape::new(kind, pose).unwrap(), 0.03, seed).unwrap();
        prop_assert_eq!(local.len(), placed.len());
        for (a, b) in local.points.iter().zip(&placed.points) {
            prop_assert!((pose.transform_point(&(*a).into()).coords - b).norm() < 1e-12);
        }
    }

    #[test]
    fn gaps_are_filled(kind in kind_strategy(), seed in 0u64..1000) {
        let shape = SolidShape::at_origin(kind).unwrap();
        let r = 0.03;
        let part = poisson_sample(&shape, r, seed).unwrap();
        let (lo, hi) = shape.local_bounds();
        let n = 24;
        let (mut probes, mut uncovered) = (0, 0);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let f = Vector3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) / n as f64;
                    let q = lo + (hi - lo).component_mul(&f);
                    if !shape.contains(&q) {
                        continue;
                    }
                    probes += 1;
                    let nearest = part.points.iter().map(|p| (p - q).norm()).fold(f64::INFINITY, f64::min);
                    // Fill candidates are 0.25 r apart; near curved walls the nearest
                    // one can fall outside the solid.
                    prop_assert!(nearest < 1.5 * r, "probe {:?} is {} from every sample", q, nearest);
                    if nearest >= r {
                        uncovered += 1;
                    }
                }
            }
        }
        prop_assert!(probes > 0);
        prop_assert!(uncovered * 100 <= probes, "{} of {} probes uncovered", uncovered, probes);
    }

    #[test]
    fn spring_pairs_follow_point_relabeling(seed in 0u64..1000) {
        let shape = SolidShape::at_origin(ShapeKind::Cylinder { radius: 0.08, length: 0.15 }).unwrap();
        let pts = poisson_sample(&shape, 0.03, seed).unwrap().points;
        let mut perm: Vec<usize> = (0..pts.len()).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let shuffled: Vec<Vec3> = perm.iter().map(|&i| pts[i]).collect();
        let original = pair_set(&pts, 0.05);
        let mapped: BTreeSet<(usize, usize)> = pair_set(&shuffled, 0.05)
            .into_iter()
            .map(|(a, b)| {
                let (x, y) = (perm[a], perm[b]);
                (x.min(y), x.max(y))
            })
            .collect();
        prop_assert_eq!(original, mapped);
    }

    #[test]
    fn spring_network_scales_with_the_points(seed in 0u64..1000, scale in 0.1f64..10.0) {
        let shape = SolidShape::at_origin(ShapeKind::Box { half_extents: [0.1, 0.08, 0.06] }).unwrap();
        let pts = poisson_sample(&shape, 0.03, seed).unwrap().points;
        // Keep the radius off any pair distance so rounding cannot flip membership.
        let mut dists: Vec<f64> = pair_set(&pts, 0.06).iter().map(|&(i, j)| (pts[i] - pts[j]).norm()).collect();
        dists.sort_by(f64::total_cmp);
        let radius = dists
            .windows(2)
            .filter(|w| w[0] > 0.045 && w[1] - w[0] > 1e-9)
            .map(|w| 0.5 * (w[0] + w[1]))
            .next()
            .unwrap_or(0.05);
        let a = connect_springs(&pts, radius, 1.0, 0.0).unwrap().springs;
        let big: Vec<Vec3> = pts.iter().map(|p| p * scale).collect();
        let b = connect_springs(&big, radius * scale, 1.0, 0.0).unwrap().springs;
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!((x.endpoint_a, x.endpoint_b), (y.endpoint_a, y.endpoint_b));
            prop_assert!((y.rest_length - scale * x.rest_length).abs() <= 1e-12 * y.rest_length);
        }
    }
}

#[test]
fn oversized_radius_gives_one_point() {
    for kind in [
        ShapeKind::Box {
            half_extents: [0.1, 0.1, 0.1],
        },
        ShapeKind::Cylinder {
            radius: 0.05,
            length: 0.2,
        },
    ] {
        let shape = SolidShape::at_origin(kind).unwrap();
        let part = poisson_sample(&shape, 10.0, 3).unwrap();
        assert_eq!(part.len(), 1);
        assert!(shape.contains(&part.points[0]));
    }
}

#[test]
fn spring_rest_lengths_match_current_distances() {
    let shape = SolidShape::at_origin(ShapeKind::Box {
        half_extents: [0.1, 0.1, 0.1],
    })
    .unwrap();
    let pts = poisson_sample(&shape, 0.03, 11).unwrap().points;
    let net = connect_springs(&pts, 0.06, 100.0, 0.5).unwrap();
    assert!(net.is_connected());
    let mut last = (0, 0);
    for s in &net.springs {
        assert!(s.endpoint_a < s.endpoint_b);
        assert!((s.endpoint_a, s.endpoint_b) > last || last == (0, 0));
        last = (s.endpoint_a, s.endpoint_b);
        assert_eq!(s.rest_length, (pts[s.endpoint_b] - pts[s.endpoint_a]).norm());
        assert!(s.rest_length <= 0.06);
    }
}
