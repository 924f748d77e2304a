use std::f64::consts::{FRAC_PI_8, PI, TAU};

use nalgebra::{Isometry3, Rotation3, Unit};
use proptest::prelude::*;
use softpod_core::joint::{create_joint, rotate_joint, AxisSegment, JointParams, RevoluteJoint, RotationSplit};
use softpod_core::sampling::{connect_springs, poisson_sample, ShapeKind, SolidShape};
use softpod_core::spring::{MassPoint, SimState};
use softpod_core::Vec3;

/// Two stacked cylinders along z joined about the z axis, zero gravity.
fn assembly(seed: u64, split: RotationSplit) -> (SimState, RevoluteJoint) {
    let mut s = SimState::new(5e-5).unwrap();
    s.gravity = Vec3::zeros();
    let mut ranges = Vec::new();
    for (k, z) in [-0.012, 0.012].into_iter().enumerate() {
        let shape = SolidShape::new(
            ShapeKind::Cylinder {
                radius: 0.03,
                length: 0.02,
            },
            Isometry3::translation(0.0, 0.0, z),
        )
        .unwrap();
        let pts = poisson_sample(&shape, 0.008, seed + k as u64).unwrap().points;
        let start = s.masses().len();
        for p in &pts {
            s.add_mass(MassPoint::new(*p, 0.001 * (1.0 + k as f64))).unwrap();
        }
        for mut sp in connect_springs(&pts, 0.015, 2000.0, 0.1).unwrap().springs {
            sp.endpoint_a += start;
            sp.endpoint_b += start;
            s.add_spring(sp).unwrap();
        }
        ranges.push(start..start + pts.len());
    }
    let params = JointParams {
        selection_radius: 0.04,
        n_proxy: 24,
        split,
        ..JointParams::default()
    };
    let axis = AxisSegment::new(Vec3::new(0.0, 0.0, 0.03), Vec3::new(0.0, 0.0, -0.03));
    let j = create_joint(
        &mut s,
        ("lower", ranges[0].clone()),
        ("upper", ranges[1].clone()),
        axis,
        &params,
        seed,
    )
    .unwrap();
    (s, j)
}

fn radial(p: &Vec3, origin: &Vec3, dir: &Vec3) -> f64 {
    let rel = p - origin;
    (rel - dir * rel.dot(dir)).norm()
}

fn max_error(s: &SimState, joint: &RevoluteJoint, expected: impl Fn(usize) -> Vec3) -> f64 {
    joint
        .side_a_vertices
        .iter()
        .chain(&joint.side_b_vertices)
        .map(|&i| (s.masses()[i].position - expected(i)).norm())
        .fold(0.0, f64::max)
}

#[test]
fn thirty_two_sixteenth_turns_restore_every_vertex() {
    let (mut s, mut j) = assembly(1, RotationSplit::Equal);
    let start = s.positions();
    for _ in 0..32 {
        rotate_joint(&mut s, &mut j, TAU / 16.0).unwrap();
    }
    let err = max_error(&s, &j, |i| start[i]);
    assert!(err < 1e-9, "{err:e}");
    assert!((j.unwrapped_angle - 2.0 * TAU).abs() < 1e-12);
}

#[test]
fn sixteen_sixteenth_turns_are_a_half_turn_of_each_side() {
    let (mut s, mut j) = assembly(2, RotationSplit::Equal);
    let start = s.positions();
    let (origin, dir) = j.axis(&s);
    for _ in 0..16 {
        rotate_joint(&mut s, &mut j, TAU / 16.0).unwrap();
    }
    let half = Rotation3::from_axis_angle(&Unit::new_normalize(dir), PI);
    let err = max_error(&s, &j, |i| origin + half * (start[i] - origin));
    assert!(err < 1e-9, "{err:e}");
    // Relative to side B, side A has turned a full revolution.
    assert!((j.angle - 0.0).abs() < 1e-9 || (j.angle - TAU).abs() < 1e-9);
}

#[test]
fn proxies_exert_no_force_right_after_reset() {
    let (mut s, mut j) = assembly(3, RotationSplit::Equal);
    rotate_joint(&mut s, &mut j, 0.3).unwrap();
    let forces = s.compute_spring_forces().unwrap();
    for &p in &j.proxy_springs {
        assert_eq!(forces[p], Vec3::zeros());
    }
}

#[test]
fn proxy_energy_grows_with_twist() {
    let (mut s, j) = assembly(4, RotationSplit::Equal);
    let (origin, dir) = j.axis(&s);
    let base = s.positions();
    let energy = |s: &SimState| -> f64 {
        j.proxy_springs
            .iter()
            .map(|&p| {
                let sp = &s.springs()[p];
                0.5 * sp.stiffness * (sp.current_length(s.masses()) - sp.rest_length).powi(2)
            })
            .sum()
    };
    let mut prev = energy(&s);
    assert_eq!(prev, 0.0);
    for k in 1..=40 {
        let twist = FRAC_PI_8 * k as f64 / 40.0;
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(dir), twist);
        for &i in &j.side_b_vertices {
            s.masses_mut()[i].position = origin + rot * (base[i] - origin);
        }
        let e = energy(&s);
        assert!(e >= prev, "twist {twist}: {prev:e} -> {e:e}");
        prev = e;
    }
    assert!(prev > 0.0);
}

#[test]
fn sides_turn_apart_by_the_commanded_angle() {
    for split in [RotationSplit::Equal, RotationSplit::MassWeighted] {
        let (mut s, mut j) = assembly(5, split);
        let (origin, dir) = j.axis(&s);
        let a = j.side_a_vertices[0];
        let b = j.side_b_vertices[0];
        let angle_of = |s: &SimState, i: usize| {
            let rel = s.masses()[i].position - origin;
            let e1 = dir.cross(&Vec3::x()).normalize();
            let e2 = dir.cross(&e1);
            rel.dot(&e2).atan2(rel.dot(&e1))
        };
        let (a0, b0) = (angle_of(&s, a), angle_of(&s, b));
        rotate_joint(&mut s, &mut j, 0.25).unwrap();
        let da = angle_of(&s, a) - a0;
        let db = angle_of(&s, b) - b0;
        assert!((da - db - 0.25).abs() < 1e-12, "{split:?}: {da} {db}");
        assert!(da > 0.0 && db < 0.0);
    }
}

#[test]
fn axial_angular_momentum_survives_driven_rotation() {
    let (mut s, mut j) = assembly(6, RotationSplit::MassWeighted);
    let (origin, dir) = j.axis(&s);
    // Spin the whole assembly about the joint axis.
    for m in s.masses_mut() {
        m.velocity = dir.cross(&(m.position - origin)) * 2.0;
    }
    // Measured about the initial axis; the anchors themselves wobble slightly.
    let axial = |s: &SimState| -> f64 {
        s.masses()
            .iter()
            .map(|m| m.mass * (m.position - origin).cross(&m.velocity).dot(&dir))
            .sum()
    };
    let l0 = axial(&s);
    let delta = 10.0 * s.dt();
    for _ in 0..1000 {
        rotate_joint(&mut s, &mut j, delta).unwrap();
        s.step().unwrap();
    }
    let rel = (axial(&s) - l0).abs() / l0.abs();
    assert!(rel < 1e-6, "relative change {rel:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rotation_preserves_axis_distance(delta in -FRAC_PI_8..FRAC_PI_8, seed in 0u64..50) {
        let (mut s, mut j) = assembly(seed, RotationSplit::Equal);
        let (origin, dir) = j.axis(&s);
        let before: Vec<f64> = s.masses().iter().map(|m| radial(&m.position, &origin, &dir)).collect();
        rotate_joint(&mut s, &mut j, delta).unwrap();
        for (m, r) in s.masses().iter().zip(&before) {
            prop_assert!((radial(&m.position, &origin, &dir) - r).abs() < 1e-12);
        }
    }

    #[test]
    fn oversized_rotations_rejected(extra in 1e-9f64..1.0) {
        let (mut s, mut j) = assembly(0, RotationSplit::Equal);
        let before = s.positions();
        prop_assert!(rotate_joint(&mut s, &mut j, FRAC_PI_8 + extra).is_err());
        prop_assert!(rotate_joint(&mut s, &mut j, -FRAC_PI_8 - extra).is_err());
        prop_assert_eq!(s.positions(), before);
    }
}
