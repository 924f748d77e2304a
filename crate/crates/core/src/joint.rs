//! Revolute joints for spring-mass parts.
//!
//! Vertices of both parts inside a cylinder around the joint axis are tied
//! to two anchor masses on the axis, which acts as a bearing. Randomized
//! proxy springs cross-connect the two selections; their rest lengths are
//! reset after every rotation update, so between updates they resist
//! relative motion like joint friction. Commanded motion rotates the two
//! selections about the current anchor axis in opposite directions.

use std::f64::consts::{FRAC_PI_8, TAU};
use std::ops::Range;

use nalgebra::{Rotation3, Unit};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spring::{MassPoint, SimState};
use crate::Vec3;

/// Largest rotation accepted by a single [`rotate_joint`] call.
pub const MAX_ROTATION_PER_CALL: f64 = FRAC_PI_8;

/// Minimum number of selected vertices per side.
pub const MIN_SIDE_VERTICES: usize = 3;

/// How a commanded relative rotation is split between the two sides.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RotationSplit {
    /// `+delta/2` on side A, `-delta/2` on side B.
    #[default]
    Equal,
    /// The lighter side takes the larger share, in inverse proportion to
    /// the selected mass.
    MassWeighted,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JointParams {
    pub selection_radius: f64,
    pub n_proxy: usize,
    pub anchor_stiffness: f64,
    pub anchor_damping: f64,
    pub proxy_stiffness: f64,
    pub proxy_damping: f64,
    pub anchor_mass: f64,
    pub split: RotationSplit,
}

impl Default for JointParams {
    fn default() -> Self {
        Self {
            selection_radius: 0.05,
            n_proxy: 16,
            anchor_stiffness: 2e4,
            anchor_damping: 1.0,
            proxy_stiffness: 5e4,
            proxy_damping: 1.0,
            anchor_mass: 0.005,
            split: RotationSplit::Equal,
        }
    }
}

/// Axis segment from `start` to `end`; its direction is the positive
/// rotation axis of side A relative to side B.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AxisSegment {
    pub start: Vec3,
    pub end: Vec3,
}

impl AxisSegment {
    pub fn new(start: Vec3, end: Vec3) -> Self {
        Self { start, end }
    }

    /// Distance from `p` to the infinite axis line and the axial coordinate
    /// of its projection, measured from `start`.
    fn radial_axial(&self, p: &Vec3) -> (f64, f64) {
        let d = self.end - self.start;
        let len = d.norm();
        let u = d / len;
        let rel = p - self.start;
        let t = rel.dot(&u);
        ((rel - u * t).norm(), t)
    }

    /// Inside the finite cylinder of `radius` around the segment.
    pub fn selects(&self, p: &Vec3, radius: f64) -> bool {
        let len = (self.end - self.start).norm();
        let (r, t) = self.radial_axial(p);
        r <= radius && (0.0..=len).contains(&t)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RevoluteJoint {
    pub axis_anchor_a: usize,
    pub axis_anchor_b: usize,
    pub side_a_vertices: Vec<usize>,
    pub side_b_vertices: Vec<usize>,
    pub anchor_springs: Vec<usize>,
    pub proxy_springs: Vec<usize>,
    /// Joint angle wrapped to `[0, 2pi)`.
    pub angle: f64,
    /// Continuous joint angle for odometry.
    pub unwrapped_angle: f64,
    /// Rate implied by the last update and its interval (rad/s).
    pub angle_rate: f64,
    /// Share of each update taken by side A; side B takes the remainder
    /// with opposite sign.
    side_a_share: f64,
    last_update_time: Option<f64>,
}

/// Couples two parts of `state` (given as mass index ranges) about `axis`.
///
/// Adds two anchor masses at the segment endpoints, two anchor springs per
/// selected vertex and `n_proxy` proxy springs between distinct,
/// seed-chosen cross pairs of selected vertices (pairs repeat only when
/// `n_proxy` exceeds the number of available pairs).
pub fn create_joint(
    state: &mut SimState,
    part_a: (&str, Range<usize>),
    part_b: (&str, Range<usize>),
    axis: AxisSegment,
    params: &JointParams,
    seed: u64,
) -> Result<RevoluteJoint> {
    if params.n_proxy == 0 {
        return Err(Error::param("n_proxy", "must be >= 1"));
    }
    if !(params.selection_radius > 0.0) {
        return Err(Error::param("selection_radius", "must be > 0"));
    }
    if !((axis.end - axis.start).norm() > 0.0) {
        return Err(Error::param("axis", "segment endpoints coincide"));
    }
    if part_a.1.start < part_b.1.end && part_b.1.start < part_a.1.end {
        return Err(Error::param("parts", "mass ranges overlap"));
    }
    let select = |range: &Range<usize>| -> Vec<usize> {
        range
            .clone()
            .filter(|&i| axis.selects(&state.masses()[i].position, params.selection_radius))
            .collect()
    };
    let side_a = select(&part_a.1);
    let side_b = select(&part_b.1);
    for (name, side) in [(part_a.0, &side_a), (part_b.0, &side_b)] {
        if side.len() < MIN_SIDE_VERTICES {
            return Err(Error::TooFewJointVertices {
                part: name.to_string(),
                count: side.len(),
                required: MIN_SIDE_VERTICES,
            });
        }
    }

    let anchor_a = state.add_mass(MassPoint::new(axis.start, params.anchor_mass))?;
    let anchor_b = state.add_mass(MassPoint::new(axis.end, params.anchor_mass))?;
    let mut anchor_springs = Vec::with_capacity(2 * (side_a.len() + side_b.len()));
    for &v in side_a.iter().chain(side_b.iter()) {
        for anchor in [anchor_a, anchor_b] {
            anchor_springs.push(state.connect(v, anchor, params.anchor_stiffness, params.anchor_damping)?);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total_pairs = side_a.len() * side_b.len();
    let picks: Vec<usize> = if params.n_proxy <= total_pairs {
        rand::seq::index::sample(&mut rng, total_pairs, params.n_proxy).into_vec()
    } else {
        use rand::Rng;
        (0..params.n_proxy).map(|_| rng.random_range(0..total_pairs)).collect()
    };
    let mut proxy_springs = Vec::with_capacity(params.n_proxy);
    for pick in picks {
        let a = side_a[pick / side_b.len()];
        let b = side_b[pick % side_b.len()];
        proxy_springs.push(state.connect(a, b, params.proxy_stiffness, params.proxy_damping)?);
    }

    let side_a_share = match params.split {
        RotationSplit::Equal => 0.5,
        RotationSplit::MassWeighted => {
            let mass = |side: &[usize]| side.iter().map(|&i| state.masses()[i].mass).sum::<f64>();
            let (ma, mb) = (mass(&side_a), mass(&side_b));
            mb / (ma + mb)
        }
    };

    Ok(RevoluteJoint {
        axis_anchor_a: anchor_a,
        axis_anchor_b: anchor_b,
        side_a_vertices: side_a,
        side_b_vertices: side_b,
        anchor_springs,
        proxy_springs,
        angle: 0.0,
        unwrapped_angle: 0.0,
        angle_rate: 0.0,
        side_a_share,
        last_update_time: None,
    })
}

impl RevoluteJoint {
    /// Current axis direction (unit) and a point on it, from the anchors.
    pub fn axis(&self, state: &SimState) -> (Vec3, Vec3) {
        let a = state.masses()[self.axis_anchor_a].position;
        let b = state.masses()[self.axis_anchor_b].position;
        (a, (b - a).normalize())
    }

    pub fn side_a_share(&self) -> f64 {
        self.side_a_share
    }
}

/// Rotates side A by `+share * delta` and side B by `-(1 - share) * delta`
/// about the current anchor axis (positions and velocities), advances the
/// joint angle by `delta`, and resets every proxy rest length to its
/// current endpoint distance. A zero rotation leaves the proxies untouched.
pub fn rotate_joint(state: &mut SimState, joint: &mut RevoluteJoint, delta: f64) -> Result<()> {
    if !delta.is_finite() || delta.abs() > MAX_ROTATION_PER_CALL {
        return Err(Error::RotationTooLarge {
            delta,
            limit: MAX_ROTATION_PER_CALL,
        });
    }
    if delta != 0.0 {
        let (origin, dir) = joint.axis(state);
        let dir = Unit::new_unchecked(dir);
        let rot_a = Rotation3::from_axis_angle(&dir, joint.side_a_share * delta);
        let rot_b = Rotation3::from_axis_angle(&dir, -(1.0 - joint.side_a_share) * delta);
        let masses = state.masses_mut();
        for (side, rot) in [(&joint.side_a_vertices, rot_a), (&joint.side_b_vertices, rot_b)] {
            for &i in side {
                let m = &mut masses[i];
                m.position = origin + rot * (m.position - origin);
                m.velocity = rot * m.velocity;
            }
        }
    }

    let now = state.sim_time();
    if let Some(last) = joint.last_update_time {
        if now > last {
            joint.angle_rate = delta / (now - last);
        }
    }
    joint.last_update_time = Some(now);
    joint.unwrapped_angle += delta;
    joint.angle = joint.unwrapped_angle.rem_euclid(TAU);

    if delta != 0.0 {
        for &s in &joint.proxy_springs {
            let length = state.springs()[s].current_length(state.masses());
            state.spring_mut_keep_topology(s).rest_length = length;
        }
    }
    Ok(())
}

/// Encoder reading: the commanded, unwrapped joint angle and the rate
/// implied by the last update interval.
pub fn joint_measured_state(joint: &RevoluteJoint) -> (f64, f64) {
    (joint.unwrapped_angle, joint.angle_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spring::DEFAULT_DT;

    /// Two rings of points around the z axis, one per part.
    pub(crate) fn two_rings(n: usize) -> (SimState, Range<usize>, Range<usize>, AxisSegment) {
        let mut s = SimState::new(DEFAULT_DT).unwrap();
        s.gravity = Vec3::zeros();
        for (z, phase) in [(0.0, 0.0), (0.02, 0.3)] {
            for k in 0..n {
                let a = phase + TAU * k as f64 / n as f64;
                s.add_mass(MassPoint::new(Vec3::new(0.03 * a.cos(), 0.03 * a.sin(), z), 0.01))
                    .unwrap();
            }
        }
        let axis = AxisSegment::new(Vec3::new(0.0, 0.0, -0.01), Vec3::new(0.0, 0.0, 0.03));
        (s, 0..n, n..2 * n, axis)
    }

    fn params(n_proxy: usize) -> JointParams {
        JointParams {
            selection_radius: 0.05,
            n_proxy,
            ..JointParams::default()
        }
    }

    #[test]
    fn counts_and_cross_side_proxies() {
        let (mut s, a, b, axis) = two_rings(5);
        let j = create_joint(&mut s, ("body", a), ("leg", b), axis, &params(4), 1).unwrap();
        assert_eq!(j.proxy_springs.len(), 4);
        assert_eq!(j.anchor_springs.len(), 2 * (5 + 5));
        for &p in &j.proxy_springs {
            let sp = s.springs()[p];
            assert!(j.side_a_vertices.contains(&sp.endpoint_a));
            assert!(j.side_b_vertices.contains(&sp.endpoint_b));
        }
        assert_eq!(s.masses().len(), 12);
    }

    #[test]
    fn proxies_are_seeded() {
        let build = |seed| {
            let (mut s, a, b, axis) = two_rings(8);
            let j = create_joint(&mut s, ("a", a), ("b", b), axis, &params(6), seed).unwrap();
            j.proxy_springs
                .iter()
                .map(|&i| (s.springs()[i].endpoint_a, s.springs()[i].endpoint_b))
                .collect::<Vec<_>>()
        };
        assert_eq!(build(7), build(7));
        assert_ne!(build(7), build(8));
    }

    #[test]
    fn too_few_vertices_names_part() {
        let (mut s, a, b, axis) = two_rings(5);
        let mut p = params(4);
        p.selection_radius = 0.01;
        match create_joint(&mut s, ("body", a), ("leg", b), axis, &p, 1) {
            Err(Error::TooFewJointVertices { part, count, .. }) => {
                assert_eq!(part, "body");
                assert_eq!(count, 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_rotation_is_identity() {
        let (mut s, a, b, axis) = two_rings(6);
        let mut j = create_joint(&mut s, ("a", a), ("b", b), axis, &params(5), 3).unwrap();
        let before = s.positions();
        let rest: Vec<f64> = j.proxy_springs.iter().map(|&i| s.springs()[i].rest_length).collect();
        rotate_joint(&mut s, &mut j, 0.0).unwrap();
        assert_eq!(s.positions(), before);
        let after: Vec<f64> = j.proxy_springs.iter().map(|&i| s.springs()[i].rest_length).collect();
        assert_eq!(rest, after);
    }

    #[test]
    fn oversized_rotation_rejected() {
        let (mut s, a, b, axis) = two_rings(6);
        let mut j = create_joint(&mut s, ("a", a), ("b", b), axis, &params(5), 3).unwrap();
        assert!(matches!(
            rotate_joint(&mut s, &mut j, 0.4),
            Err(Error::RotationTooLarge { .. })
        ));
        rotate_joint(&mut s, &mut j, -MAX_ROTATION_PER_CALL).unwrap();
    }

    #[test]
    fn measured_angle_and_rate() {
        let (mut s, a, b, axis) = two_rings(6);
        let mut j = create_joint(&mut s, ("a", a), ("b", b), axis, &params(5), 3).unwrap();
        rotate_joint(&mut s, &mut j, 0.1).unwrap();
        assert_eq!(joint_measured_state(&j).0, 0.1);
        for _ in 0..9 {
            rotate_joint(&mut s, &mut j, 0.1).unwrap();
        }
        assert!((joint_measured_state(&j).0 - 1.0).abs() < 1e-15);

        // 0.1 rad applied over 0.01 s of simulated time
        let (mut s, a, b, axis) = two_rings(6);
        let mut j = create_joint(&mut s, ("a", a), ("b", b), axis, &params(5), 3).unwrap();
        rotate_joint(&mut s, &mut j, 0.0).unwrap();
        for _ in 0..200 {
            s.step().unwrap();
        }
        rotate_joint(&mut s, &mut j, 0.1).unwrap();
        assert!((joint_measured_state(&j).1 - 10.0).abs() < 1e-9);
    }

    #[test]
    fn mass_weighted_split_favours_light_side() {
        let (mut s, a, b, axis) = two_rings(6);
        for m in &mut s.masses_mut()[0..6] {
            m.mass = 0.03;
        }
        let p = JointParams {
            split: RotationSplit::MassWeighted,
            ..params(4)
        };
        let j = create_joint(&mut s, ("a", a), ("b", b), axis, &p, 1).unwrap();
        assert!((j.side_a_share() - 0.25).abs() < 1e-12);
    }
}
