//! Parametric quadruped: a box-shell body, four frustum legs and four
//! revolute joints assembled into one [`SimState`].
//!
//! Body frame at construction: +x forward, +y left, +z up, ground at z = 0.
//! Leg angle 0 points the leg straight down. Each joint axis points outward
//! from the body, tilted by `leg_angle_alpha` in the horizontal plane, front
//! axes toward the front and back axes toward the back.

use std::f64::consts::{FRAC_PI_2, PI};
use std::ops::Range;

use nalgebra::Isometry3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gait::Leg;
use crate::joint::{create_joint, AxisSegment, JointParams, RevoluteJoint, RotationSplit};
use crate::sampling::{connect_springs, poisson_sample, ShapeKind, SolidShape};
use crate::spring::{ContactModel, MassPoint, SimState, DEFAULT_DT};
use crate::Vec3;

/// Minimum number of masses in each sampled part.
pub const MIN_PART_MASSES: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobotSpec {
    pub body_length: f64,
    pub body_width: f64,
    pub body_height: f64,
    /// Nominal shell wall; widened to `min_wall_radii` sample radii if the
    /// lattice is too coarse to resolve it.
    pub body_wall: f64,
    pub min_wall_radii: f64,
    pub total_mass: f64,
    /// Chord swept by the leg tip over one stance.
    pub leg_step_length: f64,
    /// Stance sweep used to turn the step length into a leg length.
    pub step_contact_angle: f64,
    pub leg_tip_diameter: f64,
    pub leg_shoulder_diameter: f64,
    pub leg_inner_diameter_tip: f64,
    pub leg_inner_diameter_shoulder: f64,
    pub leg_hollow: bool,
    pub leg_mass: f64,
    pub leg_angle_alpha: f64,
    /// Fore/aft distance of each leg axis from the body center.
    pub leg_x_offset: f64,
    /// Clearance between body side and leg shoulder.
    pub leg_gap: f64,
    pub motor_mass: f64,
    /// Height of the leg tips above ground at construction.
    pub drop_height: f64,
}

impl Default for RobotSpec {
    fn default() -> Self {
        Self {
            body_length: 0.360,
            body_width: 0.214,
            body_height: 0.080,
            body_wall: 0.010,
            min_wall_radii: 1.6,
            total_mass: 3.21,
            leg_step_length: 0.158,
            step_contact_angle: FRAC_PI_2,
            leg_tip_diameter: 0.048,
            leg_shoulder_diameter: 0.064,
            leg_inner_diameter_tip: 0.030,
            leg_inner_diameter_shoulder: 0.044,
            leg_hollow: true,
            leg_mass: 0.080,
            leg_angle_alpha: 10f64.to_radians(),
            leg_x_offset: 0.130,
            leg_gap: 0.005,
            motor_mass: 0.386,
            drop_height: 0.005,
        }
    }
}

impl RobotSpec {
    /// Hub-to-tip length: the radius whose chord over the stance sweep
    /// equals the step length.
    pub fn leg_length(&self) -> f64 {
        self.leg_step_length / (2.0 * (self.step_contact_angle / 2.0).sin())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("body_length", self.body_length),
            ("body_width", self.body_width),
            ("body_height", self.body_height),
            ("body_wall", self.body_wall),
            ("min_wall_radii", self.min_wall_radii),
            ("total_mass", self.total_mass),
            ("leg_step_length", self.leg_step_length),
            ("leg_tip_diameter", self.leg_tip_diameter),
            ("leg_shoulder_diameter", self.leg_shoulder_diameter),
            ("leg_mass", self.leg_mass),
            ("leg_x_offset", self.leg_x_offset),
            ("motor_mass", self.motor_mass),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::param(name, "must be finite and > 0"));
            }
        }
        for (name, v) in [("leg_gap", self.leg_gap), ("drop_height", self.drop_height)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::param(name, "must be finite and >= 0"));
            }
        }
        if !(self.step_contact_angle > 0.0 && self.step_contact_angle < PI) {
            return Err(Error::param("step_contact_angle", "must lie in (0, pi)"));
        }
        if self.leg_hollow {
            if !(self.leg_inner_diameter_tip > 0.0 && self.leg_inner_diameter_tip < self.leg_tip_diameter) {
                return Err(Error::param(
                    "leg_inner_diameter_tip",
                    "must lie in (0, leg_tip_diameter)",
                ));
            }
            if !(self.leg_inner_diameter_shoulder > 0.0
                && self.leg_inner_diameter_shoulder < self.leg_shoulder_diameter)
            {
                return Err(Error::param(
                    "leg_inner_diameter_shoulder",
                    "must lie in (0, leg_shoulder_diameter)",
                ));
            }
        }
        if !(0.0..=FRAC_PI_2).contains(&self.leg_angle_alpha) {
            return Err(Error::param("leg_angle_alpha", "must lie in [0, pi/2]"));
        }
        if 2.0 * self.body_wall >= self.body_height.min(self.body_width) {
            return Err(Error::param("body_wall", "leaves no interior"));
        }
        if self.body_shell_mass(&JointTuning::default()) <= 0.0 {
            return Err(Error::param(
                "total_mass",
                "smaller than legs, motors and joint anchors",
            ));
        }
        Ok(())
    }

    fn body_shell_mass(&self, joint: &JointTuning) -> f64 {
        self.total_mass - 4.0 * (self.leg_mass + self.motor_mass + 2.0 * joint.anchor_mass)
    }

    pub fn leg_shape(&self) -> ShapeKind {
        let length = self.leg_length();
        if self.leg_hollow {
            ShapeKind::HollowFrustum {
                outer_base_radius: self.leg_shoulder_diameter / 2.0,
                outer_top_radius: self.leg_tip_diameter / 2.0,
                inner_base_radius: self.leg_inner_diameter_shoulder / 2.0,
                inner_top_radius: self.leg_inner_diameter_tip / 2.0,
                length,
            }
        } else {
            ShapeKind::Frustum {
                base_radius: self.leg_shoulder_diameter / 2.0,
                top_radius: self.leg_tip_diameter / 2.0,
                length,
            }
        }
    }

    /// Outward unit joint axis for a leg.
    pub fn joint_axis(&self, leg: Leg) -> Vec3 {
        let (sx, sy) = leg_signs(leg);
        let a = self.leg_angle_alpha;
        Vec3::new(sx * a.sin(), sy * a.cos(), 0.0)
    }
}

fn leg_signs(leg: Leg) -> (f64, f64) {
    (
        if leg.is_front() { 1.0 } else { -1.0 },
        if leg.is_left() { 1.0 } else { -1.0 },
    )
}

/// Joint settings relative to the sampling resolution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JointTuning {
    /// Selection cylinder reaches this many leg sample radii past the
    /// shoulder radius.
    pub selection_margin: f64,
    /// More than the kernel's default of 16: at this lattice resolution 16
    /// proxies let the legs slip under body weight.
    pub n_proxy: usize,
    pub anchor_stiffness: f64,
    pub anchor_damping: f64,
    /// Proxy stiffness as a multiple of the leg spring stiffness.
    pub proxy_stiffness_ratio: f64,
    pub proxy_damping: f64,
    pub anchor_mass: f64,
    pub split: RotationSplit,
}

impl Default for JointTuning {
    fn default() -> Self {
        let base = JointParams::default();
        Self {
            selection_margin: 1.5,
            n_proxy: 64,
            anchor_stiffness: base.anchor_stiffness,
            anchor_damping: base.anchor_damping,
            proxy_stiffness_ratio: 5.0,
            proxy_damping: base.proxy_damping,
            anchor_mass: base.anchor_mass,
            split: base.split,
        }
    }
}

/// Discretization and material settings for [`build_robot`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    /// Poisson radius of the body shell.
    pub sample_radius: f64,
    /// Leg radius as a fraction of `sample_radius`.
    pub leg_radius_scale: f64,
    /// Springs join points closer than this many sample radii.
    pub connect_factor: f64,
    pub body_stiffness: f64,
    pub leg_stiffness: f64,
    pub spring_damping: f64,
    pub motor_link_stiffness: f64,
    /// Body masses tied to each motor.
    pub motor_links: usize,
    pub joint: JointTuning,
    pub dt: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            sample_radius: 0.02,
            leg_radius_scale: 0.6,
            connect_factor: 1.8,
            body_stiffness: 1.5e4,
            leg_stiffness: 8e3,
            spring_damping: 1.0,
            motor_link_stiffness: 3e4,
            motor_links: 8,
            joint: JointTuning::default(),
            dt: DEFAULT_DT,
        }
    }
}

impl ModelParams {
    pub fn leg_sample_radius(&self) -> f64 {
        self.sample_radius * self.leg_radius_scale
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sample_radius", self.sample_radius),
            ("leg_radius_scale", self.leg_radius_scale),
            ("body_stiffness", self.body_stiffness),
            ("leg_stiffness", self.leg_stiffness),
            ("motor_link_stiffness", self.motor_link_stiffness),
            ("dt", self.dt),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::param(name, "must be finite and > 0"));
            }
        }
        if !(self.connect_factor > 1.0) {
            return Err(Error::param("connect_factor", "must be > 1"));
        }
        if self.motor_links == 0 {
            return Err(Error::param("motor_links", "must be >= 1"));
        }
        Ok(())
    }

    fn joint_params(&self, spec: &RobotSpec) -> JointParams {
        let j = &self.joint;
        JointParams {
            selection_radius: spec.leg_shoulder_diameter / 2.0 + j.selection_margin * self.leg_sample_radius(),
            n_proxy: j.n_proxy,
            anchor_stiffness: j.anchor_stiffness,
            anchor_damping: j.anchor_damping,
            proxy_stiffness: j.proxy_stiffness_ratio * self.leg_stiffness,
            proxy_damping: j.proxy_damping,
            anchor_mass: j.anchor_mass,
            split: j.split,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Robot {
    pub state: SimState,
    /// FL, FR, BL, BR.
    pub joints: Vec<RevoluteJoint>,
    pub legs: [Leg; 4],
    pub body: Range<usize>,
    pub leg_parts: [Range<usize>; 4],
    pub motors: [usize; 4],
    /// Body shell masses near the front-top, back-top and left-top edges.
    pub reference_masses: [usize; 3],
    pub body_length: f64,
}

/// Orthonormal body frame estimated from the reference masses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BodyFrame {
    pub forward: Vec3,
    pub left: Vec3,
    pub up: Vec3,
}

impl Robot {
    pub fn body_frame(&self) -> BodyFrame {
        body_frame(&self.state, self.reference_masses)
    }

    /// Mean height of each leg's lowest mass.
    pub fn mean_foot_height(&self) -> f64 {
        let m = self.state.masses();
        self.leg_parts
            .iter()
            .map(|r| m[r.clone()].iter().map(|p| p.position.z).fold(f64::INFINITY, f64::min))
            .sum::<f64>()
            / 4.0
    }
}

pub fn body_frame(state: &SimState, refs: [usize; 3]) -> BodyFrame {
    let m = state.masses();
    let (front, back, left) = (m[refs[0]].position, m[refs[1]].position, m[refs[2]].position);
    let forward = (front - back).normalize();
    let up = forward.cross(&(left - (front + back) / 2.0)).normalize();
    BodyFrame {
        forward,
        left: up.cross(&forward),
        up,
    }
}

/// Independent per-purpose seed stream.
pub(crate) fn derive_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn check_count(part: &str, count: usize) -> Result<()> {
    if count < MIN_PART_MASSES {
        return Err(Error::TooFewMasses {
            part: part.to_string(),
            count,
            required: MIN_PART_MASSES,
        });
    }
    Ok(())
}

/// Leg sample points in the leg frame: shoulder at the origin, tip at
/// `+z = leg_length`.
pub fn sample_leg(spec: &RobotSpec, params: &ModelParams, seed: u64) -> Result<Vec<Vec3>> {
    let shape = SolidShape::at_origin(spec.leg_shape())?;
    Ok(poisson_sample(&shape, params.leg_sample_radius(), derive_seed(seed, 2))?.points)
}

/// Builds the robot resting `drop_height` above flat ground.
pub fn build_robot(spec: &RobotSpec, params: &ModelParams, seed: u64) -> Result<Robot> {
    spec.validate()?;
    params.validate()?;
    let r = params.sample_radius;
    let r_leg = params.leg_sample_radius();
    let leg_len = spec.leg_length();
    let hub_z = spec.drop_height + leg_len;
    let half = [spec.body_length / 2.0, spec.body_width / 2.0, spec.body_height / 2.0];
    let wall = spec.body_wall.max(spec.min_wall_radii * r);
    if 2.0 * wall >= spec.body_height.min(spec.body_width) {
        return Err(Error::param("sample_radius", "too coarse for the body wall"));
    }

    let mut state = SimState::new(params.dt)?;
    state.contact = Some(ContactModel::default());

    // Body shell centered at the hub height.
    let body_shape = SolidShape::new(
        ShapeKind::BoxShell {
            half_extents: half,
            wall,
        },
        Isometry3::translation(0.0, 0.0, hub_z),
    )?;
    let body_pts = poisson_sample(&body_shape, r, derive_seed(seed, 1))?.points;
    check_count("body", body_pts.len())?;
    let body_mass = spec.body_shell_mass(&params.joint);
    if !(body_mass > 0.0) {
        return Err(Error::param(
            "total_mass",
            "smaller than legs, motors and joint anchors",
        ));
    }
    let body = add_part(
        &mut state,
        &body_pts,
        body_mass,
        r * params.connect_factor,
        params.body_stiffness,
        params.spring_damping,
    )?;

    // One leg lattice, mirrored for the right side so the robot is
    // left/right symmetric.
    let leg_local = sample_leg(spec, params, seed)?;
    check_count("leg", leg_local.len())?;
    let r_sh = spec.leg_shoulder_diameter / 2.0;
    let hub_y = half[1] + spec.leg_gap + r_sh;
    let mut leg_parts = Vec::with_capacity(4);
    for leg in Leg::ALL {
        let (sx, sy) = leg_signs(leg);
        let hub = Vec3::new(sx * spec.leg_x_offset, sy * hub_y, hub_z);
        let pts: Vec<Vec3> = leg_local.iter().map(|p| hub + Vec3::new(p.x, sy * p.y, -p.z)).collect();
        leg_parts.push(add_part(
            &mut state,
            &pts,
            spec.leg_mass,
            r_leg * params.connect_factor,
            params.leg_stiffness,
            params.spring_damping,
        )?);
    }

    // Motors sit inside the shell behind each hub, tied to the closest
    // body masses.
    let mut motors = [0usize; 4];
    for (k, leg) in Leg::ALL.into_iter().enumerate() {
        let (sx, sy) = leg_signs(leg);
        let pos = Vec3::new(sx * spec.leg_x_offset, sy * (half[1] - wall - r), hub_z);
        let id = state.add_mass(MassPoint::new(pos, spec.motor_mass))?;
        for j in nearest(&state, body.clone(), &pos, params.motor_links) {
            state.connect(id, j, params.motor_link_stiffness, params.spring_damping)?;
        }
        motors[k] = id;
    }

    let jp = params.joint_params(spec);
    let mut joints = Vec::with_capacity(4);
    for (k, leg) in Leg::ALL.into_iter().enumerate() {
        let (_, sy) = leg_signs(leg);
        let n = spec.joint_axis(leg);
        let hub = Vec3::new(leg_signs(leg).0 * spec.leg_x_offset, sy * hub_y, hub_z);
        let cos = n.y.abs().max(0.5);
        let outer = hub + n * (r_sh + 2.0 * r_leg);
        let inner = hub - n * ((spec.leg_gap + r_sh + wall) / cos + r);
        joints.push(create_joint(
            &mut state,
            ("body", body.clone()),
            (leg.label(), leg_parts[k].clone()),
            AxisSegment::new(outer, inner),
            &jp,
            derive_seed(seed, 10 + k as u64),
        )?);
    }

    let top = hub_z + half[2];
    let reference_masses = [
        nearest(&state, body.clone(), &Vec3::new(half[0], 0.0, top), 1)[0],
        nearest(&state, body.clone(), &Vec3::new(-half[0], 0.0, top), 1)[0],
        nearest(&state, body.clone(), &Vec3::new(0.0, half[1], top), 1)[0],
    ];

    Ok(Robot {
        state,
        joints,
        legs: Leg::ALL,
        body,
        leg_parts: [
            leg_parts[0].clone(),
            leg_parts[1].clone(),
            leg_parts[2].clone(),
            leg_parts[3].clone(),
        ],
        motors,
        reference_masses,
        body_length: spec.body_length,
    })
}

fn add_part(
    state: &mut SimState,
    points: &[Vec3],
    part_mass: f64,
    connect_radius: f64,
    stiffness: f64,
    damping: f64,
) -> Result<Range<usize>> {
    let start = state.masses().len();
    let m = part_mass / points.len() as f64;
    for p in points {
        state.add_mass(MassPoint::new(*p, m))?;
    }
    let net = connect_springs(points, connect_radius, stiffness, damping)?;
    for mut s in net.springs {
        s.endpoint_a += start;
        s.endpoint_b += start;
        state.add_spring(s)?;
    }
    Ok(start..start + points.len())
}

/// The `k` masses of `range` closest to `target`, ties by index.
fn nearest(state: &SimState, range: Range<usize>, target: &Vec3, k: usize) -> Vec<usize> {
    let m = state.masses();
    let mut idx: Vec<usize> = range.collect();
    idx.sort_by(|&a, &b| {
        let da = (m[a].position - target).norm_squared();
        let db = (m[b].position - target).norm_squared();
        da.total_cmp(&db).then(a.cmp(&b))
    });
    idx.truncate(k);
    idx
}

/// Static tip deflection of a single leg clamped at the shoulder under a
/// sideways load spread over the tip, in zero gravity.
pub fn leg_tip_deflection(spec: &RobotSpec, params: &ModelParams, load: f64, seed: u64) -> Result<f64> {
    spec.validate()?;
    params.validate()?;
    let len = spec.leg_length();
    let pts = sample_leg(spec, params, seed)?;
    check_count("leg", pts.len())?;
    let mut state = SimState::new(params.dt)?;
    state.gravity = Vec3::zeros();
    let part = add_part(
        &mut state,
        &pts,
        spec.leg_mass,
        params.leg_sample_radius() * params.connect_factor,
        params.leg_stiffness,
        params.spring_damping,
    )?;
    let clamp_z = 0.2 * len;
    let tip_z = 0.85 * len;
    let tips: Vec<usize> = part.clone().filter(|&i| pts[i].z >= tip_z).collect();
    for i in part.clone() {
        if pts[i].z <= clamp_z {
            state.masses_mut()[i].fixed = true;
        }
    }
    let per = load / tips.len() as f64;
    for &i in &tips {
        state.set_external_force(i, Vec3::new(per, 0.0, 0.0));
    }
    // Heavy viscous drag brings the lattice to rest quickly.
    let m = spec.leg_mass / pts.len() as f64;
    state.drag = 0.5 * m / (50.0 * params.dt);
    let mut prev = f64::NAN;
    for _ in 0..200 {
        for _ in 0..200 {
            state.step()?;
        }
        let d = tips
            .iter()
            .map(|&i| state.masses()[i].position.x - pts[i].x)
            .sum::<f64>()
            / tips.len() as f64;
        if (d - prev).abs() <= 1e-7 * d.abs().max(1e-9) {
            return Ok(d);
        }
        prev = d;
    }
    Ok(prev)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leg_length_from_step() {
        let s = RobotSpec::default();
        assert!((s.leg_length() - 0.158 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn default_spec_valid_and_bad_inner_rejected() {
        RobotSpec::default().validate().unwrap();
        let bad = RobotSpec {
            leg_inner_diameter_tip: 0.05,
            ..RobotSpec::default()
        };
        assert!(bad.validate().is_err());
        let solid = RobotSpec {
            leg_hollow: false,
            leg_inner_diameter_tip: 0.05,
            ..RobotSpec::default()
        };
        solid.validate().unwrap();
        let tilted = RobotSpec {
            leg_angle_alpha: 2.0,
            ..RobotSpec::default()
        };
        assert!(tilted.validate().is_err());
    }

    #[test]
    fn zero_alpha_axes_are_lateral() {
        let s = RobotSpec {
            leg_angle_alpha: 0.0,
            ..RobotSpec::default()
        };
        for leg in Leg::ALL {
            let n = s.joint_axis(leg);
            assert_eq!(n.x, 0.0);
            assert_eq!(n.y.abs(), 1.0);
        }
    }

    #[test]
    fn too_coarse_leg_names_part() {
        let params = ModelParams {
            leg_radius_scale: 3.0,
            ..ModelParams::default()
        };
        match build_robot(&RobotSpec::default(), &params, 1) {
            Err(Error::TooFewMasses { part, .. }) => assert_eq!(part, "leg"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn seeds_differ_per_tag() {
        assert_ne!(derive_seed(1, 1), derive_seed(1, 2));
        assert_ne!(derive_seed(1, 1), derive_seed(2, 1));
    }
}
