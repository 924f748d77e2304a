//! Gait template, leg phase clock, cascaded position/velocity controller and
//! the loop that turns controller output into joint rotations.
//!
//! Each leg follows a two-phase trajectory over one normalized cycle
//! `t_c in [0, 1)`: during stance (`t_c < s`) the target sweeps the contact
//! angle `c = theta_h - theta_l` at `omega_s = c / s`; during swing it covers
//! the remaining `2pi - c` at `omega_a = (2pi - c) / (1 - s)`. The stance
//! test is made on `t_c` rather than on the output angle, which gives the
//! same partition of the cycle without the self-reference.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::joint::{joint_measured_state, rotate_joint, RevoluteJoint, MAX_ROTATION_PER_CALL};
use crate::spring::{Executor, SimState};

/// Rated motor speed: 469 rpm.
pub const MOTOR_MAX_RATE: f64 = 469.0 * TAU / 60.0;

/// Legs in storage order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Leg {
    FL,
    FR,
    BL,
    BR,
}

impl Leg {
    pub const ALL: [Leg; 4] = [Leg::FL, Leg::FR, Leg::BL, Leg::BR];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_front(self) -> bool {
        matches!(self, Leg::FL | Leg::FR)
    }

    pub fn is_left(self) -> bool {
        matches!(self, Leg::FL | Leg::BL)
    }

    pub fn label(self) -> &'static str {
        match self {
            Leg::FL => "FL",
            Leg::FR => "FR",
            Leg::BL => "BL",
            Leg::BR => "BR",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaitParams {
    /// Joint angle at which stance starts (rad).
    pub theta_l: f64,
    /// Joint angle at which stance ends (rad).
    pub theta_h: f64,
    /// Fraction of the cycle spent in stance, in (0, 1).
    pub stance_ratio: f64,
    /// Cycle period T (s).
    pub cycle_period: f64,
    /// Per-leg phase offsets in [0, 1), FL, FR, BL, BR.
    pub phase_offsets: [f64; 4],
    /// Per-leg direction, +1 or -1, about each joint's outward axis.
    pub direction_signs: [f64; 4],
}

impl GaitParams {
    pub fn contact_angle(&self) -> f64 {
        self.theta_h - self.theta_l
    }

    pub fn stance_rate(&self) -> f64 {
        self.contact_angle() / self.stance_ratio
    }

    pub fn swing_rate(&self) -> f64 {
        (TAU - self.contact_angle()) / (1.0 - self.stance_ratio)
    }

    /// Mean joint speed over a cycle (rad/s).
    pub fn mean_joint_rate(&self) -> f64 {
        TAU / self.cycle_period
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.contact_angle();
        if !(c > 0.0 && c < TAU) {
            return Err(Error::param(
                "theta_h - theta_l",
                format!("contact angle {c} outside (0, 2pi)"),
            ));
        }
        if !(self.stance_ratio > 0.0 && self.stance_ratio < 1.0) {
            return Err(Error::param("stance_ratio", "must lie in (0, 1)"));
        }
        if !(self.cycle_period > 0.0) || !self.cycle_period.is_finite() {
            return Err(Error::param("cycle_period", "must be finite and > 0"));
        }
        if self.phase_offsets.iter().any(|o| !(0.0..1.0).contains(o)) {
            return Err(Error::param("phase_offsets", "must lie in [0, 1)"));
        }
        if self.direction_signs.iter().any(|s| s.abs() != 1.0) {
            return Err(Error::param("direction_signs", "must be +1 or -1"));
        }
        if !(self.stance_rate().is_finite() && self.swing_rate().is_finite()) {
            return Err(Error::param("gait", "stance and swing rates must be finite"));
        }
        Ok(())
    }
}

/// Normalized cycle time of one leg.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LegPhase {
    pub t_c: f64,
    pub t_c_prev: f64,
}

impl LegPhase {
    pub fn new(t_c: f64) -> Self {
        Self { t_c, t_c_prev: t_c }
    }
}

/// `t_c <- (t_c + dt / T) mod 1`.
pub fn advance_phase(phase: LegPhase, dt: f64, params: &GaitParams) -> LegPhase {
    let mut t_c = (phase.t_c + dt / params.cycle_period).rem_euclid(1.0);
    if t_c >= 1.0 {
        t_c = 0.0;
    }
    LegPhase {
        t_c,
        t_c_prev: phase.t_c,
    }
}

/// Target joint angle in `[0, 2pi)` for normalized time `t_c`.
pub fn gait_target(t_c: f64, params: &GaitParams) -> f64 {
    let s = params.stance_ratio;
    let theta = if t_c < s {
        params.theta_l + params.stance_rate() * t_c
    } else {
        params.theta_h + params.swing_rate() * (t_c - s)
    };
    theta.rem_euclid(TAU)
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_to_pi(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerGains {
    /// Position loop gain, (rad/s) per rad.
    pub kp_pos: f64,
    /// Velocity loop proportional gain, A per (rad/s).
    pub kp_vel: f64,
    /// Velocity loop integral gain, A per rad.
    pub ki_vel: f64,
    /// Saturation of the current command (A).
    pub output_limit: f64,
    /// Anti-windup clamp on the velocity-error integral (rad).
    pub integrator_limit: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            kp_pos: 30.0,
            kp_vel: 0.2,
            ki_vel: 5.0,
            output_limit: 20.0,
            integrator_limit: 20.0,
        }
    }
}

impl ControllerGains {
    pub fn zero() -> Self {
        Self {
            kp_pos: 0.0,
            kp_vel: 0.0,
            ki_vel: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.kp_pos, self.kp_vel, self.ki_vel].iter().any(|g| !(*g >= 0.0)) {
            return Err(Error::param("gains", "must be >= 0"));
        }
        if !(self.output_limit > 0.0) || !(self.integrator_limit > 0.0) {
            return Err(Error::param("limits", "must be > 0"));
        }
        Ok(())
    }
}

/// One tick of the position (P) then velocity (PI) cascade. Returns the
/// saturated current command and the updated integrator.
pub fn cascade_control(
    theta_des: f64,
    theta_meas: f64,
    omega_meas: f64,
    gains: &ControllerGains,
    integrator: f64,
    dt: f64,
) -> (f64, f64) {
    let e_theta = wrap_to_pi(theta_des - theta_meas);
    let d = gains.kp_pos * e_theta;
    let e_omega = d - omega_meas;
    let integrator = (integrator + e_omega * dt).clamp(-gains.integrator_limit, gains.integrator_limit);
    let i_des = (gains.kp_vel * e_omega + gains.ki_vel * integrator).clamp(-gains.output_limit, gains.output_limit);
    (i_des, integrator)
}

/// Stand-in for the motor and its speed controller: commanded current to
/// joint rate, saturated at the rated speed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotorMap {
    /// (rad/s) per A.
    pub gain_i2w: f64,
    pub max_rate: f64,
}

impl Default for MotorMap {
    fn default() -> Self {
        Self {
            gain_i2w: 2.5,
            max_rate: MOTOR_MAX_RATE,
        }
    }
}

impl MotorMap {
    pub fn rate(&self, i_des: f64) -> f64 {
        (self.gain_i2w * i_des).clamp(-self.max_rate, self.max_rate)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaitPreset {
    Pace,
    Bounding,
    TurnLeft,
    TurnRight,
    Backflip,
}

impl GaitPreset {
    pub fn name(self) -> &'static str {
        match self {
            GaitPreset::Pace => "pace",
            GaitPreset::Bounding => "bounding",
            GaitPreset::TurnLeft => "turn_left",
            GaitPreset::TurnRight => "turn_right",
            GaitPreset::Backflip => "backflip",
        }
    }
}

impl std::str::FromStr for GaitPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pace" => Ok(GaitPreset::Pace),
            "bounding" => Ok(GaitPreset::Bounding),
            "turn_left" => Ok(GaitPreset::TurnLeft),
            "turn_right" => Ok(GaitPreset::TurnRight),
            "backflip" => Ok(GaitPreset::Backflip),
            other => Err(Error::UnknownGait(other.to_string())),
        }
    }
}

/// Default timing offset of the back pair in the backflip script.
pub const BACKFLIP_OFFSET: f64 = 0.15;

/// Phase arrangement for a named gait. The numeric stance/swing values are
/// simulator-tuned defaults; override them from the scenario config.
///
/// Forward gaits mirror the direction signs so that both sides push the
/// body forward; turning keeps every sign equal, which spins the two sides
/// against each other.
pub fn gait_preset(name: &str) -> Result<GaitParams> {
    let preset: GaitPreset = name.parse()?;
    Ok(preset_params(preset))
}

pub fn preset_params(preset: GaitPreset) -> GaitParams {
    const FORWARD: [f64; 4] = [1.0, -1.0, 1.0, -1.0];
    let base = GaitParams {
        theta_l: -0.6,
        theta_h: 0.6,
        stance_ratio: 0.5,
        cycle_period: 0.5,
        phase_offsets: [0.0; 4],
        direction_signs: FORWARD,
    };
    match preset {
        // FL, FR, BL, BR: left pair together, right pair half a cycle later.
        GaitPreset::Pace => GaitParams {
            phase_offsets: [0.0, 0.5, 0.0, 0.5],
            ..base
        },
        GaitPreset::Bounding => GaitParams {
            phase_offsets: [0.0, 0.0, 0.5, 0.5],
            ..base
        },
        GaitPreset::TurnLeft => GaitParams {
            direction_signs: [-1.0; 4],
            ..base
        },
        GaitPreset::TurnRight => GaitParams {
            direction_signs: [1.0; 4],
            ..base
        },
        GaitPreset::Backflip => GaitParams {
            theta_l: -PI / 2.0,
            theta_h: PI / 2.0,
            stance_ratio: 0.5,
            cycle_period: 0.16,
            phase_offsets: [0.0, 0.0, BACKFLIP_OFFSET, BACKFLIP_OFFSET],
            direction_signs: FORWARD,
        },
    }
}

/// Per-leg controller state.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LegDrive {
    pub phase: LegPhase,
    pub integrator: f64,
    pub commanded_rate: f64,
    pub theta_des: f64,
}

/// Closed-loop drive for a set of joints: gait targets and the cascade run
/// on the control tick, joint rotations are applied on the physics
/// timeline.
#[derive(Clone, Debug)]
pub struct GaitDriver {
    pub gait: GaitParams,
    pub gains: ControllerGains,
    pub motor: MotorMap,
    /// Physics steps per control tick.
    pub control_substeps: u64,
    /// Physics steps per joint rotation update.
    pub joint_update_divisor: u64,
    /// Control stays idle (no phase advance, zero command) before this time.
    pub start_time: f64,
    pub legs: Vec<LegDrive>,
}

impl GaitDriver {
    pub fn new(
        gait: GaitParams,
        gains: ControllerGains,
        motor: MotorMap,
        control_dt: f64,
        physics_dt: f64,
        joint_update_divisor: u64,
        n_legs: usize,
    ) -> Result<Self> {
        gait.validate()?;
        gains.validate()?;
        let ratio = control_dt / physics_dt;
        let substeps = ratio.round();
        if !(substeps >= 1.0) || (ratio - substeps).abs() > 1e-9 * ratio {
            return Err(Error::param(
                "control_dt",
                format!("{control_dt} is not an integer multiple of physics dt {physics_dt}"),
            ));
        }
        if joint_update_divisor == 0 {
            return Err(Error::param("joint_update_divisor", "must be >= 1"));
        }
        let legs = (0..n_legs)
            .map(|i| LegDrive {
                phase: LegPhase::new(gait.phase_offsets[i % 4]),
                ..LegDrive::default()
            })
            .collect();
        Ok(Self {
            gait,
            gains,
            motor,
            control_substeps: substeps as u64,
            joint_update_divisor,
            start_time: 0.0,
            legs,
        })
    }

    pub fn control_dt(&self, physics_dt: f64) -> f64 {
        self.control_substeps as f64 * physics_dt
    }

    fn control_tick(&mut self, joints: &[RevoluteJoint], sim_time: f64, control_dt: f64) {
        let active = sim_time >= self.start_time;
        for (i, (leg, joint)) in self.legs.iter_mut().zip(joints).enumerate() {
            if !active {
                leg.commanded_rate = 0.0;
                continue;
            }
            let sign = self.gait.direction_signs[i % 4];
            leg.theta_des = sign * gait_target(leg.phase.t_c, &self.gait);
            let (theta_meas, omega_meas) = joint_measured_state(joint);
            let (i_des, integ) = cascade_control(
                leg.theta_des,
                theta_meas,
                omega_meas,
                &self.gains,
                leg.integrator,
                control_dt,
            );
            leg.integrator = integ;
            leg.commanded_rate = self.motor.rate(i_des);
            leg.phase = advance_phase(leg.phase, control_dt, &self.gait);
        }
    }

    /// Runs `n_steps` physics steps with control ticks and joint updates
    /// interleaved on the same timeline.
    pub fn drive_joints(
        &mut self,
        state: &mut SimState,
        joints: &mut [RevoluteJoint],
        exec: &Executor,
        n_steps: u64,
        mut on_step: impl FnMut(&SimState, &[RevoluteJoint]),
    ) -> Result<()> {
        let dt = state.dt();
        let control_dt = self.control_dt(dt);
        for _ in 0..n_steps {
            let step = state.step_count();
            if step.is_multiple_of(self.control_substeps) {
                self.control_tick(joints, state.sim_time(), control_dt);
            }
            if step.is_multiple_of(self.joint_update_divisor) {
                for (leg, joint) in self.legs.iter().zip(joints.iter_mut()) {
                    let total = leg.commanded_rate * dt * self.joint_update_divisor as f64;
                    let pieces = (total.abs() / MAX_ROTATION_PER_CALL).ceil().max(1.0);
                    for _ in 0..pieces as usize {
                        rotate_joint(state, joint, total / pieces)?;
                    }
                }
            }
            exec.step(state)?;
            on_step(state, joints);
        }
        Ok(())
    }
}
