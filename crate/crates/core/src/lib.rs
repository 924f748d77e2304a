//! Mass-spring simulation of a small quadruped with soft legs.
//!
//! Solids are Poisson-disk sampled into point masses joined by springs,
//! legs are attached to the body through a spring-based revolute joint, and
//! a cascaded controller drives the joints along a two-phase gait.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod gait;
pub mod joint;
pub mod metrics;
pub mod report;
pub mod robot;
pub mod sampling;
pub mod scenario;
pub mod spring;

pub use error::{Error, Result};
pub use gait::{
    advance_phase, cascade_control, gait_preset, gait_target, wrap_to_pi, ControllerGains, GaitDriver, GaitParams,
    GaitPreset, Leg, LegPhase, MotorMap,
};
pub use joint::{
    create_joint, joint_measured_state, rotate_joint, AxisSegment, JointParams, RevoluteJoint, RotationSplit,
};
pub use metrics::{LocomotionMetrics, MetricsTracker};
pub use robot::{build_robot, leg_tip_deflection, BodyFrame, ModelParams, Robot, RobotSpec};
pub use sampling::{connect_springs, poisson_sample, SampledPart, ShapeKind, SolidShape, SpringNetwork};
pub use scenario::{alpha_sweep, leg_comparison, run_scenario, Experiment, ScenarioConfig};
pub use spring::{
    throughput_benchmark, ContactModel, Executor, MassPoint, SimState, SpringElement, ThroughputReport, DEFAULT_DT,
};

pub type Vec3 = nalgebra::Vector3<f64>;
