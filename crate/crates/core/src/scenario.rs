//! Scenario configuration and the experiment runners built on it.

use std::f64::consts::TAU;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gait::{preset_params, ControllerGains, GaitDriver, GaitParams, GaitPreset, MotorMap};
use crate::metrics::{heading, LocomotionMetrics, MetricsTracker};
use crate::robot::{body_frame, build_robot, leg_tip_deflection, sample_leg, ModelParams, Robot, RobotSpec};
use crate::spring::{throughput_benchmark, ContactModel, Executor, ThroughputReport, STANDARD_GRAVITY};
use crate::Vec3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSettings {
    /// Gravitational acceleration (m/s^2), acting along -z.
    pub gravity: f64,
    pub contact: ContactModel,
    /// Global viscous drag per mass (N·s/m).
    pub drag: f64,
    pub workers: usize,
    /// Controller period; must be a whole number of physics steps.
    pub control_dt: f64,
    /// Physics steps between joint rotation updates.
    pub joint_update_divisor: u64,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            gravity: STANDARD_GRAVITY,
            contact: ContactModel::default(),
            drag: 0.0,
            workers: 1,
            control_dt: 1e-3,
            joint_update_divisor: 20,
        }
    }
}

/// A named gait with optional overrides of its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaitConfig {
    pub preset: GaitPreset,
    pub theta_l: Option<f64>,
    pub theta_h: Option<f64>,
    pub stance_ratio: Option<f64>,
    pub cycle_period: Option<f64>,
    /// Mean joint speed (rad/s); sets the cycle period to `2pi / speed`.
    pub joint_speed: Option<f64>,
    pub phase_offsets: Option<[f64; 4]>,
    pub direction_signs: Option<[f64; 4]>,
}

impl Default for GaitConfig {
    fn default() -> Self {
        Self {
            preset: GaitPreset::Bounding,
            theta_l: None,
            theta_h: None,
            stance_ratio: None,
            cycle_period: None,
            joint_speed: None,
            phase_offsets: None,
            direction_signs: None,
        }
    }
}

impl GaitConfig {
    /// Parameters of `preset` with the timing and stance overrides applied.
    /// Phase offsets and direction signs are only overridden for the
    /// configured preset itself.
    pub fn resolve_for(&self, preset: GaitPreset) -> Result<GaitParams> {
        let mut g = preset_params(preset);
        if let Some(v) = self.theta_l {
            g.theta_l = v;
        }
        if let Some(v) = self.theta_h {
            g.theta_h = v;
        }
        if let Some(v) = self.stance_ratio {
            g.stance_ratio = v;
        }
        if let Some(v) = self.cycle_period {
            g.cycle_period = v;
        }
        if let Some(w) = self.joint_speed {
            if self.cycle_period.is_some() {
                return Err(Error::Config(
                    "set either gait.cycle_period or gait.joint_speed, not both".into(),
                ));
            }
            if !(w > 0.0) {
                return Err(Error::param("gait.joint_speed", "must be > 0"));
            }
            g.cycle_period = TAU / w;
        }
        if preset == self.preset {
            if let Some(v) = self.phase_offsets {
                g.phase_offsets = v;
            }
            if let Some(v) = self.direction_signs {
                g.direction_signs = v;
            }
        }
        g.validate()?;
        Ok(g)
    }

    pub fn resolve(&self) -> Result<GaitParams> {
        self.resolve_for(self.preset)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Physics steps between trajectory rows.
    pub trajectory_stride: u64,
    pub dir: String,
    pub metrics_file: String,
    pub trajectory_file: String,
    pub manifest_file: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            trajectory_stride: 200,
            dir: "out".into(),
            metrics_file: "metrics.csv".into(),
            trajectory_file: "trajectory.csv".into(),
            manifest_file: "manifest.toml".into(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Experiment {
    #[default]
    SingleRun,
    AlphaSweep {
        /// Leg angles in degrees.
        alphas_deg: Vec<f64>,
    },
    LegComparison {
        solid_tip_diameter: f64,
        /// Sideways tip load for the deflection measurement (N).
        tip_load: f64,
    },
    Throughput {
        n_steps: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Total simulated time, settling included (s).
    pub duration: f64,
    /// Time before the gait starts; metrics are measured after it.
    pub settle_time: f64,
    /// End the run once the 3 m mark is crossed.
    pub stop_after_3m: bool,
    pub robot: RobotSpec,
    pub model: ModelParams,
    pub sim: SimSettings,
    pub gait: GaitConfig,
    pub gains: ControllerGains,
    pub motor: MotorMap,
    pub output: OutputConfig,
    pub experiment: Experiment,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            duration: 5.0,
            settle_time: 0.5,
            stop_after_3m: false,
            robot: RobotSpec::default(),
            model: ModelParams::default(),
            sim: SimSettings::default(),
            gait: GaitConfig::default(),
            gains: ControllerGains::default(),
            motor: MotorMap::default(),
            output: OutputConfig::default(),
            experiment: Experiment::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(Error::param("duration", "must be finite and > 0"));
        }
        if !(self.settle_time >= 0.0 && self.settle_time < self.duration) {
            return Err(Error::param("settle_time", "must lie in [0, duration)"));
        }
        if self.sim.workers == 0 {
            return Err(Error::param("sim.workers", "must be >= 1"));
        }
        if self.output.trajectory_stride == 0 {
            return Err(Error::param("output.trajectory_stride", "must be >= 1"));
        }
        self.sim.contact.validate()?;
        self.robot.validate()?;
        self.model.validate()?;
        self.gains.validate()?;
        self.gait.resolve()?;
        match &self.experiment {
            Experiment::AlphaSweep { alphas_deg } => {
                if let Some(a) = alphas_deg.iter().find(|a| !(0.0..=60.0).contains(*a)) {
                    return Err(Error::param("experiment.alphas_deg", format!("{a} outside [0, 60]")));
                }
            }
            Experiment::LegComparison {
                solid_tip_diameter,
                tip_load,
            } => {
                if !(*solid_tip_diameter > 0.0) || !(*tip_load > 0.0) {
                    return Err(Error::param(
                        "experiment",
                        "solid_tip_diameter and tip_load must be > 0",
                    ));
                }
            }
            Experiment::Throughput { n_steps } if *n_steps == 0 => {
                return Err(Error::param("experiment.n_steps", "must be >= 1"));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn executor(&self) -> Result<Executor> {
        Executor::with_workers(self.sim.workers)
    }

    /// Robot built from this config with the simulation settings applied.
    pub fn build(&self) -> Result<Robot> {
        let mut robot = build_robot(&self.robot, &self.model, self.seed)?;
        robot.state.gravity = Vec3::new(0.0, 0.0, -self.sim.gravity);
        robot.state.contact = Some(self.sim.contact);
        robot.state.drag = self.sim.drag;
        Ok(robot)
    }
}

/// One sampled row of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub time: f64,
    pub com: Vec3,
    pub heading: f64,
    pub pitch: f64,
    pub roll: f64,
    pub up_z: f64,
    pub joint_angles: [f64; 4],
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub metrics: LocomotionMetrics,
    pub trajectory: Vec<TrajectoryRow>,
    pub steps: u64,
    pub masses: usize,
    pub springs: usize,
}

fn sample_row(
    robot_state: &crate::spring::SimState,
    refs: [usize; 3],
    joints: &[crate::joint::RevoluteJoint],
) -> TrajectoryRow {
    let f = body_frame(robot_state, refs);
    let mut joint_angles = [0.0; 4];
    for (a, j) in joint_angles.iter_mut().zip(joints) {
        *a = j.unwrapped_angle;
    }
    TrajectoryRow {
        time: robot_state.sim_time(),
        com: robot_state.center_of_mass(),
        heading: heading(&f),
        pitch: f.forward.z.clamp(-1.0, 1.0).asin(),
        roll: f.left.z.atan2(f.up.z),
        up_z: f.up.z,
        joint_angles,
    }
}

/// Settles `robot`, then drives it with `gait` until `cfg.duration`.
pub fn run_robot(mut robot: Robot, cfg: &ScenarioConfig, gait: GaitParams, exec: &Executor) -> Result<RunOutcome> {
    let dt = robot.state.dt();
    let mut driver = GaitDriver::new(
        gait,
        cfg.gains,
        cfg.motor,
        cfg.sim.control_dt,
        dt,
        cfg.sim.joint_update_divisor,
        robot.joints.len(),
    )?;
    driver.start_time = cfg.settle_time;
    let substeps = driver.control_substeps;
    let total = (cfg.duration / dt).round() as u64;
    let settle = (cfg.settle_time / dt).round() as u64;
    let stride = cfg.output.trajectory_stride;
    let refs = robot.reference_masses;
    let body_length = robot.body_length;

    let mut trajectory = vec![sample_row(&robot.state, refs, &robot.joints)];
    let mut tracker: Option<MetricsTracker> = None;
    if settle == 0 {
        tracker = Some(MetricsTracker::new(
            robot.state.sim_time(),
            robot.state.center_of_mass(),
            &body_frame(&robot.state, refs),
            body_length,
        ));
    }
    let mut done = 0;
    while done < total {
        let chunk = substeps.min(total - done);
        driver.drive_joints(&mut robot.state, &mut robot.joints, exec, chunk, |state, joints| {
            let step = state.step_count();
            if step % stride == 0 {
                trajectory.push(sample_row(state, refs, joints));
            }
        })?;
        done += chunk;
        let s = &robot.state;
        match tracker.as_mut() {
            Some(t) => t.record(s.sim_time(), s.center_of_mass(), &body_frame(s, refs)),
            None if done >= settle => {
                tracker = Some(MetricsTracker::new(
                    s.sim_time(),
                    s.center_of_mass(),
                    &body_frame(s, refs),
                    body_length,
                ))
            }
            None => {}
        }
        if cfg.stop_after_3m && tracker.as_ref().is_some_and(|t| t.crossed()) {
            break;
        }
    }
    let metrics = tracker.expect("settle time below duration").finish();
    Ok(RunOutcome {
        metrics,
        trajectory,
        steps: robot.state.step_count(),
        masses: robot.state.masses().len(),
        springs: robot.state.springs().len(),
    })
}

/// Builds the configured robot and runs the configured gait.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let exec = cfg.executor()?;
    run_robot(cfg.build()?, cfg, cfg.gait.resolve()?, &exec)
}

/// Same as [`run_scenario`] with a different gait preset.
pub fn run_preset(cfg: &ScenarioConfig, preset: GaitPreset, exec: &Executor) -> Result<RunOutcome> {
    run_robot(cfg.build()?, cfg, cfg.gait.resolve_for(preset)?, exec)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlphaRow {
    pub alpha: f64,
    pub pace: std::result::Result<LocomotionMetrics, String>,
    pub bounding: std::result::Result<LocomotionMetrics, String>,
    pub turn: std::result::Result<LocomotionMetrics, String>,
}

/// Pace, bounding and in-place turning (all legs in the same direction)
/// for each leg angle, each on a fresh robot with the same seed. Rows run
/// on `cfg.sim.workers` threads; a failed run is recorded in its row.
pub fn alpha_sweep(cfg: &ScenarioConfig, alphas: &[f64]) -> Result<Vec<AlphaRow>> {
    cfg.validate()?;
    for &a in alphas {
        if !(0.0..=std::f64::consts::FRAC_PI_3 + 1e-12).contains(&a) {
            return Err(Error::param("alphas", format!("{a} rad outside [0, pi/3]")));
        }
    }
    let row = |&alpha: &f64| -> AlphaRow {
        let mut c = cfg.clone();
        c.robot.leg_angle_alpha = alpha;
        let exec = Executor::sequential();
        let run = |p| run_preset(&c, p, &exec).map(|o| o.metrics).map_err(|e| e.to_string());
        AlphaRow {
            alpha,
            pace: run(GaitPreset::Pace),
            bounding: run(GaitPreset::Bounding),
            turn: run(GaitPreset::TurnLeft),
        }
    };
    if cfg.sim.workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.sim.workers)
            .build()
            .map_err(|e| Error::param("sim.workers", e.to_string()))?;
        Ok(pool.install(|| alphas.par_iter().map(row).collect()))
    } else {
        Ok(alphas.iter().map(row).collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LegRow {
    pub variant: &'static str,
    pub spec: RobotSpec,
    pub gait: GaitParams,
    pub leg_masses: usize,
    pub tip_deflection: f64,
    pub metrics: std::result::Result<LocomotionMetrics, String>,
}

/// Hollow legs as configured against solid legs with `solid_tip_diameter`,
/// same gait and seed.
pub fn leg_comparison(cfg: &ScenarioConfig, solid_tip_diameter: f64, tip_load: f64) -> Result<Vec<LegRow>> {
    cfg.validate()?;
    let gait = cfg.gait.resolve()?;
    let exec = cfg.executor()?;
    let hollow = RobotSpec {
        leg_hollow: true,
        ..cfg.robot
    };
    let solid = RobotSpec {
        leg_hollow: false,
        leg_tip_diameter: solid_tip_diameter,
        ..cfg.robot
    };
    let mut rows = Vec::with_capacity(2);
    for (variant, spec) in [("hollow", hollow), ("solid", solid)] {
        let mut c = cfg.clone();
        c.robot = spec;
        let leg_masses = sample_leg(&spec, &c.model, c.seed)?.len();
        let tip_deflection = leg_tip_deflection(&spec, &c.model, tip_load, c.seed)?;
        let metrics = c
            .build()
            .and_then(|r| run_robot(r, &c, gait, &exec))
            .map(|o| o.metrics)
            .map_err(|e| e.to_string());
        rows.push(LegRow {
            variant,
            spec,
            gait,
            leg_masses,
            tip_deflection,
            metrics,
        });
    }
    Ok(rows)
}

/// Times `n_steps` physics steps of the configured robot.
pub fn throughput(cfg: &ScenarioConfig, n_steps: u64) -> Result<ThroughputReport> {
    cfg.validate()?;
    let mut robot = cfg.build()?;
    throughput_benchmark(&mut robot.state, n_steps, &cfg.executor()?)
}
