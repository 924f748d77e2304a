use softpod_core::gait::ControllerGains;
use softpod_core::scenario::{alpha_sweep, leg_comparison, run_robot, run_scenario, ScenarioConfig};
use softpod_core::spring::Executor;
use softpod_core::Vec3;

fn short(duration: f64) -> ScenarioConfig {
    ScenarioConfig {
        duration,
        settle_time: 0.1,
        ..ScenarioConfig::default()
    }
}

#[test]
fn zero_gains_stand_still() {
    let mut cfg = short(2.0);
    cfg.gains = ControllerGains::zero();
    let out = run_scenario(&cfg).unwrap();
    let m = out.metrics;
    assert!(m.avg_velocity().abs() < 0.01, "{m:?}");
    assert!(!m.fell_over);
    for row in &out.trajectory {
        assert_eq!(row.joint_angles, [0.0; 4]);
    }
}

#[test]
fn repeated_runs_are_identical() {
    let cfg = short(0.6);
    let a = run_scenario(&cfg).unwrap();
    let b = run_scenario(&cfg).unwrap();
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.trajectory, b.trajectory);
    assert_eq!(a.steps, (0.6 / cfg.model.dt).round() as u64);
}

#[test]
fn horizontal_shift_moves_the_trajectory_only() {
    let cfg = short(0.3);
    let gait = cfg.gait.resolve().unwrap();
    let exec = Executor::sequential();
    let base = run_robot(cfg.build().unwrap(), &cfg, gait, &exec).unwrap();
    let offset = Vec3::new(0.37, -0.21, 0.0);
    let mut moved = cfg.build().unwrap();
    for m in moved.state.masses_mut() {
        m.position += offset;
    }
    let shifted = run_robot(moved, &cfg, gait, &exec).unwrap();
    for (a, b) in base.trajectory.iter().zip(&shifted.trajectory) {
        assert!(
            (b.com - a.com - offset).norm() < 1e-9,
            "t {}: {:e}",
            a.time,
            (b.com - a.com - offset).norm()
        );
        assert!((b.heading - a.heading).abs() < 1e-9);
    }
    assert!((base.metrics.distance_traveled - shifted.metrics.distance_traveled).abs() < 1e-9);
}

#[test]
fn alpha_sweep_reports_every_gait_per_angle() {
    let cfg = short(0.4);
    let alphas = [0.0f64, 10.0, 20.0, 30.0].map(f64::to_radians);
    let rows = alpha_sweep(&cfg, &alphas).unwrap();
    assert_eq!(rows.len(), 4);
    for (row, a) in rows.iter().zip(alphas) {
        assert_eq!(row.alpha, a);
        for m in [&row.pace, &row.bounding, &row.turn] {
            assert!(m.as_ref().unwrap().avg_velocity().is_finite());
        }
    }
    assert!(alpha_sweep(&cfg, &[2.0]).is_err());
}

#[test]
fn leg_comparison_shares_the_gait() {
    let cfg = short(0.3);
    let rows = leg_comparison(&cfg, 0.040, 1.0).unwrap();
    assert_eq!(rows.len(), 2);
    let (hollow, solid) = (&rows[0], &rows[1]);
    assert_eq!((hollow.variant, solid.variant), ("hollow", "solid"));
    assert_eq!(hollow.gait, solid.gait);
    assert!(hollow.spec.leg_hollow && !solid.spec.leg_hollow);
    assert_eq!(solid.spec.leg_tip_diameter, 0.040);
    assert!(hollow.metrics.is_ok() && solid.metrics.is_ok());
    assert!(hollow.tip_deflection > 0.0 && solid.tip_deflection > 0.0);
}

#[test]
fn shipped_configs_parse() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs");
    for name in [
        "default.toml",
        "alpha_sweep.toml",
        "leg_comparison.toml",
        "large_scale.toml",
    ] {
        let cfg = ScenarioConfig::load(std::path::Path::new(dir).join(name).as_path()).unwrap();
        cfg.validate().unwrap();
    }
}
