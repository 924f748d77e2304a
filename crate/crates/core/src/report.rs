//! CSV and plain-text output. Floats carry nine significant digits so that
//! regression fixtures diff cleanly.

use std::io::Write;

use crate::error::Result;
use crate::metrics::LocomotionMetrics;
use crate::scenario::{AlphaRow, LegRow, TrajectoryRow};
use crate::spring::ThroughputReport;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Human,
}

/// Nine significant digits in scientific notation.
pub fn fmt9(x: f64) -> String {
    format!("{x:.8e}")
}

fn opt9(x: Option<f64>) -> String {
    x.map(fmt9).unwrap_or_default()
}

pub const METRICS_HEADER: [&str; 10] = [
    "label",
    "avg_velocity_3m",
    "time_to_3m",
    "avg_velocity_window",
    "body_lengths_per_s",
    "yaw_rate",
    "distance_traveled",
    "fell_over",
    "window",
    "body_length",
];

fn metrics_fields(label: &str, m: &LocomotionMetrics) -> Vec<String> {
    vec![
        label.to_string(),
        opt9(m.avg_velocity_3m),
        opt9(m.time_to_3m),
        fmt9(m.avg_velocity_window),
        fmt9(m.body_lengths_per_s),
        fmt9(m.yaw_rate),
        fmt9(m.distance_traveled),
        m.fell_over.to_string(),
        fmt9(m.window),
        fmt9(m.body_length),
    ]
}

pub fn write_metrics_csv<W: Write>(out: W, rows: &[(String, LocomotionMetrics)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER)?;
    for (label, m) in rows {
        w.write_record(metrics_fields(label, m))?;
    }
    w.flush()?;
    Ok(())
}

pub fn metrics_human(label: &str, m: &LocomotionMetrics) -> String {
    let mut s = format!("run: {label}\n");
    match (m.avg_velocity_3m, m.time_to_3m) {
        (Some(v), Some(t)) => {
            s += &format!(
                "  velocity over 3 m   {} m/s ({} BL/s), crossed after {} s\n",
                fmt9(v),
                fmt9(v / m.body_length),
                fmt9(t)
            )
        }
        _ => s += "  velocity over 3 m   not reached\n",
    }
    s += &format!(
        "  window velocity     {} m/s ({} BL/s) over {} s\n",
        fmt9(m.avg_velocity_window),
        fmt9(m.avg_velocity_window / m.body_length),
        fmt9(m.window)
    );
    s += &format!("  body lengths/s      {}\n", fmt9(m.body_lengths_per_s));
    s += &format!("  distance traveled   {} m\n", fmt9(m.distance_traveled));
    s += &format!("  yaw rate            {} rad/s\n", fmt9(m.yaw_rate));
    s += &format!("  fell over           {}\n", m.fell_over);
    s
}

/// Text rendering of one run's metrics.
pub fn report(label: &str, m: &LocomotionMetrics, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Human => Ok(metrics_human(label, m)),
        ReportFormat::Csv => {
            let mut buf = Vec::new();
            write_metrics_csv(&mut buf, &[(label.to_string(), *m)])?;
            Ok(String::from_utf8(buf).expect("csv output is utf-8"))
        }
    }
}

pub fn write_trajectory_csv<W: Write>(out: W, rows: &[TrajectoryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "time", "com_x", "com_y", "com_z", "heading", "pitch", "roll", "up_z", "joint_fl", "joint_fr", "joint_bl",
        "joint_br",
    ])?;
    for r in rows {
        let mut rec = vec![
            fmt9(r.time),
            fmt9(r.com.x),
            fmt9(r.com.y),
            fmt9(r.com.z),
            fmt9(r.heading),
            fmt9(r.pitch),
            fmt9(r.roll),
            fmt9(r.up_z),
        ];
        rec.extend(r.joint_angles.iter().map(|a| fmt9(*a)));
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

fn joined_errors(parts: &[(&str, &std::result::Result<LocomotionMetrics, String>)]) -> String {
    parts
        .iter()
        .filter_map(|(name, r)| r.as_ref().err().map(|e| format!("{name}: {e}")))
        .collect::<Vec<_>>()
        .join("; ")
}

pub fn write_alpha_sweep_csv<W: Write>(out: W, rows: &[AlphaRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "alpha_rad",
        "alpha_deg",
        "pace_velocity",
        "bounding_velocity",
        "yaw_rate",
        "pace_fell_over",
        "bounding_fell_over",
        "turn_fell_over",
        "error",
    ])?;
    for r in rows {
        let v = |m: &std::result::Result<LocomotionMetrics, String>| m.as_ref().ok().map(|m| m.avg_velocity());
        let fell = |m: &std::result::Result<LocomotionMetrics, String>| {
            m.as_ref().map(|m| m.fell_over.to_string()).unwrap_or_default()
        };
        w.write_record([
            fmt9(r.alpha),
            fmt9(r.alpha.to_degrees()),
            opt9(v(&r.pace)),
            opt9(v(&r.bounding)),
            opt9(r.turn.as_ref().ok().map(|m| m.yaw_rate)),
            fell(&r.pace),
            fell(&r.bounding),
            fell(&r.turn),
            joined_errors(&[("pace", &r.pace), ("bounding", &r.bounding), ("turn", &r.turn)]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_leg_comparison_csv<W: Write>(out: W, rows: &[LegRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "variant",
        "leg_hollow",
        "tip_diameter",
        "leg_masses",
        "tip_deflection",
        "avg_velocity",
        "body_lengths_per_s",
        "fell_over",
        "theta_l",
        "theta_h",
        "stance_ratio",
        "cycle_period",
        "error",
    ])?;
    for r in rows {
        let m = r.metrics.as_ref().ok();
        w.write_record([
            r.variant.to_string(),
            r.spec.leg_hollow.to_string(),
            fmt9(r.spec.leg_tip_diameter),
            r.leg_masses.to_string(),
            fmt9(r.tip_deflection),
            opt9(m.map(|m| m.avg_velocity())),
            opt9(m.map(|m| m.body_lengths_per_s)),
            m.map(|m| m.fell_over.to_string()).unwrap_or_default(),
            fmt9(r.gait.theta_l),
            fmt9(r.gait.theta_h),
            fmt9(r.gait.stance_ratio),
            fmt9(r.gait.cycle_period),
            r.metrics.as_ref().err().cloned().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_throughput_csv<W: Write>(out: W, r: &ThroughputReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "masses",
        "springs",
        "steps",
        "spring_evaluations",
        "elapsed_s",
        "spring_evaluations_per_s",
        "steps_per_s",
        "real_time_factor",
        "dt",
        "workers",
    ])?;
    w.write_record([
        r.masses.to_string(),
        r.springs.to_string(),
        r.steps.to_string(),
        r.spring_evaluations.to_string(),
        fmt9(r.elapsed.as_secs_f64()),
        fmt9(r.evaluations_per_second),
        fmt9(r.steps_per_second),
        fmt9(r.real_time_factor),
        fmt9(r.dt),
        r.workers.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

pub fn throughput_human(r: &ThroughputReport) -> String {
    format!(
        "masses                 {}\nsprings                {}\nsteps                  {}\nspring evaluations     {}\n\
         elapsed                {} s\nspring evaluations/s   {}\nsteps/s                {}\n\
         real-time factor       {} (dt = {} s, {} worker(s))\n",
        r.masses,
        r.springs,
        r.steps,
        r.spring_evaluations,
        fmt9(r.elapsed.as_secs_f64()),
        fmt9(r.evaluations_per_second),
        fmt9(r.steps_per_second),
        fmt9(r.real_time_factor),
        fmt9(r.dt),
        r.workers
    )
}

pub fn write_ape_csv<W: Write>(out: W, rows: &[(String, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["label", "absolute_percentage_error"])?;
    for (label, e) in rows {
        w.write_record([label.clone(), fmt9(*e)])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `label,velocity` rows (header required) from a reference file.
pub fn read_reference_csv<R: std::io::Read>(input: R) -> Result<Vec<(String, f64)>> {
    let mut r = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let label = rec.get(0).unwrap_or_default().trim().to_string();
        let value = rec
            .get(1)
            .unwrap_or_default()
            .trim()
            .parse::<f64>()
            .map_err(|e| crate::Error::Config(format!("reference row `{label}`: {e}")))?;
        rows.push((label, value));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> LocomotionMetrics {
        LocomotionMetrics {
            avg_velocity_3m: Some(0.5),
            time_to_3m: Some(6.0),
            avg_velocity_window: 0.45,
            body_lengths_per_s: 0.5 / 0.36,
            yaw_rate: -0.01,
            distance_traveled: 3.4,
            fell_over: false,
            window: 7.5,
            body_length: 0.36,
        }
    }

    #[test]
    fn nine_significant_digits() {
        assert_eq!(fmt9(1.0 / 3.0), "3.33333333e-1");
        assert_eq!(fmt9(0.0), "0.00000000e0");
    }

    #[test]
    fn csv_is_stable() {
        let a = report("bounding", &sample(), ReportFormat::Csv).unwrap();
        let b = report("bounding", &sample(), ReportFormat::Csv).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("label,avg_velocity_3m,time_to_3m,"));
        assert_eq!(a.lines().count(), 2);
    }

    #[test]
    fn human_has_body_lengths() {
        let h = report("bounding", &sample(), ReportFormat::Human).unwrap();
        assert!(h.contains("m/s"));
        assert!(h.contains("BL/s"));
    }

    #[test]
    fn empty_sweep_is_header_only() {
        let mut buf = Vec::new();
        write_alpha_sweep_csv(&mut buf, &[]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("alpha_rad,"));
    }

    #[test]
    fn reference_round_trip() {
        let rows = read_reference_csv("label,velocity\npace,0.8\nbounding, 0.9\n".as_bytes()).unwrap();
        assert_eq!(rows, vec![("pace".to_string(), 0.8), ("bounding".to_string(), 0.9)]);
        assert!(read_reference_csv("label,velocity\npace,fast\n".as_bytes()).is_err());
    }
}
