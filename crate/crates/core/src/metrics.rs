//! Locomotion measurements from sampled body poses.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::robot::BodyFrame;
use crate::Vec3;

/// Distance over which the crossing velocity is measured.
pub const VELOCITY_DISTANCE: f64 = 3.0;

/// Body up-vector z component below which the robot counts as fallen.
pub const FALL_UP_Z: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocomotionMetrics {
    /// `VELOCITY_DISTANCE / time_to_3m`, when the distance was covered.
    pub avg_velocity_3m: Option<f64>,
    pub time_to_3m: Option<f64>,
    /// Forward displacement over the measurement window divided by its
    /// length.
    pub avg_velocity_window: f64,
    pub body_lengths_per_s: f64,
    pub yaw_rate: f64,
    pub distance_traveled: f64,
    pub fell_over: bool,
    pub window: f64,
    pub body_length: f64,
}

impl LocomotionMetrics {
    /// Crossing velocity when available, otherwise the window average.
    pub fn avg_velocity(&self) -> f64 {
        self.avg_velocity_3m.unwrap_or(self.avg_velocity_window)
    }
}

/// Heading of the forward vector in the ground plane.
pub fn heading(frame: &BodyFrame) -> f64 {
    frame.forward.y.atan2(frame.forward.x)
}

/// Accumulates pose samples from the start of the measurement window.
#[derive(Clone, Debug)]
pub struct MetricsTracker {
    start_time: f64,
    origin: Vec3,
    /// Unit forward direction in the ground plane at the window start.
    direction: Vec3,
    start_heading: f64,
    last_heading: f64,
    unwrapped: f64,
    last_time: f64,
    last_forward: f64,
    crossing: Option<f64>,
    fell_over: bool,
    body_length: f64,
}

impl MetricsTracker {
    pub fn new(time: f64, com: Vec3, frame: &BodyFrame, body_length: f64) -> Self {
        let h = heading(frame);
        Self {
            start_time: time,
            origin: com,
            direction: Vec3::new(h.cos(), h.sin(), 0.0),
            start_heading: h,
            last_heading: h,
            unwrapped: h,
            last_time: time,
            last_forward: 0.0,
            crossing: None,
            fell_over: frame.up.z < FALL_UP_Z,
            body_length,
        }
    }

    /// Forward displacement of `com` along the initial heading.
    pub fn forward(&self, com: &Vec3) -> f64 {
        (com - self.origin).dot(&self.direction)
    }

    pub fn crossed(&self) -> bool {
        self.crossing.is_some()
    }

    pub fn record(&mut self, time: f64, com: Vec3, frame: &BodyFrame) {
        let d = self.forward(&com);
        if self.crossing.is_none() && d >= VELOCITY_DISTANCE {
            let span = d - self.last_forward;
            let frac = if span > 0.0 {
                ((VELOCITY_DISTANCE - self.last_forward) / span).clamp(0.0, 1.0)
            } else {
                1.0
            };
            let t = self.last_time + frac * (time - self.last_time);
            self.crossing = Some(t - self.start_time);
        }
        let h = heading(frame);
        let mut dh = (h - self.last_heading).rem_euclid(TAU);
        if dh > PI {
            dh -= TAU;
        }
        self.unwrapped += dh;
        self.last_heading = h;
        self.last_time = time;
        self.last_forward = d;
        if frame.up.z < FALL_UP_Z {
            self.fell_over = true;
        }
    }

    pub fn finish(&self) -> LocomotionMetrics {
        let window = self.last_time - self.start_time;
        let rate = |x: f64| if window > 0.0 { x / window } else { 0.0 };
        let avg_velocity_3m = self.crossing.map(|t| VELOCITY_DISTANCE / t);
        let avg_velocity_window = rate(self.last_forward);
        let avg = avg_velocity_3m.unwrap_or(avg_velocity_window);
        LocomotionMetrics {
            avg_velocity_3m,
            time_to_3m: self.crossing,
            avg_velocity_window,
            body_lengths_per_s: avg / self.body_length,
            yaw_rate: rate(self.unwrapped - self.start_heading),
            distance_traveled: self.last_forward,
            fell_over: self.fell_over,
            window,
            body_length: self.body_length,
        }
    }
}

/// Absolute percentage error of each simulated value against the
/// reference entry with the same key. Keys missing on either side are
/// skipped.
pub fn absolute_percentage_errors(simulated: &[(String, f64)], reference: &[(String, f64)]) -> Vec<(String, f64)> {
    simulated
        .iter()
        .filter_map(|(key, sim)| {
            let (_, r) = reference.iter().find(|(k, _)| k == key)?;
            Some((key.clone(), 100.0 * (sim - r).abs() / r.abs()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(h: f64) -> BodyFrame {
        BodyFrame {
            forward: Vec3::new(h.cos(), h.sin(), 0.0),
            left: Vec3::new(-h.sin(), h.cos(), 0.0),
            up: Vec3::z(),
        }
    }

    #[test]
    fn straight_line_at_one_metre_per_second() {
        let dir = Vec3::new(0.6, 0.8, 0.0);
        let h = dir.y.atan2(dir.x);
        let start = Vec3::new(2.0, -1.0, 0.1);
        let mut t = MetricsTracker::new(0.5, start, &frame(h), 0.36);
        for k in 1..=4000 {
            let time = 0.5 + k as f64 * 1e-3;
            t.record(time, start + dir * (time - 0.5), &frame(h));
        }
        let m = t.finish();
        assert!((m.avg_velocity_3m.unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(m.avg_velocity_3m.unwrap() * m.time_to_3m.unwrap(), VELOCITY_DISTANCE);
        assert!((m.avg_velocity_window - 1.0).abs() < 1e-9);
        assert!((m.body_lengths_per_s - 1.0 / 0.36).abs() < 1e-9);
        assert!(m.yaw_rate.abs() < 1e-12);
        assert!(!m.fell_over);
    }

    #[test]
    fn crossing_interpolates_between_samples() {
        let mut t = MetricsTracker::new(0.0, Vec3::zeros(), &frame(0.0), 1.0);
        t.record(1.0, Vec3::new(2.0, 0.0, 0.0), &frame(0.0));
        t.record(2.0, Vec3::new(4.0, 0.0, 0.0), &frame(0.0));
        assert_eq!(t.finish().time_to_3m, Some(1.5));
    }

    #[test]
    fn yaw_unwraps_through_pi() {
        let mut t = MetricsTracker::new(0.0, Vec3::zeros(), &frame(3.0), 1.0);
        for k in 1..=100 {
            t.record(k as f64 * 0.01, Vec3::zeros(), &frame(3.0 + 0.01 * k as f64));
        }
        assert!((t.finish().yaw_rate - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fall_detected() {
        let mut t = MetricsTracker::new(0.0, Vec3::zeros(), &frame(0.0), 1.0);
        let mut f = frame(0.0);
        f.up = Vec3::new(0.0, 0.9, 0.3);
        t.record(0.1, Vec3::zeros(), &f);
        t.record(0.2, Vec3::zeros(), &frame(0.0));
        let m = t.finish();
        assert!(m.fell_over);
        assert_eq!(m.avg_velocity_3m, None);
        assert_eq!(m.avg_velocity(), 0.0);
    }

    #[test]
    fn ape_matches_keys() {
        let sim = vec![("pace".to_string(), 0.9), ("bounding".to_string(), 1.1)];
        let reference = vec![("bounding".to_string(), 1.0)];
        let ape = absolute_percentage_errors(&sim, &reference);
        assert_eq!(ape.len(), 1);
        assert!((ape[0].1 - 10.0).abs() < 1e-9);
    }
}
