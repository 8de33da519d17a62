use serde::{Deserialize, Serialize};

use crate::dynamics::WORKSPACE;
use crate::error::{CanError, Result};

/// A moving circular obstacle. Moves at constant velocity and bounces
/// elastically off the workspace walls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleParams {
    pub center: [f64; 2],
    pub radius: f64,
    pub velocity: [f64; 2],
}

impl ObstacleParams {
    pub fn advance(&mut self, dt: f64) {
        let bound = WORKSPACE - self.radius;
        for d in 0..2 {
            let mut c = self.center[d] + self.velocity[d] * dt;
            if c > bound {
                c = 2.0 * bound - c;
                self.velocity[d] = -self.velocity[d];
            } else if c < -bound {
                c = -2.0 * bound - c;
                self.velocity[d] = -self.velocity[d];
            }
            self.center[d] = c;
        }
    }
}

/// A vertical door segment at `x` spanning `[y_min, y_max]` that is open
/// only during the listed `[t_start, t_end)` intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoorSchedule {
    pub x: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub open_intervals: Vec<[f64; 2]>,
}

impl DoorSchedule {
    pub fn validate(&self, horizon_time: f64) -> Result<()> {
        if !(self.y_min < self.y_max) || self.x.abs() > WORKSPACE {
            return Err(CanError::Config("door segment is degenerate".into()));
        }
        let mut sorted = self.open_intervals.clone();
        sorted.sort_by(|a, b| a[0].total_cmp(&b[0]));
        for iv in &sorted {
            if !(iv[0] < iv[1]) || iv[0] < 0.0 || iv[1] > horizon_time + 1e-9 {
                return Err(CanError::Config(format!(
                    "door interval {iv:?} is empty or outside the horizon"
                )));
            }
        }
        if sorted.windows(2).any(|w| w[1][0] < w[0][1]) {
            return Err(CanError::Config("door intervals overlap".into()));
        }
        Ok(())
    }

    pub fn is_open(&self, t: f64) -> bool {
        self.open_intervals.iter().any(|iv| t >= iv[0] && t < iv[1])
    }

    /// Zero while open; otherwise the wait until the next opening, if any.
    pub fn time_to_next_open(&self, t: f64) -> Option<f64> {
        if self.is_open(t) {
            return Some(0.0);
        }
        self.open_intervals
            .iter()
            .filter(|iv| iv[0] > t)
            .map(|iv| iv[0] - t)
            .min_by(f64::total_cmp)
    }

    pub fn endpoints(&self) -> ([f64; 2], [f64; 2]) {
        ([self.x, self.y_min], [self.x, self.y_max])
    }
}

/// Piecewise-linear speed limit `L(t)` given by `(t, L)` knots; held
/// constant outside the knot range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedLimitProfile {
    pub knots: Vec<[f64; 2]>,
    #[serde(default = "default_speed_penalty")]
    pub penalty_coeff: f64,
}

fn default_speed_penalty() -> f64 {
    0.3
}

impl SpeedLimitProfile {
    pub fn validate(&self) -> Result<()> {
        if self.knots.is_empty() {
            return Err(CanError::Config("speed profile needs at least one knot".into()));
        }
        if self.knots.windows(2).any(|w| !(w[1][0] > w[0][0])) {
            return Err(CanError::Config("speed profile knots must increase in time".into()));
        }
        if self.knots.iter().any(|k| !(k[1] > 0.0)) {
            return Err(CanError::Config("speed limit must stay positive".into()));
        }
        Ok(())
    }

    pub fn limit_at(&self, t: f64) -> f64 {
        let first = self.knots[0];
        let last = self.knots[self.knots.len() - 1];
        if t <= first[0] {
            return first[1];
        }
        if t >= last[0] {
            return last[1];
        }
        let i = self.knots.partition_point(|k| k[0] <= t);
        let (a, b) = (self.knots[i - 1], self.knots[i]);
        a[1] + (b[1] - a[1]) * (t - a[0]) / (b[0] - a[0])
    }
}

/// Constant generalized force added to the actuators every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceForce {
    pub force: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn obstacle_bounces_inside_workspace() {
        let mut o = ObstacleParams {
            center: [0.85, 0.0],
            radius: 0.1,
            velocity: [1.0, 0.0],
        };
        o.advance(0.1);
        assert!((o.center[0] - 0.85).abs() < 1e-12);
        assert_eq!(o.velocity[0], -1.0);
        for _ in 0..1000 {
            o.advance(0.05);
            assert!(o.center[0].abs() <= 0.9 + 1e-12);
        }
    }

    #[test]
    fn door_schedule_queries() {
        let door = DoorSchedule {
            x: 0.0,
            y_min: -1.0,
            y_max: 1.0,
            open_intervals: vec![[1.5, 3.5], [5.0, 10.0]],
        };
        door.validate(10.0).unwrap();
        assert!(!door.is_open(0.0));
        assert!(door.is_open(1.5));
        assert!(!door.is_open(3.5));
        assert_eq!(door.time_to_next_open(1.0), Some(0.5));
        assert_eq!(door.time_to_next_open(2.0), Some(0.0));
        assert_eq!(door.time_to_next_open(4.0), Some(1.0));
        let closed = DoorSchedule {
            open_intervals: vec![[1.0, 2.0]],
            ..door.clone()
        };
        assert_eq!(closed.time_to_next_open(3.0), None);
        let overlapping = DoorSchedule {
            open_intervals: vec![[1.0, 3.0], [2.0, 4.0]],
            ..door
        };
        assert!(overlapping.validate(10.0).is_err());
    }

    #[test]
    fn speed_profile_interpolates() {
        let p = SpeedLimitProfile {
            knots: vec![[0.0, 1.0], [2.0, 0.5], [4.0, 0.5]],
            penalty_coeff: 0.3,
        };
        p.validate().unwrap();
        assert_eq!(p.limit_at(-1.0), 1.0);
        assert!((p.limit_at(1.0) - 0.75).abs() < 1e-15);
        assert_eq!(p.limit_at(3.0), 0.5);
        assert_eq!(p.limit_at(9.0), 0.5);
    }
}
