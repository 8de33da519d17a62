//! Attributes: each owns a minimal state view, a reward, an activity test
//! and optionally an effect on the dynamics.
//!
//! View layouts (robot state first, then the attribute's entities):
//!
//! | attribute  | view                                                     |
//! |------------|----------------------------------------------------------|
//! | reaching   | robot ⊕ (target − effector)                              |
//! | obstacle   | robot ⊕ (center − effector) ⊕ velocity ⊕ radius          |
//! | door       | robot ⊕ (x − anchor_x, y_min − anchor_y, y_max − anchor_y) ⊕ time to next opening |
//! | speed      | robot ⊕ L(t)                                             |
//! | force      | robot ⊕ disturbance vector                               |

mod entities;
mod geometry;
mod task;

use serde::{Deserialize, Serialize};

pub use entities::{DisturbanceForce, DoorSchedule, ObstacleParams, SpeedLimitProfile};
pub use geometry::{point_segment_distance, segment_segment_distance};
pub use task::{
    AddonConfig, DisturbanceConfig, DoorConfig, EpisodeStats, Event, ObstacleConfig, Scenario,
    SpeedLimitConfig, StepOutcome, Task, TaskFile,
};

use crate::dynamics::{RobotKind, RobotState, SimConfig, WorldState};
use crate::error::{CanError, Result};

pub const REACH_REWARD: f64 = 1.0;
pub const OBSTACLE_PENALTY: f64 = -0.3;
pub const DOOR_PENALTY: f64 = -0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    Reaching,
    Obstacle,
    Door,
    SpeedLimit,
    Force,
}

impl AttributeKind {
    pub fn name(self) -> &'static str {
        match self {
            AttributeKind::Reaching => "reaching",
            AttributeKind::Obstacle => "obstacle",
            AttributeKind::Door => "door",
            AttributeKind::SpeedLimit => "speed_limit",
            AttributeKind::Force => "force",
        }
    }
}

/// One attribute of a task. `entity` selects which obstacle an obstacle
/// attribute is bound to and is zero otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub id: usize,
    pub kind: AttributeKind,
    #[serde(default)]
    pub entity: usize,
}

impl AttributeSpec {
    pub fn base() -> Self {
        Self {
            id: 0,
            kind: AttributeKind::Reaching,
            entity: 0,
        }
    }

    pub fn state_dim(&self, robot: RobotKind) -> usize {
        robot.state_dim()
            + match self.kind {
                AttributeKind::Reaching => 2,
                AttributeKind::Obstacle => 5,
                AttributeKind::Door => 4,
                AttributeKind::SpeedLimit => 1,
                AttributeKind::Force => robot.action_dim(),
            }
    }

    /// The attribute's minimal view of `world`.
    pub fn extract(&self, world: &WorldState, cfg: &SimConfig) -> Result<Vec<f64>> {
        let mut view = world.robot.to_vec();
        let effector = world.robot.effector(cfg);
        match self.kind {
            AttributeKind::Reaching => {
                view.extend([world.target[0] - effector[0], world.target[1] - effector[1]]);
            }
            AttributeKind::Obstacle => {
                let o = self.obstacle(world)?;
                view.extend([
                    o.center[0] - effector[0],
                    o.center[1] - effector[1],
                    o.velocity[0],
                    o.velocity[1],
                    o.radius,
                ]);
            }
            AttributeKind::Door => {
                let door = door_of(world)?;
                let anchor = body_anchor(&world.robot);
                let wait = door
                    .time_to_next_open(world.time)
                    .unwrap_or(cfg.horizon as f64 * cfg.dt);
                view.extend([
                    door.x - anchor[0],
                    door.y_min - anchor[1],
                    door.y_max - anchor[1],
                    wait,
                ]);
            }
            AttributeKind::SpeedLimit => {
                view.push(speed_profile_of(world)?.limit_at(world.time));
            }
            AttributeKind::Force => {
                let f = disturbance_of(world)?;
                if f.force.len() != world.robot.kind().action_dim() {
                    return Err(CanError::Config("disturbance has the wrong dimension".into()));
                }
                view.extend_from_slice(&f.force);
            }
        }
        Ok(view)
    }

    /// `R_i` evaluated on the post-step world.
    pub fn reward(&self, world: &WorldState, action: &[f64], cfg: &SimConfig) -> Result<f64> {
        Ok(match self.kind {
            AttributeKind::Reaching => reward_reaching(world, action, cfg),
            AttributeKind::Obstacle => reward_obstacle(world, action, self.obstacle(world)?, cfg),
            AttributeKind::Door => reward_door(world, action, door_of(world)?, cfg),
            AttributeKind::SpeedLimit => reward_speed(world, action, speed_profile_of(world)?),
            AttributeKind::Force => reward_force(world, action),
        })
    }

    /// Whether the attribute currently constrains the robot.
    pub fn is_active(&self, world: &WorldState, cfg: &SimConfig) -> Result<bool> {
        Ok(match self.kind {
            AttributeKind::Reaching => true,
            AttributeKind::Obstacle => {
                let o = self.obstacle(world)?;
                obstacle_clearance(world, o, cfg) <= 3.0 * contact_range(o, cfg)
            }
            AttributeKind::Door => {
                let door = door_of(world)?;
                !door.is_open(world.time) && (body_anchor(&world.robot)[0] - door.x).abs() <= 0.3
            }
            AttributeKind::SpeedLimit => {
                world.robot.max_speed() > 0.8 * speed_profile_of(world)?.limit_at(world.time)
            }
            AttributeKind::Force => disturbance_of(world)?.force.iter().any(|f| *f != 0.0),
        })
    }

    /// Generalized force the attribute adds to the actuators before stepping.
    pub fn dynamics_effect(&self, world: &WorldState) -> Option<Vec<f64>> {
        match self.kind {
            AttributeKind::Force => world.disturbance.as_ref().map(|d| d.force.clone()),
            _ => None,
        }
    }

    fn obstacle<'w>(&self, world: &'w WorldState) -> Result<&'w ObstacleParams> {
        world.obstacles.get(self.entity).ok_or_else(|| {
            CanError::Config(format!("obstacle entity {} is not in the world", self.entity))
        })
    }
}

fn door_of(world: &WorldState) -> Result<&DoorSchedule> {
    world
        .door
        .as_ref()
        .ok_or_else(|| CanError::Config("task has no door".into()))
}

fn speed_profile_of(world: &WorldState) -> Result<&SpeedLimitProfile> {
    world
        .speed_limit
        .as_ref()
        .ok_or_else(|| CanError::Config("task has no speed limit".into()))
}

fn disturbance_of(world: &WorldState) -> Result<&DisturbanceForce> {
    world
        .disturbance
        .as_ref()
        .ok_or_else(|| CanError::Config("task has no disturbance".into()))
}

/// Point the door blocks: the point robot itself or the arm's base.
pub fn body_anchor(robot: &RobotState) -> [f64; 2] {
    match robot {
        RobotState::Point(s) => s.position,
        RobotState::Arm(s) => [s.base_x, 0.0],
    }
}

/// Center distance at which the robot body touches `obstacle`.
pub fn contact_range(obstacle: &ObstacleParams, cfg: &SimConfig) -> f64 {
    obstacle.radius + cfg.robot_radius
}

/// Distance from the obstacle center to the closest robot capsule axis,
/// shifted so that it is comparable with [`contact_range`].
pub fn obstacle_clearance(world: &WorldState, obstacle: &ObstacleParams, cfg: &SimConfig) -> f64 {
    world
        .robot
        .body(cfg)
        .iter()
        .map(|(a, b, r)| point_segment_distance(obstacle.center, *a, *b) - r + cfg.robot_radius)
        .fold(f64::INFINITY, f64::min)
}

pub fn touches_obstacle(world: &WorldState, obstacle: &ObstacleParams, cfg: &SimConfig) -> bool {
    obstacle_clearance(world, obstacle, cfg) <= contact_range(obstacle, cfg)
}

const CONTACT_TOLERANCE: f64 = 1e-9;

pub fn touches_door(world: &WorldState, door: &DoorSchedule, cfg: &SimConfig) -> bool {
    let (p, q) = door.endpoints();
    world
        .robot
        .body(cfg)
        .iter()
        .any(|(a, b, r)| segment_segment_distance(*a, *b, p, q) <= r + CONTACT_TOLERANCE)
}

pub fn reached_target(world: &WorldState, cfg: &SimConfig) -> bool {
    let e = world.robot.effector(cfg);
    (e[0] - world.target[0]).hypot(e[1] - world.target[1]) <= cfg.target_radius
}

/// 1 inside the closed target ball, 0 elsewhere.
pub fn reward_reaching(world: &WorldState, _action: &[f64], cfg: &SimConfig) -> f64 {
    if reached_target(world, cfg) {
        REACH_REWARD
    } else {
        0.0
    }
}

/// -0.3 while the robot touches the obstacle.
pub fn reward_obstacle(world: &WorldState, _action: &[f64], obstacle: &ObstacleParams, cfg: &SimConfig) -> f64 {
    if touches_obstacle(world, obstacle, cfg) {
        OBSTACLE_PENALTY
    } else {
        0.0
    }
}

/// -0.01 while the robot touches the door and the door is closed.
pub fn reward_door(world: &WorldState, _action: &[f64], door: &DoorSchedule, cfg: &SimConfig) -> f64 {
    if !door.is_open(world.time) && touches_door(world, door, cfg) {
        DOOR_PENALTY
    } else {
        0.0
    }
}

/// `-c * max(v - L(t), 0)` with `v` the robot's current maximum speed.
pub fn reward_speed(world: &WorldState, _action: &[f64], profile: &SpeedLimitProfile) -> f64 {
    speed_penalty(world.robot.max_speed(), profile.limit_at(world.time), profile.penalty_coeff)
}

pub fn speed_penalty(speed: f64, limit: f64, coeff: f64) -> f64 {
    -coeff * (speed - limit).max(0.0)
}

/// The disturbance attribute acts only through the dynamics.
pub fn reward_force(_world: &WorldState, _action: &[f64]) -> f64 {
    0.0
}
