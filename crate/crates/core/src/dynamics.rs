//! Planar physics for the point robot and the articulated arm.
//!
//! Both robots are decoupled damped double integrators stepped with
//! semi-implicit Euler. The arm is four revolute joints mounted on a base
//! that slides along the x axis; joint angle zero points the link along +y
//! and positive angles rotate counter-clockwise.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attributes::{DisturbanceForce, DoorSchedule, ObstacleParams, SpeedLimitProfile, Task};
use crate::error::{check_dim, CanError, Result};

/// Half-width of the square workspace `[-1, 1]^2`.
pub const WORKSPACE: f64 = 1.0;
pub const ARM_JOINTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RobotKind {
    Point,
    Arm,
}

impl RobotKind {
    pub fn action_dim(self) -> usize {
        match self {
            RobotKind::Point => 2,
            RobotKind::Arm => ARM_JOINTS + 1,
        }
    }

    /// Length of [`RobotState::to_vec`].
    pub fn state_dim(self) -> usize {
        match self {
            RobotKind::Point => 4,
            RobotKind::Arm => 2 + 2 * ARM_JOINTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: usize,
    /// Point robot mass, or arm base mass.
    pub mass: f64,
    pub damping: f64,
    pub joint_inertia: f64,
    pub link_lengths: Vec<f64>,
    pub force_limit: f64,
    pub torque_limit: f64,
    pub target_radius: f64,
    /// Radius of the point robot body and of the arm base.
    pub robot_radius: f64,
    /// Capsule radius of each arm link.
    pub link_radius: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::point()
    }
}

impl SimConfig {
    pub fn point() -> Self {
        Self {
            dt: 0.05,
            horizon: 200,
            mass: 1.0,
            damping: 0.5,
            joint_inertia: 1.0,
            link_lengths: vec![0.1; ARM_JOINTS],
            force_limit: 1.0,
            torque_limit: 1.0,
            target_radius: 0.1,
            robot_radius: 0.03,
            link_radius: 0.02,
        }
    }

    pub fn arm() -> Self {
        Self {
            horizon: 300,
            damping: 1.0,
            joint_inertia: 0.5,
            target_radius: 0.06,
            ..Self::point()
        }
    }

    pub fn for_robot(kind: RobotKind) -> Self {
        match kind {
            RobotKind::Point => Self::point(),
            RobotKind::Arm => Self::arm(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt", self.dt),
            ("mass", self.mass),
            ("joint_inertia", self.joint_inertia),
            ("force_limit", self.force_limit),
            ("torque_limit", self.torque_limit),
            ("target_radius", self.target_radius),
            ("robot_radius", self.robot_radius),
            ("link_radius", self.link_radius),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CanError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.damping >= 0.0) || self.damping * self.dt >= 1.0 {
            return Err(CanError::Config(
                "damping must be non-negative with damping * dt < 1".into(),
            ));
        }
        if self.horizon == 0 {
            return Err(CanError::Config("horizon must be positive".into()));
        }
        if self.link_lengths.len() != ARM_JOINTS || self.link_lengths.iter().any(|l| !(*l > 0.0)) {
            return Err(CanError::Config(format!(
                "need {ARM_JOINTS} positive link lengths"
            )));
        }
        Ok(())
    }

    pub fn arm_reach(&self) -> f64 {
        self.link_lengths.iter().sum()
    }

    /// Per-dimension actuator limit for an action of `kind`.
    pub fn action_limits(&self, kind: RobotKind) -> Vec<f64> {
        match kind {
            RobotKind::Point => vec![self.force_limit; 2],
            RobotKind::Arm => {
                let mut l = vec![self.torque_limit; ARM_JOINTS];
                l.push(self.force_limit);
                l
            }
        }
    }

    pub fn clamp_action(&self, kind: RobotKind, action: &[f64]) -> Vec<f64> {
        action
            .iter()
            .zip(self.action_limits(kind))
            .map(|(a, l)| a.clamp(-l, l))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointRobotState {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArticulatedRobotState {
    pub base_x: f64,
    pub base_speed: f64,
    pub joint_angles: [f64; ARM_JOINTS],
    pub joint_velocities: [f64; ARM_JOINTS],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RobotState {
    Point(PointRobotState),
    Arm(ArticulatedRobotState),
}

impl RobotState {
    pub fn kind(&self) -> RobotKind {
        match self {
            RobotState::Point(_) => RobotKind::Point,
            RobotState::Arm(_) => RobotKind::Arm,
        }
    }

    /// Point: `[x, y, vx, vy]`. Arm: `[base_x, base_speed, angles.., velocities..]`.
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            RobotState::Point(s) => vec![s.position[0], s.position[1], s.velocity[0], s.velocity[1]],
            RobotState::Arm(s) => {
                let mut v = vec![s.base_x, s.base_speed];
                v.extend_from_slice(&s.joint_angles);
                v.extend_from_slice(&s.joint_velocities);
                v
            }
        }
    }

    /// The point that has to reach the target: the robot itself or the arm's end effector.
    pub fn effector(&self, cfg: &SimConfig) -> [f64; 2] {
        match self {
            RobotState::Point(s) => s.position,
            RobotState::Arm(s) => end_effector(s, cfg),
        }
    }

    /// Speed compared against a speed limit: the point robot's speed, or the
    /// largest joint or base speed of the arm.
    pub fn max_speed(&self) -> f64 {
        match self {
            RobotState::Point(s) => s.velocity[0].hypot(s.velocity[1]),
            RobotState::Arm(s) => s
                .joint_velocities
                .iter()
                .fold(s.base_speed.abs(), |m, w| m.max(w.abs())),
        }
    }

    pub fn kinetic_energy(&self, cfg: &SimConfig) -> f64 {
        match self {
            RobotState::Point(s) => 0.5 * cfg.mass * (s.velocity[0].powi(2) + s.velocity[1].powi(2)),
            RobotState::Arm(s) => {
                0.5 * cfg.mass * s.base_speed.powi(2)
                    + s.joint_velocities
                        .iter()
                        .map(|w| 0.5 * cfg.joint_inertia * w * w)
                        .sum::<f64>()
            }
        }
    }

    /// Collision geometry as capsules `(a, b, radius)`; a disc is a capsule with `a == b`.
    pub fn body(&self, cfg: &SimConfig) -> Vec<([f64; 2], [f64; 2], f64)> {
        match self {
            RobotState::Point(s) => vec![(s.position, s.position, cfg.robot_radius)],
            RobotState::Arm(s) => {
                let joints = arm_joint_positions(s, cfg);
                let mut body = vec![(joints[0], joints[0], cfg.robot_radius)];
                body.extend(joints.windows(2).map(|w| (w[0], w[1], cfg.link_radius)));
                body
            }
        }
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let a = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if a <= -PI {
        a + 2.0 * PI
    } else {
        a
    }
}

fn check_finite(action: &[f64]) -> Result<()> {
    if action.iter().all(|a| a.is_finite()) {
        Ok(())
    } else {
        Err(CanError::SimulationFault(format!("non-finite action {action:?}")))
    }
}

/// One semi-implicit Euler step of the point robot under `force`.
pub fn point_step(state: &PointRobotState, force: [f64; 2], cfg: &SimConfig) -> Result<PointRobotState> {
    point_step_with_external(state, force, [0.0; 2], cfg)
}

/// As [`point_step`], plus an `external` force that bypasses the actuator limit.
pub fn point_step_with_external(
    state: &PointRobotState,
    force: [f64; 2],
    external: [f64; 2],
    cfg: &SimConfig,
) -> Result<PointRobotState> {
    check_finite(&force)?;
    check_finite(&external)?;
    let mut next = *state;
    for d in 0..2 {
        let f = force[d].clamp(-cfg.force_limit, cfg.force_limit) + external[d];
        next.velocity[d] = (1.0 - cfg.damping * cfg.dt) * state.velocity[d] + f / cfg.mass * cfg.dt;
        next.position[d] = state.position[d] + next.velocity[d] * cfg.dt;
        if next.position[d].abs() > WORKSPACE {
            next.position[d] = next.position[d].clamp(-WORKSPACE, WORKSPACE);
            next.velocity[d] = 0.0;
        }
    }
    Ok(next)
}

/// One semi-implicit Euler step of the arm; `action` is four joint torques then the base force.
pub fn arm_step(state: &ArticulatedRobotState, action: &[f64], cfg: &SimConfig) -> Result<ArticulatedRobotState> {
    arm_step_with_external(state, action, &[0.0; ARM_JOINTS + 1], cfg)
}

/// As [`arm_step`], plus `external` generalized forces that bypass the actuator limits.
pub fn arm_step_with_external(
    state: &ArticulatedRobotState,
    action: &[f64],
    external: &[f64],
    cfg: &SimConfig,
) -> Result<ArticulatedRobotState> {
    check_dim("arm action", ARM_JOINTS + 1, action.len())?;
    check_dim("arm external force", ARM_JOINTS + 1, external.len())?;
    check_finite(action)?;
    check_finite(external)?;
    let mut next = *state;
    for j in 0..ARM_JOINTS {
        let tau = action[j].clamp(-cfg.torque_limit, cfg.torque_limit) + external[j];
        let w = state.joint_velocities[j];
        next.joint_velocities[j] = w + (tau - cfg.damping * w) / cfg.joint_inertia * cfg.dt;
        next.joint_angles[j] = wrap_angle(state.joint_angles[j] + next.joint_velocities[j] * cfg.dt);
    }
    let f = action[ARM_JOINTS].clamp(-cfg.force_limit, cfg.force_limit) + external[ARM_JOINTS];
    next.base_speed = state.base_speed + (f - cfg.damping * state.base_speed) / cfg.mass * cfg.dt;
    next.base_x = state.base_x + next.base_speed * cfg.dt;
    if next.base_x.abs() > WORKSPACE {
        next.base_x = next.base_x.clamp(-WORKSPACE, WORKSPACE);
        next.base_speed = 0.0;
    }
    Ok(next)
}

/// Base followed by every joint tip, `ARM_JOINTS + 1` points.
pub fn arm_joint_positions(state: &ArticulatedRobotState, cfg: &SimConfig) -> Vec<[f64; 2]> {
    let mut points = Vec::with_capacity(ARM_JOINTS + 1);
    let mut p = [state.base_x, 0.0];
    points.push(p);
    let mut angle = 0.0;
    for (theta, len) in state.joint_angles.iter().zip(&cfg.link_lengths) {
        angle += theta;
        p = [p[0] - len * angle.sin(), p[1] + len * angle.cos()];
        points.push(p);
    }
    points
}

pub fn end_effector(state: &ArticulatedRobotState, cfg: &SimConfig) -> [f64; 2] {
    *arm_joint_positions(state, cfg)
        .last()
        .expect("chain has at least the base")
}

/// Full simulator state; every attribute reads its own view out of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub robot: RobotState,
    pub target: [f64; 2],
    pub time: f64,
    pub step_index: usize,
    #[serde(default)]
    pub obstacles: Vec<ObstacleParams>,
    #[serde(default)]
    pub door: Option<DoorSchedule>,
    #[serde(default)]
    pub speed_limit: Option<SpeedLimitProfile>,
    #[serde(default)]
    pub disturbance: Option<DisturbanceForce>,
}

impl WorldState {
    pub fn check_invariants(&self, cfg: &SimConfig) -> Result<()> {
        let fail = |msg: String| Err(CanError::SimulationFault(msg));
        if (self.time - self.step_index as f64 * cfg.dt).abs() > 1e-9 {
            return fail(format!("time {} out of sync with step {}", self.time, self.step_index));
        }
        let state = self.robot.to_vec();
        if state.iter().any(|v| !v.is_finite()) {
            return fail("non-finite robot state".into());
        }
        let inside = |p: [f64; 2]| p.iter().all(|c| c.abs() <= WORKSPACE + 1e-12);
        match &self.robot {
            RobotState::Point(s) if !inside(s.position) => return fail("robot outside workspace".into()),
            RobotState::Arm(s) if s.base_x.abs() > WORKSPACE => return fail("base outside workspace".into()),
            RobotState::Arm(s) if s.joint_angles.iter().any(|a| *a <= -PI || *a > PI) => {
                return fail("joint angle not wrapped".into())
            }
            _ => {}
        }
        if !inside(self.target) {
            return fail("target outside workspace".into());
        }
        for o in &self.obstacles {
            if !(o.radius > 0.0) || o.center.iter().any(|c| c.abs() > WORKSPACE - o.radius + 1e-9) {
                return fail(format!("obstacle {o:?} leaves the workspace"));
            }
        }
        Ok(())
    }
}

/// Where the robot's sampling region is centred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StartAnchor {
    /// Fixed nominal start configuration (forward curriculum).
    Nominal,
    /// A configuration whose effector sits on the sampled target (reverse curriculum).
    Target,
}

/// Sampling ranges of a scenario at full randomness, and its nominal values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range1 {
    pub nominal: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Range1 {
    pub const fn new(nominal: f64, lo: f64, hi: f64) -> Self {
        Self { nominal, lo, hi }
    }

    /// Uniform draw from the region that shrinks to `anchor` at level 0 and
    /// spans `[lo, hi]` at level 1. Always consumes exactly one random number.
    pub fn sample<R: Rng + ?Sized>(&self, anchor: f64, level: f64, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let anchor = anchor.clamp(self.lo, self.hi);
        let lo = anchor - level * (anchor - self.lo);
        let hi = anchor + level * (self.hi - anchor);
        if level == 0.0 {
            anchor
        } else if level == 1.0 {
            self.lo + u * (self.hi - self.lo)
        } else {
            lo + u * (hi - lo)
        }
    }
}

pub const MAX_RESET_TRIES: usize = 1000;

/// Samples an initial world for `task` at the given randomness level.
pub fn reset<R: Rng + ?Sized>(
    task: &Task,
    random_level: f64,
    anchor: StartAnchor,
    rng: &mut R,
) -> Result<WorldState> {
    if !(0.0..=1.0).contains(&random_level) {
        return Err(CanError::Config(format!(
            "random level {random_level} outside [0, 1]"
        )));
    }
    for _ in 0..MAX_RESET_TRIES {
        let world = task.scenario.sample(task, random_level, anchor, rng);
        if task.initial_world_is_legal(&world) {
            world.check_invariants(&task.sim)?;
            return Ok(world);
        }
    }
    Err(CanError::InfeasibleTask(format!(
        "no legal initial state after {MAX_RESET_TRIES} draws at level {random_level}"
    )))
}
