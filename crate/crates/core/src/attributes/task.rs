//! Tasks: a base attribute plus an ordered list of add-ons, the scenario
//! their initial worlds are drawn from, and the environment step.

use std::f64::consts::PI;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize, Serializer};

use super::{
    body_anchor, obstacle_clearance, contact_range, reached_target, touches_door, AttributeKind,
    AttributeSpec, DisturbanceForce, DoorSchedule, ObstacleParams, SpeedLimitProfile,
};
use crate::curriculum::CurriculumConfig;
use crate::dynamics::{
    arm_step_with_external, point_step_with_external, ArticulatedRobotState, PointRobotState,
    Range1, RobotKind, RobotState, SimConfig, StartAnchor, WorldState, ARM_JOINTS,
};
use crate::error::{check_dim, CanError, Result};
use crate::train::TrainingConfig;

/// Default coefficient of the compensation-magnitude penalty.
pub const DEFAULT_COMPENSATION_PENALTY: f64 = 0.01;
/// Clearance kept between the robot and obstacles or the door at reset.
const RESET_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObstacleConfig {
    pub center: Option<[f64; 2]>,
    pub radius: Option<f64>,
    pub velocity: Option<[f64; 2]>,
    /// `[[x_lo, x_hi], [y_lo, y_hi]]` for the center at full randomness.
    pub center_range: Option<[[f64; 2]; 2]>,
    /// Bound on each velocity component at full randomness.
    pub max_speed: Option<f64>,
    pub compensation_penalty: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DoorConfig {
    pub x: Option<f64>,
    pub y_min: Option<f64>,
    pub y_max: Option<f64>,
    pub open_intervals: Option<Vec<[f64; 2]>>,
    pub x_range: Option<[f64; 2]>,
    pub compensation_penalty: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpeedLimitConfig {
    pub knots: Option<Vec<[f64; 2]>>,
    pub penalty_coeff: Option<f64>,
    pub compensation_penalty: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisturbanceConfig {
    pub force: Option<Vec<f64>>,
    /// Rotate (point) or rescale (arm) the force with the random level.
    pub randomize: Option<bool>,
    pub compensation_penalty: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "params", rename_all = "snake_case")]
pub enum AddonConfig {
    Obstacle(ObstacleConfig),
    Door(DoorConfig),
    SpeedLimit(SpeedLimitConfig),
    Force(DisturbanceConfig),
}

impl AddonConfig {
    pub fn kind(&self) -> AttributeKind {
        match self {
            AddonConfig::Obstacle(_) => AttributeKind::Obstacle,
            AddonConfig::Door(_) => AttributeKind::Door,
            AddonConfig::SpeedLimit(_) => AttributeKind::SpeedLimit,
            AddonConfig::Force(_) => AttributeKind::Force,
        }
    }

    fn compensation_penalty(&self) -> Option<f64> {
        match self {
            AddonConfig::Obstacle(c) => c.compensation_penalty,
            AddonConfig::Door(c) => c.compensation_penalty,
            AddonConfig::SpeedLimit(c) => c.compensation_penalty,
            AddonConfig::Force(c) => c.compensation_penalty,
        }
    }
}

/// Task definition file. Together with a seed it fully determines a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskFile {
    pub robot: RobotKind,
    #[serde(default)]
    pub addons: Vec<AddonConfig>,
    /// Overrides on top of the robot's default simulation settings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<serde_json::Map<String, serde_json::Value>>,
    #[serde(default)]
    pub curriculum: CurriculumConfig,
    #[serde(default)]
    pub training: TrainingConfig,
}

impl TaskFile {
    pub fn new(robot: RobotKind, addons: Vec<AddonConfig>) -> Self {
        Self {
            robot,
            addons,
            sim: None,
            curriculum: CurriculumConfig::default(),
            training: TrainingConfig::default(),
        }
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        let mut value = serde_json::to_value(SimConfig::for_robot(self.robot))?;
        if let (Some(overrides), Some(obj)) = (&self.sim, value.as_object_mut()) {
            for (k, v) in overrides {
                if !obj.contains_key(k) {
                    return Err(CanError::Config(format!("unknown sim setting `{k}`")));
                }
                obj.insert(k.clone(), v.clone());
            }
        }
        let cfg: SimConfig = serde_json::from_value(value)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        crate::io::read_json(path)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum RobotRanges {
    Point {
        position: [Range1; 2],
        velocity: [Range1; 2],
    },
    Arm {
        base_x: Range1,
        base_speed: Range1,
        angle: Range1,
        angular_velocity: Range1,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct ObstacleRanges {
    center: [Range1; 2],
    velocity: [Range1; 2],
    radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct DisturbanceRanges {
    nominal: Vec<f64>,
    randomize: bool,
}

/// Nominal configuration and full-randomness ranges of every sampled quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    target: [Range1; 2],
    robot: RobotRanges,
    obstacles: Vec<ObstacleRanges>,
    door: Option<(DoorSchedule, Range1)>,
    speed_limit: Option<SpeedLimitProfile>,
    disturbance: Option<DisturbanceRanges>,
}

impl Scenario {
    fn for_robot(kind: RobotKind) -> Self {
        match kind {
            RobotKind::Point => Self {
                target: [Range1::new(0.2, -0.9, 0.9), Range1::new(0.0, -0.9, 0.9)],
                robot: RobotRanges::Point {
                    position: [Range1::new(-0.2, -0.9, 0.9), Range1::new(0.0, -0.9, 0.9)],
                    velocity: [Range1::new(0.0, -0.5, 0.5), Range1::new(0.0, -0.5, 0.5)],
                },
                obstacles: vec![],
                door: None,
                speed_limit: None,
                disturbance: None,
            },
            RobotKind::Arm => Self {
                target: [Range1::new(0.2, -0.9, 0.9), Range1::new(0.25, 0.05, 0.35)],
                robot: RobotRanges::Arm {
                    base_x: Range1::new(-0.3, -0.9, 0.9),
                    base_speed: Range1::new(0.0, -0.3, 0.3),
                    angle: Range1::new(0.0, -PI, PI),
                    angular_velocity: Range1::new(0.0, -0.5, 0.5),
                },
                obstacles: vec![],
                door: None,
                speed_limit: None,
                disturbance: None,
            },
        }
    }

    /// Draws a world; the number of random draws does not depend on the level.
    pub(crate) fn sample<R: Rng + ?Sized>(
        &self,
        task: &Task,
        level: f64,
        anchor: StartAnchor,
        rng: &mut R,
    ) -> WorldState {
        let target = [
            self.target[0].sample(self.target[0].nominal, level, rng),
            self.target[1].sample(self.target[1].nominal, level, rng),
        ];
        let robot = match &self.robot {
            RobotRanges::Point { position, velocity } => {
                let anchor_pos = match anchor {
                    StartAnchor::Nominal => [position[0].nominal, position[1].nominal],
                    StartAnchor::Target => target,
                };
                RobotState::Point(PointRobotState {
                    position: [
                        position[0].sample(anchor_pos[0], level, rng),
                        position[1].sample(anchor_pos[1], level, rng),
                    ],
                    velocity: [
                        velocity[0].sample(velocity[0].nominal, level, rng),
                        velocity[1].sample(velocity[1].nominal, level, rng),
                    ],
                })
            }
            RobotRanges::Arm {
                base_x,
                base_speed,
                angle,
                angular_velocity,
            } => {
                let (anchor_base, anchor_angles) = match anchor {
                    StartAnchor::Nominal => (base_x.nominal, [angle.nominal; ARM_JOINTS]),
                    StartAnchor::Target => arm_pose_reaching(target, task.sim.arm_reach(), base_x),
                };
                RobotState::Arm(ArticulatedRobotState {
                    base_x: base_x.sample(anchor_base, level, rng),
                    base_speed: base_speed.sample(base_speed.nominal, level, rng),
                    joint_angles: std::array::from_fn(|j| angle.sample(anchor_angles[j], level, rng)),
                    joint_velocities: std::array::from_fn(|_| {
                        angular_velocity.sample(angular_velocity.nominal, level, rng)
                    }),
                })
            }
        };
        let obstacles = self
            .obstacles
            .iter()
            .map(|o| ObstacleParams {
                center: [
                    o.center[0].sample(o.center[0].nominal, level, rng),
                    o.center[1].sample(o.center[1].nominal, level, rng),
                ],
                velocity: [
                    o.velocity[0].sample(o.velocity[0].nominal, level, rng),
                    o.velocity[1].sample(o.velocity[1].nominal, level, rng),
                ],
                radius: o.radius,
            })
            .collect();
        let door = self.door.as_ref().map(|(door, x)| DoorSchedule {
            x: x.sample(x.nominal, level, rng),
            ..door.clone()
        });
        let disturbance = self.disturbance.as_ref().map(|d| {
            let force = if !d.randomize {
                d.nominal.clone()
            } else if d.nominal.len() == 2 {
                let theta = Range1::new(0.0, -PI, PI).sample(0.0, level, rng);
                let (s, c) = theta.sin_cos();
                vec![c * d.nominal[0] - s * d.nominal[1], s * d.nominal[0] + c * d.nominal[1]]
            } else {
                let scale = Range1::new(1.0, -1.0, 1.0).sample(1.0, level, rng);
                d.nominal.iter().map(|f| f * scale).collect()
            };
            DisturbanceForce { force }
        });
        WorldState {
            robot,
            target,
            time: 0.0,
            step_index: 0,
            obstacles,
            door,
            speed_limit: self.speed_limit.clone(),
            disturbance,
        }
    }
}

/// Base position and joint angles of a straight arm whose tip lies on `target`.
fn arm_pose_reaching(target: [f64; 2], reach: f64, base_x: &Range1) -> (f64, [f64; ARM_JOINTS]) {
    let phi = (target[1] / reach).clamp(-1.0, 1.0).acos();
    let offset = reach * phi.sin();
    let mut angles = [0.0; ARM_JOINTS];
    // Tip = (base - reach sin(phi), reach cos(phi)); mirror when the base would leave its range.
    if target[0] + offset <= base_x.hi {
        angles[0] = phi;
        (target[0] + offset, angles)
    } else {
        angles[0] = -phi;
        (target[0] - offset, angles)
    }
}

/// Something that happened during a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Event {
    ReachedTarget,
    TouchedObstacle(usize),
    TouchedDoor,
    SpeedViolation,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::ReachedTarget => write!(f, "reached_target"),
            Event::TouchedObstacle(i) => write!(f, "touched_obstacle_{i}"),
            Event::TouchedDoor => write!(f, "touched_door"),
            Event::SpeedViolation => write!(f, "speed_violation"),
        }
    }
}

impl Serialize for Event {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub world: WorldState,
    /// `R_0` followed by each add-on's reward, in task order.
    pub rewards: Vec<f64>,
    pub done: bool,
    /// The episode ended because the target was reached.
    pub terminal: bool,
    /// The episode ended at the horizon without reaching the target.
    pub truncated: bool,
    pub events: Vec<Event>,
    /// Actuator command actually applied (after clamping), without disturbances.
    pub applied_action: Vec<f64>,
}

impl StepOutcome {
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

#[derive(Debug, Clone)]
pub struct Task {
    pub robot: RobotKind,
    pub sim: SimConfig,
    pub base: AttributeSpec,
    pub addons: Vec<AttributeSpec>,
    /// Compensation penalty coefficient for each add-on's module.
    pub compensation_penalties: Vec<f64>,
    pub scenario: Scenario,
}

impl Task {
    pub fn from_file(file: &TaskFile) -> Result<Self> {
        let sim = file.sim_config()?;
        let robot = file.robot;
        let mut scenario = Scenario::for_robot(robot);
        let mut addons = Vec::with_capacity(file.addons.len());
        let mut penalties = Vec::with_capacity(file.addons.len());
        let horizon_time = sim.horizon as f64 * sim.dt;
        for (i, addon) in file.addons.iter().enumerate() {
            let mut entity = 0;
            match addon {
                AddonConfig::Obstacle(c) => {
                    entity = scenario.obstacles.len();
                    scenario.obstacles.push(obstacle_ranges(robot, c, entity)?);
                }
                AddonConfig::Door(c) => {
                    if scenario.door.is_some() {
                        return Err(CanError::Config("only one door per task".into()));
                    }
                    let (door, range) = door_setup(robot, c);
                    door.validate(horizon_time)?;
                    scenario.door = Some((door, range));
                }
                AddonConfig::SpeedLimit(c) => {
                    if scenario.speed_limit.is_some() {
                        return Err(CanError::Config("only one speed limit per task".into()));
                    }
                    let profile = SpeedLimitProfile {
                        knots: c.knots.clone().unwrap_or_else(|| default_speed_knots(robot)),
                        penalty_coeff: c.penalty_coeff.unwrap_or(0.3),
                    };
                    profile.validate()?;
                    scenario.speed_limit = Some(profile);
                }
                AddonConfig::Force(c) => {
                    if scenario.disturbance.is_some() {
                        return Err(CanError::Config("only one disturbance per task".into()));
                    }
                    let nominal = c.force.clone().unwrap_or_else(|| default_disturbance(robot));
                    check_dim("disturbance force", robot.action_dim(), nominal.len())?;
                    if nominal.iter().any(|f| !f.is_finite()) {
                        return Err(CanError::Config("disturbance must be finite".into()));
                    }
                    scenario.disturbance = Some(DisturbanceRanges {
                        nominal,
                        randomize: c.randomize.unwrap_or(true),
                    });
                }
            }
            let beta = addon.compensation_penalty().unwrap_or(DEFAULT_COMPENSATION_PENALTY);
            if !(beta >= 0.0) {
                return Err(CanError::Config("compensation penalty must be non-negative".into()));
            }
            penalties.push(beta);
            addons.push(AttributeSpec {
                id: i + 1,
                kind: addon.kind(),
                entity,
            });
        }
        Ok(Self {
            robot,
            sim,
            base: AttributeSpec::base(),
            addons,
            compensation_penalties: penalties,
            scenario,
        })
    }

    /// Base attribute followed by the add-ons.
    pub fn attributes(&self) -> impl Iterator<Item = &AttributeSpec> {
        std::iter::once(&self.base).chain(&self.addons)
    }

    pub fn action_dim(&self) -> usize {
        self.robot.action_dim()
    }

    pub(crate) fn initial_world_is_legal(&self, world: &WorldState) -> bool {
        let cfg = &self.sim;
        for o in &world.obstacles {
            if obstacle_clearance(world, o, cfg) <= contact_range(o, cfg) + RESET_MARGIN {
                return false;
            }
            let d = (world.target[0] - o.center[0]).hypot(world.target[1] - o.center[1]);
            if d <= o.radius + RESET_MARGIN {
                return false;
            }
        }
        if let Some(door) = &world.door {
            let (p, q) = door.endpoints();
            let clear = world.robot.body(cfg).iter().all(|(a, b, r)| {
                super::segment_segment_distance(*a, *b, p, q) > r + RESET_MARGIN
            });
            if !clear || (world.target[0] - door.x).abs() <= cfg.target_radius + cfg.robot_radius {
                return false;
            }
        }
        true
    }

    /// Advances the world by one control step.
    pub fn step(&self, world: &WorldState, action: &[f64]) -> Result<StepOutcome> {
        check_dim("action", self.action_dim(), action.len())?;
        if action.iter().any(|a| !a.is_finite()) {
            return Err(CanError::SimulationFault(format!("non-finite action {action:?}")));
        }
        let cfg = &self.sim;
        let applied = cfg.clamp_action(self.robot, action);
        let mut external = vec![0.0; self.action_dim()];
        for attr in self.attributes() {
            if let Some(f) = attr.dynamics_effect(world) {
                external.iter_mut().zip(&f).for_each(|(e, v)| *e += v);
            }
        }
        let mut robot = match &world.robot {
            RobotState::Point(s) => RobotState::Point(point_step_with_external(
                s,
                [applied[0], applied[1]],
                [external[0], external[1]],
                cfg,
            )?),
            RobotState::Arm(s) => RobotState::Arm(arm_step_with_external(s, &applied, &external, cfg)?),
        };
        let step_index = world.step_index + 1;
        let time = step_index as f64 * cfg.dt;
        if let Some(door) = &world.door {
            if !door.is_open(time) {
                block_at_door(door, &world.robot, &mut robot, cfg.robot_radius);
            }
        }
        let mut next = WorldState {
            robot,
            target: world.target,
            time,
            step_index,
            obstacles: world.obstacles.clone(),
            door: world.door.clone(),
            speed_limit: world.speed_limit.clone(),
            disturbance: world.disturbance.clone(),
        };
        next.obstacles.iter_mut().for_each(|o| o.advance(cfg.dt));

        let rewards = self
            .attributes()
            .map(|a| a.reward(&next, action, cfg))
            .collect::<Result<Vec<_>>>()?;
        let reached = reached_target(&next, cfg);
        let mut events = Vec::new();
        if reached {
            events.push(Event::ReachedTarget);
        }
        for (attr, r) in self.addons.iter().zip(&rewards[1..]) {
            match attr.kind {
                AttributeKind::Obstacle if *r < 0.0 => events.push(Event::TouchedObstacle(attr.entity)),
                AttributeKind::Door => {
                    let door = next.door.as_ref().expect("door attribute implies a door");
                    if !door.is_open(next.time) && touches_door(&next, door, cfg) {
                        events.push(Event::TouchedDoor);
                    }
                }
                AttributeKind::SpeedLimit => {
                    let limit = next
                        .speed_limit
                        .as_ref()
                        .expect("speed attribute implies a profile")
                        .limit_at(next.time);
                    if next.robot.max_speed() > limit {
                        events.push(Event::SpeedViolation);
                    }
                }
                _ => {}
            }
        }
        let at_horizon = step_index >= cfg.horizon;
        Ok(StepOutcome {
            world: next,
            rewards,
            done: reached || at_horizon,
            terminal: reached,
            truncated: at_horizon && !reached,
            events,
            applied_action: applied,
        })
    }
}

/// A closed door is a wall: the body anchor cannot get closer than `radius`
/// to it from the side it came from.
fn block_at_door(door: &DoorSchedule, prev: &RobotState, next: &mut RobotState, radius: f64) {
    let prev_x = body_anchor(prev)[0];
    let (x, v, y) = match next {
        RobotState::Point(s) => {
            let y = s.position[1];
            (&mut s.position[0], &mut s.velocity[0], y)
        }
        RobotState::Arm(s) => (&mut s.base_x, &mut s.base_speed, 0.0),
    };
    if y < door.y_min - radius || y > door.y_max + radius {
        return;
    }
    if prev_x < door.x {
        let limit = door.x - radius;
        if *x > limit {
            *x = limit;
            *v = v.min(0.0);
        }
    } else {
        let limit = door.x + radius;
        if *x < limit {
            *x = limit;
            *v = v.max(0.0);
        }
    }
}

fn obstacle_ranges(robot: RobotKind, c: &ObstacleConfig, index: usize) -> Result<ObstacleRanges> {
    let (default_center, radius, velocity, range, max_speed) = match robot {
        RobotKind::Point => {
            // Further obstacles get distinct nominal placements.
            let nominal = [[0.0, 0.0], [0.2, 0.45], [-0.2, -0.45]];
            (nominal[index % 3], 0.1, [0.0, 0.1], [[-0.8, 0.8], [-0.8, 0.8]], 0.2)
        }
        RobotKind::Arm => {
            let nominal = [[0.0, 0.3], [0.3, 0.15], [-0.3, 0.15]];
            (nominal[index % 3], 0.05, [0.0, 0.05], [[-0.8, 0.8], [0.1, 0.5]], 0.1)
        }
    };
    let radius = c.radius.unwrap_or(radius);
    let center = c.center.unwrap_or(default_center);
    let velocity = c.velocity.unwrap_or(velocity);
    let range = c.center_range.unwrap_or(range);
    let max_speed = c.max_speed.unwrap_or(max_speed);
    if !(radius > 0.0 && radius < 0.5) {
        return Err(CanError::Config(format!("obstacle radius {radius} out of (0, 0.5)")));
    }
    let bound = crate::dynamics::WORKSPACE - radius;
    let axis = |d: usize| -> Result<Range1> {
        let lo = range[d][0].max(-bound);
        let hi = range[d][1].min(bound);
        if !(lo <= center[d] && center[d] <= hi) {
            return Err(CanError::Config("obstacle center outside its range".into()));
        }
        Ok(Range1::new(center[d], lo, hi))
    };
    let speed = |d: usize| Range1::new(velocity[d], -max_speed.max(velocity[d].abs()), max_speed.max(velocity[d].abs()));
    Ok(ObstacleRanges {
        center: [axis(0)?, axis(1)?],
        velocity: [speed(0), speed(1)],
        radius,
    })
}

fn door_setup(robot: RobotKind, c: &DoorConfig) -> (DoorSchedule, Range1) {
    let intervals = match robot {
        RobotKind::Point => vec![[1.5, 3.5], [5.0, 10.0]],
        RobotKind::Arm => vec![[2.0, 4.0], [7.0, 15.0]],
    };
    let door = DoorSchedule {
        x: c.x.unwrap_or(0.0),
        y_min: c.y_min.unwrap_or(-1.0),
        y_max: c.y_max.unwrap_or(1.0),
        open_intervals: c.open_intervals.clone().unwrap_or(intervals),
    };
    let [lo, hi] = c.x_range.unwrap_or([-0.5, 0.5]);
    let range = Range1::new(door.x, lo.min(door.x), hi.max(door.x));
    (door, range)
}

fn default_speed_knots(robot: RobotKind) -> Vec<[f64; 2]> {
    match robot {
        RobotKind::Point => vec![[0.0, 1.2], [2.0, 0.5], [5.0, 0.5], [8.0, 1.2]],
        RobotKind::Arm => vec![[0.0, 1.0], [3.0, 0.4], [8.0, 0.4], [12.0, 1.0]],
    }
}

fn default_disturbance(robot: RobotKind) -> Vec<f64> {
    match robot {
        RobotKind::Point => vec![0.0, -0.5],
        RobotKind::Arm => vec![0.0, 0.3, 0.0, 0.0, 0.0],
    }
}

/// Running summary of one episode.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EpisodeStats {
    pub steps: usize,
    pub total_reward: f64,
    pub reached: bool,
    pub obstacle_contacts: usize,
    pub door_contacts: usize,
    pub speed_violations: usize,
}

impl EpisodeStats {
    pub fn record(&mut self, outcome: &StepOutcome) {
        self.steps += 1;
        self.total_reward += outcome.total_reward();
        self.reached |= outcome.terminal;
        for e in &outcome.events {
            match e {
                Event::TouchedObstacle(_) => self.obstacle_contacts += 1,
                Event::TouchedDoor => self.door_contacts += 1,
                Event::SpeedViolation => self.speed_violations += 1,
                Event::ReachedTarget => {}
            }
        }
    }

    /// Reached the target without any contact or speed violation.
    pub fn success(&self) -> bool {
        self.reached && self.obstacle_contacts == 0 && self.door_contacts == 0 && self.speed_violations == 0
    }
}
