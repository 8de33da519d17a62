//! Base module, attribute modules and their cascade.
//!
//! Module `i` sees its own view `s_i` and the upstream action `a_{i-1}`,
//! outputs a compensation `c_i` and passes on `clamp(a_{i-1} + w_i c_i)`.

use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attributes::{AttributeKind, AttributeSpec};
use crate::dynamics::{RobotKind, SimConfig, WorldState};
use crate::error::{check_dim, CanError, Result};
use crate::io::{read_json, write_json};
use crate::nn::{DenseNet, GaussianPolicy, NetworkCheckpoint};

/// Starting value of the compensation weight.
pub const INITIAL_WEIGHT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct BaseModule {
    pub robot: RobotKind,
    pub policy: GaussianPolicy,
    pub value_net: DenseNet,
    pub frozen: bool,
}

impl BaseModule {
    pub fn new<R: Rng + ?Sized>(robot: RobotKind, rng: &mut R) -> Result<Self> {
        let input = AttributeSpec::base().state_dim(robot);
        Ok(Self {
            robot,
            policy: GaussianPolicy::new(input, robot.action_dim(), rng)?,
            value_net: DenseNet::critic(input, rng)?,
            frozen: false,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.policy.input_dim()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeModule {
    pub attribute: AttributeKind,
    pub robot: RobotKind,
    /// Input `s_i ⊕ a_prev`, output the compensation mean.
    pub comp_policy: GaussianPolicy,
    /// Critic over `s_0 ⊕ s_i`.
    pub value_net: DenseNet,
    pub weight: f64,
    pub penalty_coeff: f64,
}

impl AttributeModule {
    /// Fresh module whose compensation mean is exactly zero everywhere.
    pub fn new<R: Rng + ?Sized>(
        attribute: AttributeKind,
        robot: RobotKind,
        penalty_coeff: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let view = AttributeSpec { id: 1, kind: attribute, entity: 0 }.state_dim(robot);
        let action = robot.action_dim();
        let mut comp_policy = GaussianPolicy::new(view + action, action, rng)?;
        let last = comp_policy.mean_net.num_layers() - 1;
        comp_policy.mean_net.weights_mut(last).fill(0.0);
        comp_policy.mean_net.bias_mut(last).fill(0.0);
        let base_view = AttributeSpec::base().state_dim(robot);
        Ok(Self {
            attribute,
            robot,
            comp_policy,
            value_net: DenseNet::critic(base_view + view, rng)?,
            weight: INITIAL_WEIGHT,
            penalty_coeff,
        })
    }

    pub fn view_dim(&self) -> usize {
        self.comp_policy.input_dim() - self.robot.action_dim()
    }

    fn check_shapes(&self) -> Result<()> {
        let action = self.robot.action_dim();
        let view = AttributeSpec { id: 1, kind: self.attribute, entity: 0 }.state_dim(self.robot);
        check_dim("compensation input", view + action, self.comp_policy.input_dim())?;
        check_dim("compensation output", action, self.comp_policy.action_dim())?;
        let base_view = AttributeSpec::base().state_dim(self.robot);
        check_dim("attribute critic input", base_view + view, self.value_net.input_dim())?;
        check_dim("attribute critic output", 1, self.value_net.output_dim())
    }
}

/// An attribute module bound to one entity of the task it runs in.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundModule {
    pub module: AttributeModule,
    pub binding: AttributeSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadePolicy {
    pub base: BaseModule,
    pub modules: Vec<BoundModule>,
}

impl CascadePolicy {
    pub fn new(base: BaseModule) -> Self {
        Self { base, modules: vec![] }
    }

    /// Appends `module` bound to entity `entity` of its attribute kind.
    pub fn push(&mut self, module: AttributeModule, entity: usize) -> Result<()> {
        if module.robot != self.base.robot {
            return Err(CanError::Config(format!(
                "{} module trained for the {:?} robot cannot follow a {:?} base",
                module.attribute.name(),
                module.robot,
                self.base.robot
            )));
        }
        module.check_shapes()?;
        if module.attribute == AttributeKind::Reaching {
            return Err(CanError::Config("the reaching attribute belongs to the base".into()));
        }
        if module.attribute != AttributeKind::Obstacle && entity != 0 {
            return Err(CanError::Config(format!(
                "{} has a single entity, cannot bind to {entity}",
                module.attribute.name()
            )));
        }
        let binding = AttributeSpec {
            id: self.modules.len() + 1,
            kind: module.attribute,
            entity,
        };
        self.modules.push(BoundModule { module, binding });
        Ok(())
    }
}

/// What one module saw and did during a cascade evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ModuleRecord {
    pub state: Vec<f64>,
    pub upstream: Vec<f64>,
    pub compensation: Vec<f64>,
    pub log_prob: f64,
    pub action: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeRecord {
    pub base_state: Vec<f64>,
    pub base_action: Vec<f64>,
    pub base_log_prob: f64,
    pub modules: Vec<ModuleRecord>,
}

fn act<R: Rng + ?Sized>(
    policy: &GaussianPolicy,
    input: &[f64],
    rng: &mut R,
    stochastic: bool,
) -> Result<(Vec<f64>, f64)> {
    if stochastic {
        policy.sample_action(input, rng)
    } else {
        let mean = policy.mean(input)?;
        let lp = policy.log_prob(input, &mean)?;
        Ok((mean, lp))
    }
}

pub fn base_act<R: Rng + ?Sized>(
    base: &BaseModule,
    s0: &[f64],
    rng: &mut R,
    stochastic: bool,
) -> Result<(Vec<f64>, f64)> {
    check_dim("base state", base.state_dim(), s0.len())?;
    act(&base.policy, s0, rng, stochastic)
}

pub fn compensation_input(s_i: &[f64], a_prev: &[f64]) -> Vec<f64> {
    let mut input = Vec::with_capacity(s_i.len() + a_prev.len());
    input.extend_from_slice(s_i);
    input.extend_from_slice(a_prev);
    input
}

pub fn compensate<R: Rng + ?Sized>(
    module: &AttributeModule,
    s_i: &[f64],
    a_prev: &[f64],
    rng: &mut R,
    stochastic: bool,
) -> Result<(Vec<f64>, f64)> {
    check_dim("attribute state", module.view_dim(), s_i.len())?;
    check_dim("upstream action", module.robot.action_dim(), a_prev.len())?;
    act(&module.comp_policy, &compensation_input(s_i, a_prev), rng, stochastic)
}

/// Elementwise clamp to `±limits`: the command the actuators actually apply.
pub fn clamp_action(a: &[f64], limits: &[f64]) -> Vec<f64> {
    a.iter().zip(limits).map(|(v, l)| v.clamp(-l, *l)).collect()
}

/// `clamp(a_prev + w a_c)` elementwise to `±limits`.
pub fn combine(a_prev: &[f64], a_c: &[f64], w: f64, limits: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a_prev.len(), a_c.len());
    a_prev
        .iter()
        .zip(a_c)
        .zip(limits)
        .map(|((p, c), l)| (p + w * c).clamp(-l, *l))
        .collect()
}

/// Linear ramp from `INITIAL_WEIGHT` to 1 over `ramp_iters` iterations.
pub fn weight_schedule(iteration: usize, ramp_iters: usize) -> f64 {
    if ramp_iters == 0 {
        return 1.0;
    }
    (INITIAL_WEIGHT + (1.0 - INITIAL_WEIGHT) * iteration as f64 / ramp_iters as f64).min(1.0)
}

/// `-beta ||a_c||^2`.
pub fn compensation_penalty(a_c: &[f64], beta: f64) -> f64 {
    -beta * a_c.iter().map(|c| c * c).sum::<f64>()
}

pub fn cascade_act<R: Rng + ?Sized>(
    cascade: &CascadePolicy,
    world: &WorldState,
    cfg: &SimConfig,
    rng: &mut R,
    stochastic: bool,
) -> Result<(Vec<f64>, CascadeRecord)> {
    let s0 = AttributeSpec::base().extract(world, cfg)?;
    let (a0, lp0) = base_act(&cascade.base, &s0, rng, stochastic)?;
    let limits = cfg.action_limits(cascade.base.robot);
    // Modules compensate the applied command, not the raw policy output.
    let mut action = clamp_action(&a0, &limits);
    let mut modules = Vec::with_capacity(cascade.modules.len());
    for bound in &cascade.modules {
        let s_i = bound.binding.extract(world, cfg)?;
        let (a_c, lp) = compensate(&bound.module, &s_i, &action, rng, stochastic)?;
        let next = combine(&action, &a_c, bound.module.weight, &limits);
        modules.push(ModuleRecord {
            state: s_i,
            upstream: std::mem::replace(&mut action, next.clone()),
            compensation: a_c,
            log_prob: lp,
            action: next,
        });
    }
    Ok((
        action,
        CascadeRecord {
            base_state: s0,
            base_action: a0,
            base_log_prob: lp0,
            modules,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointKind {
    Base,
    Attribute,
}

/// On-disk form of a base module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseCheckpoint {
    pub kind: CheckpointKind,
    pub robot: RobotKind,
    pub policy: NetworkCheckpoint,
    pub value: NetworkCheckpoint,
}

impl BaseCheckpoint {
    pub fn from_module(base: &BaseModule) -> Self {
        Self {
            kind: CheckpointKind::Base,
            robot: base.robot,
            policy: NetworkCheckpoint::from_policy(&base.policy),
            value: NetworkCheckpoint::from_net(&base.value_net),
        }
    }

    pub fn to_module(&self) -> Result<BaseModule> {
        if self.kind != CheckpointKind::Base {
            return Err(CanError::Config("not a base checkpoint".into()));
        }
        let policy = self.policy.to_policy()?;
        let value_net = self.value.to_net()?;
        let input = AttributeSpec::base().state_dim(self.robot);
        check_dim("base policy input", input, policy.input_dim())?;
        check_dim("base policy output", self.robot.action_dim(), policy.action_dim())?;
        check_dim("base critic input", input, value_net.input_dim())?;
        Ok(BaseModule {
            robot: self.robot,
            policy,
            value_net,
            frozen: true,
        })
    }
}

/// On-disk form of an attribute module: only its own networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleCheckpoint {
    pub kind: CheckpointKind,
    pub robot: RobotKind,
    pub attribute: AttributeKind,
    pub weight: f64,
    pub penalty_coeff: f64,
    pub policy: NetworkCheckpoint,
    pub value: NetworkCheckpoint,
}

impl ModuleCheckpoint {
    pub fn from_module(module: &AttributeModule) -> Self {
        Self {
            kind: CheckpointKind::Attribute,
            robot: module.robot,
            attribute: module.attribute,
            weight: module.weight,
            penalty_coeff: module.penalty_coeff,
            policy: NetworkCheckpoint::from_policy(&module.comp_policy),
            value: NetworkCheckpoint::from_net(&module.value_net),
        }
    }

    pub fn to_module(&self) -> Result<AttributeModule> {
        if self.kind != CheckpointKind::Attribute {
            return Err(CanError::Config("not an attribute checkpoint".into()));
        }
        if !(0.0..=1.0).contains(&self.weight) {
            return Err(CanError::Config(format!("weight {} outside [0, 1]", self.weight)));
        }
        let module = AttributeModule {
            attribute: self.attribute,
            robot: self.robot,
            comp_policy: self.policy.to_policy()?,
            value_net: self.value.to_net()?,
            weight: self.weight,
            penalty_coeff: self.penalty_coeff,
        };
        module.check_shapes()?;
        Ok(module)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleEntry {
    pub attribute: AttributeKind,
    pub checkpoint: PathBuf,
    #[serde(default)]
    pub entity_binding: usize,
}

/// A base checkpoint plus an ordered list of bound module checkpoints.
/// Relative paths are resolved against the descriptor's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeDescriptor {
    pub base_checkpoint: PathBuf,
    #[serde(default)]
    pub modules: Vec<ModuleEntry>,
}

impl CascadeDescriptor {
    pub fn load(path: &Path) -> Result<Self> {
        let mut d: Self = read_json(path)?;
        let dir = path.parent().unwrap_or(Path::new(""));
        d.base_checkpoint = dir.join(&d.base_checkpoint);
        for m in &mut d.modules {
            m.checkpoint = dir.join(&m.checkpoint);
        }
        Ok(d)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    /// Loads every checkpoint and checks that the chain fits together.
    pub fn build(&self) -> Result<CascadePolicy> {
        let base: BaseCheckpoint = read_json(&self.base_checkpoint)?;
        let mut cascade = CascadePolicy::new(base.to_module()?);
        for entry in &self.modules {
            let ckpt: ModuleCheckpoint = read_json(&entry.checkpoint)?;
            if ckpt.attribute != entry.attribute {
                return Err(CanError::Config(format!(
                    "{} holds a {} module, descriptor expects {}",
                    entry.checkpoint.display(),
                    ckpt.attribute.name(),
                    entry.attribute.name()
                )));
            }
            cascade.push(ckpt.to_module()?, entry.entity_binding)?;
        }
        Ok(cascade)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attributes::{AddonConfig, ObstacleConfig, Task, TaskFile};
    use crate::dynamics::{reset, StartAnchor};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn obstacle_task(n: usize) -> Task {
        let addons = (0..n).map(|_| AddonConfig::Obstacle(ObstacleConfig::default())).collect();
        Task::from_file(&TaskFile::new(RobotKind::Point, addons)).unwrap()
    }

    fn perturbed(mut m: AttributeModule, seed: u64) -> AttributeModule {
        let mut r = rng(seed);
        m.comp_policy
            .mean_net
            .params_mut()
            .iter_mut()
            .for_each(|p| *p += r.random_range(-0.5..0.5));
        m
    }

    #[test]
    fn base_action_dimensions() {
        for (robot, dim) in [(RobotKind::Point, 2), (RobotKind::Arm, 5)] {
            let base = BaseModule::new(robot, &mut rng(0)).unwrap();
            let s0 = vec![0.1; base.state_dim()];
            let (a, _) = base_act(&base, &s0, &mut rng(1), true).unwrap();
            assert_eq!(a.len(), dim);
            assert!(base_act(&base, &s0[1..], &mut rng(1), false).is_err());
        }
    }

    #[test]
    fn deterministic_base_ignores_rng_and_stochastic_is_reproducible() {
        let base = BaseModule::new(RobotKind::Point, &mut rng(0)).unwrap();
        let s0 = [0.1, -0.2, 0.3, 0.0, 0.5, 0.2];
        assert_eq!(
            base_act(&base, &s0, &mut rng(1), false).unwrap(),
            base_act(&base, &s0, &mut rng(2), false).unwrap()
        );
        assert_eq!(
            base_act(&base, &s0, &mut rng(3), true).unwrap(),
            base_act(&base, &s0, &mut rng(3), true).unwrap()
        );
    }

    #[test]
    fn fresh_compensation_is_zero_and_input_order_matters() {
        let m = AttributeModule::new(AttributeKind::Obstacle, RobotKind::Point, 0.01, &mut rng(0)).unwrap();
        let s = vec![0.3; m.view_dim()];
        let (c, _) = compensate(&m, &s, &[1.0, -1.0], &mut rng(0), false).unwrap();
        assert_eq!(c, vec![0.0, 0.0]);
        let m = perturbed(m, 4);
        let (c1, _) = compensate(&m, &s, &[1.0, -1.0], &mut rng(0), false).unwrap();
        let (c2, _) = compensate(&m, &s, &[-1.0, 1.0], &mut rng(0), false).unwrap();
        assert_ne!(c1, c2);
        assert!(compensate(&m, &s[1..], &[1.0, -1.0], &mut rng(0), false).is_err());
    }

    #[test]
    fn combine_cases() {
        let lim = [1.0, 1.0];
        assert_eq!(combine(&[0.3, -0.4], &[5.0, 5.0], 0.0, &lim), vec![0.3, -0.4]);
        assert_eq!(combine(&[0.3, -0.4], &[0.0, 0.0], 0.7, &lim), vec![0.3, -0.4]);
        assert_eq!(combine(&[1.0, 0.0], &[0.0, 2.0], 0.5, &lim), vec![1.0, 1.0]);
        assert_eq!(combine(&[1.0, 0.0], &[1.0, -3.0], 1.0, &lim), vec![1.0, -1.0]);
    }

    #[test]
    fn weight_schedule_shape() {
        assert_eq!(weight_schedule(0, 90), 0.1);
        assert_eq!(weight_schedule(90, 90), 1.0);
        assert_eq!(weight_schedule(500, 90), 1.0);
        let mut r = rng(8);
        for _ in 0..1000 {
            let a = r.random_range(0..400);
            let b = r.random_range(0..400);
            assert!(weight_schedule(a.min(b), 120) <= weight_schedule(a.max(b), 120));
        }
    }

    #[test]
    fn penalty_values() {
        assert_eq!(compensation_penalty(&[0.0, 0.0], 0.01), 0.0);
        assert_eq!(compensation_penalty(&[1.0, 1.0], 0.01), -0.02);
    }

    #[test]
    fn cascade_identities() {
        let task = obstacle_task(1);
        let base = BaseModule::new(RobotKind::Point, &mut rng(0)).unwrap();
        let mut cascade = CascadePolicy::new(base.clone());
        let mut r = rng(2);
        let worlds: Vec<_> = (0..50)
            .map(|_| reset(&task, 1.0, StartAnchor::Nominal, &mut r).unwrap())
            .collect();
        let limits = task.sim.action_limits(RobotKind::Point);
        for w in &worlds {
            let s0 = AttributeSpec::base().extract(w, &task.sim).unwrap();
            let (a0, _) = base_act(&base, &s0, &mut rng(0), false).unwrap();
            let (a, _) = cascade_act(&cascade, w, &task.sim, &mut rng(0), false).unwrap();
            assert_eq!(a, a0);
        }
        let mut m = perturbed(
            AttributeModule::new(AttributeKind::Obstacle, RobotKind::Point, 0.01, &mut rng(1)).unwrap(),
            3,
        );
        m.weight = 0.0;
        cascade.push(m, 0).unwrap();
        for w in &worlds {
            let s0 = AttributeSpec::base().extract(w, &task.sim).unwrap();
            let (a0, _) = base_act(&base, &s0, &mut rng(0), false).unwrap();
            let (a, rec) = cascade_act(&cascade, w, &task.sim, &mut rng(0), false).unwrap();
            let clamped: Vec<f64> = a0.iter().zip(&limits).map(|(v, l)| v.clamp(-l, *l)).collect();
            assert_eq!(a, clamped);
            assert_eq!(rec.modules.len(), 1);
            assert_eq!(rec.modules[0].upstream, a0);
        }
    }

    #[test]
    fn shared_obstacle_module_reacts_to_second_obstacle() {
        let task = obstacle_task(2);
        let base = BaseModule::new(RobotKind::Point, &mut rng(0)).unwrap();
        let mut m = perturbed(
            AttributeModule::new(AttributeKind::Obstacle, RobotKind::Point, 0.01, &mut rng(1)).unwrap(),
            5,
        );
        m.weight = 1.0;
        let mut one = CascadePolicy::new(base.clone());
        one.push(m.clone(), 0).unwrap();
        let mut two = one.clone();
        two.push(m, 1).unwrap();
        let mut w = reset(&task, 0.0, StartAnchor::Nominal, &mut rng(0)).unwrap();
        w.obstacles[1].center = [-0.3, 0.1];
        let (a1, _) = cascade_act(&one, &w, &task.sim, &mut rng(0), false).unwrap();
        let (a2, _) = cascade_act(&two, &w, &task.sim, &mut rng(0), false).unwrap();
        assert_ne!(a1, a2);
        // Binding an entity the task lacks fails at evaluation time.
        let single = obstacle_task(1);
        let w1 = reset(&single, 0.0, StartAnchor::Nominal, &mut rng(0)).unwrap();
        assert!(cascade_act(&two, &w1, &single.sim, &mut rng(0), false).is_err());
    }

    #[test]
    fn cross_robot_modules_are_rejected() {
        let base = BaseModule::new(RobotKind::Point, &mut rng(0)).unwrap();
        let arm = AttributeModule::new(AttributeKind::Obstacle, RobotKind::Arm, 0.01, &mut rng(1)).unwrap();
        assert!(CascadePolicy::new(base.clone()).push(arm.clone(), 0).is_err());
        let mut forged = arm;
        forged.robot = RobotKind::Point;
        assert!(CascadePolicy::new(base.clone()).push(forged, 0).is_err());
        let door = AttributeModule::new(AttributeKind::Door, RobotKind::Point, 0.01, &mut rng(1)).unwrap();
        assert!(CascadePolicy::new(base).push(door, 1).is_err());
    }

    #[test]
    fn checkpoints_round_trip() {
        let base = BaseModule::new(RobotKind::Arm, &mut rng(0)).unwrap();
        let back = BaseCheckpoint::from_module(&base).to_module().unwrap();
        assert_eq!(back.policy, base.policy);
        assert_eq!(back.value_net, base.value_net);
        let m = AttributeModule::new(AttributeKind::SpeedLimit, RobotKind::Arm, 0.02, &mut rng(1)).unwrap();
        let text = serde_json::to_string(&ModuleCheckpoint::from_module(&m)).unwrap();
        let back: ModuleCheckpoint = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_module().unwrap(), m);
    }
}
