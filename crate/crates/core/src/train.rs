//! PPO with generalized advantage estimation, and the two training
//! procedures built on it: base-module training and attribute-module
//! training on top of a frozen base.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attributes::{AttributeSpec, EpisodeStats, Task};
use crate::curriculum::{CurriculumConfig, CurriculumState};
use crate::dynamics::{reset, StartAnchor, WorldState};
use crate::error::{check_dim, CanError, Result};
use crate::io::write_json;
use crate::nn::{AdamState, DenseNet, GaussianPolicy};
use crate::policy::{
    clamp_action, combine, compensation_input, compensation_penalty, weight_schedule, AttributeModule, BaseCheckpoint,
    BaseModule, ModuleCheckpoint,
};

const HALF_LOG_TWO_PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub clip_epsilon: f64,
    pub epochs_per_iter: usize,
    pub minibatch_size: usize,
    pub lr: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub entropy_coeff: f64,
    pub value_coeff: f64,
    /// Remaining epochs of an iteration are skipped once a minibatch KL estimate exceeds this.
    pub target_kl: f64,
    /// Global gradient-norm clip; 0 disables it.
    pub max_grad_norm: f64,
    pub max_episodes: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_epsilon: 0.2,
            epochs_per_iter: 20,
            minibatch_size: 256,
            lr: 1e-4,
            gamma: 0.99,
            gae_lambda: 0.95,
            entropy_coeff: 0.01,
            value_coeff: 0.5,
            target_kl: 0.05,
            max_grad_norm: 0.5,
            max_episodes: 10_000,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CanError::Config(format!("ppo: {m}")));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if !(self.clip_epsilon > 0.0) || !(self.lr >= 0.0) || self.minibatch_size == 0 {
            return bad("clip, learning rate and minibatch size must be positive");
        }
        if !(self.entropy_coeff >= 0.0 && self.value_coeff >= 0.0 && self.max_grad_norm >= 0.0) {
            return bad("coefficients must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub ppo: PpoConfig,
    /// Environment steps per iteration, split evenly over the environments.
    pub rollout_steps: usize,
    pub num_envs: usize,
    /// Iteration budget.
    pub max_iterations: usize,
    /// Share of the budget over which the compensation weight ramps to 1.
    pub weight_ramp_fraction: f64,
    /// Write a checkpoint every this many iterations; 0 disables.
    pub checkpoint_every: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            ppo: PpoConfig::default(),
            rollout_steps: 2048,
            num_envs: 8,
            max_iterations: 500,
            weight_ramp_fraction: 0.3,
            checkpoint_every: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        self.ppo.validate()?;
        if self.num_envs == 0 || self.rollout_steps < self.num_envs {
            return Err(CanError::Config("need at least one step per environment".into()));
        }
        if !(0.0..=1.0).contains(&self.weight_ramp_fraction) {
            return Err(CanError::Config("weight_ramp_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn ramp_iters(&self) -> usize {
        (self.weight_ramp_fraction * self.max_iterations as f64).ceil() as usize
    }
}

/// Per-run knobs that do not change results except through the seed.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: u64,
    /// Worker threads for rollout collection; results do not depend on it.
    pub threads: usize,
    pub checkpoint_dir: Option<PathBuf>,
}

impl RunOptions {
    pub fn seeded(seed: u64) -> Self {
        Self {
            seed,
            threads: 1,
            checkpoint_dir: None,
        }
    }
}

/// Generalized advantage estimates and returns for one contiguous segment.
/// `last_value` bootstraps the step after the segment unless it ended an episode.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dim("gae values", rewards.len(), values.len())?;
    check_dim("gae dones", rewards.len(), dones.len())?;
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { values[t + 1] } else { last_value };
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        running = delta + gamma * lambda * live * running;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Smallest deviation advantages are divided by. Below it a batch carries no
/// reward signal, only critic noise, and scaling that noise up to unit size
/// makes the policy chase the critic's arbitrary slope instead of exploring.
pub const ADVANTAGE_STD_FLOOR: f64 = 1e-2;

/// Shifts to zero mean and scales to unit (population) deviation. Batches
/// deviating less than [`ADVANTAGE_STD_FLOOR`] are divided by the floor.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    adv.iter_mut().for_each(|a| *a -= mean);
    let std = (adv.iter().map(|a| a * a).sum::<f64>() / n).sqrt();
    let scale = std.max(ADVANTAGE_STD_FLOOR);
    adv.iter_mut().for_each(|a| *a /= scale);
}

/// Minibatch of flattened row-major samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PpoBatch {
    pub policy_inputs: Vec<f64>,
    pub value_inputs: Vec<f64>,
    pub actions: Vec<f64>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl PpoBatch {
    pub fn len(&self) -> usize {
        self.old_log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.old_log_probs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpoLoss {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Mean of `old_log_prob - log_prob`.
    pub approx_kl: f64,
    pub clip_fraction: f64,
    /// Mean-network parameters followed by `log_std`.
    pub policy_grad: Vec<f64>,
    pub value_grad: Vec<f64>,
}

/// Clipped surrogate plus weighted value error minus weighted entropy, with
/// analytic gradients for the policy and the critic.
pub fn ppo_loss(batch: &PpoBatch, policy: &GaussianPolicy, value_net: &DenseNet, cfg: &PpoConfig) -> Result<PpoLoss> {
    let n = batch.len();
    if n == 0 {
        return Err(CanError::Config("empty PPO batch".into()));
    }
    let act_dim = policy.action_dim();
    check_dim("batch actions", n * act_dim, batch.actions.len())?;
    check_dim("batch advantages", n, batch.advantages.len())?;
    check_dim("batch returns", n, batch.returns.len())?;
    let inv_n = 1.0 / n as f64;

    let trace = policy.mean_net.forward_batch(&batch.policy_inputs, n)?;
    let means = trace.output();
    let std = policy.std();
    let log_std: Vec<f64> = std.iter().map(|s| s.ln()).collect();
    let active = policy.log_std_active();

    let mut policy_loss = 0.0;
    let mut approx_kl = 0.0;
    let mut clipped = 0usize;
    let mut mean_upstream = vec![0.0; n * act_dim];
    let mut log_std_grad = vec![0.0; act_dim];
    for i in 0..n {
        let mu = &means[i * act_dim..(i + 1) * act_dim];
        let a = &batch.actions[i * act_dim..(i + 1) * act_dim];
        let mut logp = 0.0;
        for j in 0..act_dim {
            let z = (a[j] - mu[j]) / std[j];
            logp += -0.5 * z * z - log_std[j] - HALF_LOG_TWO_PI;
        }
        let adv = batch.advantages[i];
        let ratio = (logp - batch.old_log_probs[i]).exp();
        let clipped_ratio = ratio.clamp(1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon);
        let surr = ratio * adv;
        let surr_clipped = clipped_ratio * adv;
        policy_loss -= surr.min(surr_clipped) * inv_n;
        approx_kl += (batch.old_log_probs[i] - logp) * inv_n;
        if surr <= surr_clipped {
            // d(-ratio * adv)/d logp, spread over the mean and log_std.
            let coeff = -adv * ratio * inv_n;
            for j in 0..act_dim {
                let diff = a[j] - mu[j];
                let var = std[j] * std[j];
                mean_upstream[i * act_dim + j] = coeff * diff / var;
                log_std_grad[j] += coeff * (diff * diff / var - 1.0) * active[j];
            }
        } else {
            clipped += 1;
        }
    }
    let entropy: f64 = log_std.iter().map(|l| l + HALF_LOG_TWO_PI + 0.5).sum();
    for j in 0..act_dim {
        log_std_grad[j] -= cfg.entropy_coeff * active[j];
    }
    let mut policy_grad = vec![0.0; policy.mean_net.param_count() + act_dim];
    let (net_grad, ls_grad) = policy_grad.split_at_mut(policy.mean_net.param_count());
    policy.mean_net.backward_batch(&trace, &mean_upstream, net_grad, false)?;
    ls_grad.copy_from_slice(&log_std_grad);

    let vtrace = value_net.forward_batch(&batch.value_inputs, n)?;
    check_dim("critic output", n, vtrace.output().len())?;
    let mut value_loss = 0.0;
    let mut value_upstream = vec![0.0; n];
    for (i, v) in vtrace.output().iter().enumerate() {
        let err = v - batch.returns[i];
        value_loss += err * err * inv_n;
        value_upstream[i] = cfg.value_coeff * 2.0 * err * inv_n;
    }
    let mut value_grad = vec![0.0; value_net.param_count()];
    value_net.backward_batch(&vtrace, &value_upstream, &mut value_grad, false)?;

    let loss = policy_loss + cfg.value_coeff * value_loss - cfg.entropy_coeff * entropy;
    if !loss.is_finite() {
        return Err(CanError::Divergence(format!("non-finite PPO loss {loss}")));
    }
    Ok(PpoLoss {
        loss,
        policy_loss,
        value_loss,
        entropy,
        approx_kl,
        clip_fraction: clipped as f64 * inv_n,
        policy_grad,
        value_grad,
    })
}

/// What an actor produced for one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorStep {
    /// Input of the trainable policy head.
    pub obs: Vec<f64>,
    pub value_obs: Vec<f64>,
    /// Sample of the trainable head.
    pub sample: Vec<f64>,
    pub log_prob: f64,
    /// Command sent to the environment.
    pub env_action: Vec<f64>,
    /// Added to the environment reward for training only (non-positive).
    pub shaping: f64,
}

/// Something that can drive an environment during rollout collection.
pub trait Actor: Sync {
    fn act(&self, world: &WorldState, rng: &mut ChaCha8Rng) -> Result<ActorStep>;
    fn value_obs(&self, world: &WorldState) -> Result<Vec<f64>>;
    fn value(&self, value_obs: &[f64]) -> Result<f64>;
}

/// Concatenated views of every attribute in the task; the base view alone
/// for a base-only task.
pub fn task_observation(task: &Task, world: &WorldState) -> Result<Vec<f64>> {
    let mut obs = Vec::new();
    for attr in task.attributes() {
        obs.extend(attr.extract(world, &task.sim)?);
    }
    Ok(obs)
}

pub fn task_observation_dim(task: &Task) -> usize {
    task.attributes().map(|a| a.state_dim(task.robot)).sum()
}

/// A single policy acting on the full task observation.
pub struct DirectActor<'a> {
    pub task: &'a Task,
    pub policy: &'a GaussianPolicy,
    pub value_net: &'a DenseNet,
}

impl Actor for DirectActor<'_> {
    fn act(&self, world: &WorldState, rng: &mut ChaCha8Rng) -> Result<ActorStep> {
        let obs = task_observation(self.task, world)?;
        let (sample, log_prob) = self.policy.sample_action(&obs, rng)?;
        Ok(ActorStep {
            value_obs: obs.clone(),
            obs,
            env_action: sample.clone(),
            sample,
            log_prob,
            shaping: 0.0,
        })
    }

    fn value_obs(&self, world: &WorldState) -> Result<Vec<f64>> {
        task_observation(self.task, world)
    }

    fn value(&self, value_obs: &[f64]) -> Result<f64> {
        Ok(self.value_net.forward(value_obs)?[0])
    }
}

/// A frozen base acting on its mean action, compensated by a trainable module.
pub struct CascadeActor<'a> {
    pub task: &'a Task,
    pub base: &'a BaseModule,
    pub spec: AttributeSpec,
    pub comp_policy: &'a GaussianPolicy,
    pub value_net: &'a DenseNet,
    pub weight: f64,
    pub penalty_coeff: f64,
}

impl CascadeActor<'_> {
    fn views(&self, world: &WorldState) -> Result<(Vec<f64>, Vec<f64>)> {
        let s0 = AttributeSpec::base().extract(world, &self.task.sim)?;
        let s_i = self.spec.extract(world, &self.task.sim)?;
        Ok((s0, s_i))
    }
}

impl Actor for CascadeActor<'_> {
    fn act(&self, world: &WorldState, rng: &mut ChaCha8Rng) -> Result<ActorStep> {
        let (s0, s_i) = self.views(world)?;
        let limits = self.task.sim.action_limits(self.task.robot);
        let a_prev = clamp_action(&self.base.policy.mean(&s0)?, &limits);
        let obs = compensation_input(&s_i, &a_prev);
        let (a_c, log_prob) = self.comp_policy.sample_action(&obs, rng)?;
        // Penalize the commanded compensation, not the exploration noise:
        // charging the noise too drives the std to its floor.
        let commanded = self.comp_policy.mean(&obs)?;
        Ok(ActorStep {
            value_obs: [s0, s_i].concat(),
            env_action: combine(&a_prev, &a_c, self.weight, &limits),
            shaping: compensation_penalty(&commanded, self.penalty_coeff),
            obs,
            sample: a_c,
            log_prob,
        })
    }

    fn value_obs(&self, world: &WorldState) -> Result<Vec<f64>> {
        let (s0, s_i) = self.views(world)?;
        Ok([s0, s_i].concat())
    }

    fn value(&self, value_obs: &[f64]) -> Result<f64> {
        Ok(self.value_net.forward(value_obs)?[0])
    }
}

/// One environment instance with its own random stream.
#[derive(Debug, Clone)]
pub struct EnvSlot {
    world: Option<WorldState>,
    rng: ChaCha8Rng,
    stats: EpisodeStats,
}

impl EnvSlot {
    pub fn new(seed: u64, index: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64 + 1);
        Self {
            world: None,
            rng,
            stats: EpisodeStats::default(),
        }
    }
}

/// Environments stepped in lockstep by rollout collection.
#[derive(Debug, Clone)]
pub struct EnvPool {
    pub slots: Vec<EnvSlot>,
    pub threads: usize,
}

impl EnvPool {
    pub fn new(seed: u64, num_envs: usize, threads: usize) -> Self {
        Self {
            slots: (0..num_envs).map(|i| EnvSlot::new(seed, i)).collect(),
            threads: threads.max(1),
        }
    }
}

/// Transitions of one iteration, stored environment by environment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Rollout {
    pub obs: Vec<f64>,
    pub value_obs: Vec<f64>,
    pub samples: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    /// `(start, end, bootstrap value)` of each environment's contiguous segment.
    pub segments: Vec<(usize, usize, f64)>,
    /// Environment reward totals of the episodes finished in this rollout.
    pub episode_rewards: Vec<f64>,
    pub episode_lengths: Vec<usize>,
    pub episode_successes: Vec<bool>,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn mean_episode_reward(&self) -> Option<f64> {
        let n = self.episode_rewards.len();
        (n > 0).then(|| self.episode_rewards.iter().sum::<f64>() / n as f64)
    }

    fn append(&mut self, other: Rollout) {
        let offset = self.len();
        self.obs.extend(other.obs);
        self.value_obs.extend(other.value_obs);
        self.samples.extend(other.samples);
        self.log_probs.extend(other.log_probs);
        self.rewards.extend(other.rewards);
        self.values.extend(other.values);
        self.dones.extend(other.dones);
        self.segments
            .extend(other.segments.into_iter().map(|(s, e, b)| (s + offset, e + offset, b)));
        self.episode_rewards.extend(other.episode_rewards);
        self.episode_lengths.extend(other.episode_lengths);
        self.episode_successes.extend(other.episode_successes);
    }

    /// Advantages and returns over every segment.
    pub fn advantages(&self, gamma: f64, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut adv = Vec::with_capacity(self.len());
        let mut ret = Vec::with_capacity(self.len());
        for &(s, e, bootstrap) in &self.segments {
            let (a, r) = compute_gae(
                &self.rewards[s..e],
                &self.values[s..e],
                &self.dones[s..e],
                bootstrap,
                gamma,
                lambda,
            )?;
            adv.extend(a);
            ret.extend(r);
        }
        Ok((adv, ret))
    }
}

fn collect_slot<A: Actor + ?Sized>(
    actor: &A,
    task: &Task,
    level: f64,
    anchor: StartAnchor,
    steps: usize,
    gamma: f64,
    slot: &mut EnvSlot,
) -> Result<Rollout> {
    let mut out = Rollout::default();
    for _ in 0..steps {
        let world = match slot.world.take() {
            Some(w) => w,
            None => {
                slot.stats = EpisodeStats::default();
                reset(task, level, anchor, &mut slot.rng)?
            }
        };
        let step = actor.act(&world, &mut slot.rng)?;
        let value = actor.value(&step.value_obs)?;
        let outcome = task.step(&world, &step.env_action)?;
        slot.stats.record(&outcome);
        let mut reward = outcome.total_reward() + step.shaping;
        if outcome.truncated {
            // Time limits are not part of the state; bootstrap through them.
            reward += gamma * actor.value(&actor.value_obs(&outcome.world)?)?;
        }
        out.obs.extend(step.obs);
        out.value_obs.extend(step.value_obs);
        out.samples.extend(step.sample);
        out.log_probs.push(step.log_prob);
        out.rewards.push(reward);
        out.values.push(value);
        out.dones.push(outcome.done);
        if outcome.done {
            out.episode_rewards.push(slot.stats.total_reward);
            out.episode_lengths.push(slot.stats.steps);
            out.episode_successes.push(slot.stats.success());
        } else {
            slot.world = Some(outcome.world);
        }
    }
    let bootstrap = match &slot.world {
        Some(w) => actor.value(&actor.value_obs(w)?)?,
        None => 0.0,
    };
    out.segments.push((0, steps, bootstrap));
    Ok(out)
}

/// Steps every environment of `pool` for `n_steps / num_envs` steps.
/// Episodes reset at `level` around `anchor`; results are independent of
/// the thread count.
pub fn collect_rollouts<A: Actor + ?Sized>(
    actor: &A,
    task: &Task,
    level: f64,
    anchor: StartAnchor,
    n_steps: usize,
    gamma: f64,
    pool: &mut EnvPool,
) -> Result<Rollout> {
    let envs = pool.slots.len();
    if n_steps == 0 || envs == 0 {
        return Err(CanError::Config("rollout needs steps and environments".into()));
    }
    let per_env = n_steps.div_ceil(envs);
    let parts: Vec<Result<Rollout>> = if pool.threads <= 1 {
        pool.slots
            .iter_mut()
            .map(|s| collect_slot(actor, task, level, anchor, per_env, gamma, s))
            .collect()
    } else {
        let chunk = envs.div_ceil(pool.threads);
        std::thread::scope(|scope| {
            let handles: Vec<_> = pool
                .slots
                .chunks_mut(chunk)
                .map(|slots| {
                    scope.spawn(move || {
                        slots
                            .iter_mut()
                            .map(|s| collect_slot(actor, task, level, anchor, per_env, gamma, s))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("rollout worker panicked"))
                .collect()
        })
    };
    let mut rollout = Rollout::default();
    for part in parts {
        rollout.append(part?);
    }
    Ok(rollout)
}

/// Optimizer state of a policy head and its critic.
#[derive(Debug, Clone)]
pub struct Learner {
    pub policy: GaussianPolicy,
    pub value_net: DenseNet,
    policy_opt: AdamState,
    value_opt: AdamState,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub kl: f64,
    pub minibatches: usize,
}

impl Learner {
    pub fn new(policy: GaussianPolicy, value_net: DenseNet, lr: f64) -> Self {
        let n = policy.mean_net.param_count() + policy.action_dim();
        Self {
            policy_opt: AdamState::new(n, lr),
            value_opt: AdamState::new(value_net.param_count(), lr),
            policy,
            value_net,
        }
    }

    /// Epochs of clipped PPO over shuffled minibatches of `rollout`.
    pub fn update(&mut self, rollout: &Rollout, cfg: &PpoConfig, rng: &mut ChaCha8Rng) -> Result<UpdateStats> {
        let n = rollout.len();
        let (mut adv, returns) = rollout.advantages(cfg.gamma, cfg.gae_lambda)?;
        normalize_advantages(&mut adv);
        let obs_dim = rollout.obs.len() / n;
        let vobs_dim = rollout.value_obs.len() / n;
        let act_dim = self.policy.action_dim();
        let mut order: Vec<usize> = (0..n).collect();
        let mut stats = UpdateStats::default();
        'epochs: for _ in 0..cfg.epochs_per_iter {
            order.shuffle(rng);
            for chunk in order.chunks(cfg.minibatch_size) {
                let gather = |src: &[f64], dim: usize| -> Vec<f64> {
                    chunk.iter().flat_map(|&i| &src[i * dim..(i + 1) * dim]).copied().collect()
                };
                let batch = PpoBatch {
                    policy_inputs: gather(&rollout.obs, obs_dim),
                    value_inputs: gather(&rollout.value_obs, vobs_dim),
                    actions: gather(&rollout.samples, act_dim),
                    old_log_probs: chunk.iter().map(|&i| rollout.log_probs[i]).collect(),
                    advantages: chunk.iter().map(|&i| adv[i]).collect(),
                    returns: chunk.iter().map(|&i| returns[i]).collect(),
                };
                let loss = ppo_loss(&batch, &self.policy, &self.value_net, cfg)?;
                stats.kl = loss.approx_kl;
                stats.entropy = loss.entropy;
                if loss.approx_kl > cfg.target_kl {
                    break 'epochs;
                }
                stats.policy_loss += loss.policy_loss;
                stats.value_loss += loss.value_loss;
                stats.minibatches += 1;
                self.apply(loss, cfg)?;
            }
        }
        if stats.minibatches > 0 {
            stats.policy_loss /= stats.minibatches as f64;
            stats.value_loss /= stats.minibatches as f64;
        }
        Ok(stats)
    }

    fn apply(&mut self, loss: PpoLoss, cfg: &PpoConfig) -> Result<()> {
        let PpoLoss {
            mut policy_grad,
            mut value_grad,
            ..
        } = loss;
        if cfg.max_grad_norm > 0.0 {
            let norm = policy_grad
                .iter()
                .chain(&value_grad)
                .map(|g| g * g)
                .sum::<f64>()
                .sqrt();
            if norm > cfg.max_grad_norm {
                let scale = cfg.max_grad_norm / norm;
                policy_grad.iter_mut().chain(value_grad.iter_mut()).for_each(|g| *g *= scale);
            }
        }
        let net_len = self.policy.mean_net.param_count();
        let mut flat = [self.policy.mean_net.params(), &self.policy.log_std[..]].concat();
        self.policy_opt.step(&mut flat, &policy_grad)?;
        self.policy.mean_net.params_mut().copy_from_slice(&flat[..net_len]);
        self.policy.log_std.copy_from_slice(&flat[net_len..]);
        self.value_opt.step(self.value_net.params_mut(), &value_grad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TerminalLevel,
    MaxEpisodes,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iter: usize,
    /// Episodes finished so far.
    pub episodes: usize,
    /// Level in force while the iteration's rollouts were collected.
    pub random_level: f64,
    /// `None` when no episode finished during the iteration.
    pub mean_ep_reward: Option<f64>,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
    pub stop: StopReason,
    /// Iterations run until the curriculum reached its terminal level.
    pub iterations_to_terminal: Option<usize>,
    pub final_level: f64,
}

pub const CSV_HEADER: &str = "iter,episodes,random_level,mean_ep_reward,policy_loss,value_loss,entropy,kl";

impl LogRow {
    pub fn csv_line(&self) -> String {
        let reward = self.mean_ep_reward.map(|r| r.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.iter,
            self.episodes,
            self.random_level,
            reward,
            self.policy_loss,
            self.value_loss,
            self.entropy,
            self.kl
        )
    }
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for row in &self.rows {
            s.push_str(&row.csv_line());
            s.push('\n');
        }
        s
    }
}

fn trainer_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Shared PPO + curriculum loop. `collect` gathers one iteration's rollout
/// with the current parameters; `checkpoint` is called every
/// `checkpoint_every` iterations.
fn run_loop<F, C>(
    learner: &mut Learner,
    cfg: &TrainingConfig,
    curriculum: &CurriculumConfig,
    opts: &RunOptions,
    mut collect: F,
    mut checkpoint: C,
) -> Result<TrainingLog>
where
    F: FnMut(&Learner, usize, f64, StartAnchor, &mut EnvPool) -> Result<Rollout>,
    C: FnMut(&Learner, usize) -> Result<()>,
{
    cfg.validate()?;
    let mut cur = CurriculumState::new(curriculum.clone())?;
    let mut pool = EnvPool::new(opts.seed, cfg.num_envs, opts.threads);
    let mut rng = trainer_rng(opts.seed);
    let mut rows = Vec::new();
    let mut episodes = 0;
    let mut stop = StopReason::MaxIterations;
    let mut iterations_to_terminal = None;
    for iter in 0..cfg.max_iterations {
        let (level, anchor) = cur.effective_reset_level();
        let rollout = collect(learner, iter, level, anchor, &mut pool)?;
        let stats = learner.update(&rollout, &cfg.ppo, &mut rng)?;
        episodes += rollout.episode_rewards.len();
        let mean = rollout.mean_episode_reward();
        rows.push(LogRow {
            iter,
            episodes,
            random_level: cur.random_level,
            mean_ep_reward: mean,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            kl: stats.kl,
        });
        if cfg.checkpoint_every > 0 && (iter + 1) % cfg.checkpoint_every == 0 {
            checkpoint(learner, iter + 1)?;
        }
        if let Some(m) = mean {
            if cur.update(m)?.terminal {
                stop = StopReason::TerminalLevel;
                iterations_to_terminal = Some(iter + 1);
                break;
            }
        }
        if episodes >= cfg.ppo.max_episodes {
            stop = StopReason::MaxEpisodes;
            break;
        }
    }
    Ok(TrainingLog {
        rows,
        stop,
        iterations_to_terminal,
        final_level: cur.random_level,
    })
}

fn checkpoint_path(opts: &RunOptions, iter: usize) -> Option<PathBuf> {
    opts.checkpoint_dir
        .as_ref()
        .map(|d| d.join(format!("iter_{iter:06}.json")))
}

/// PPO on the full task observation with a single policy.
pub fn train_from_scratch(
    task: &Task,
    cfg: &TrainingConfig,
    curriculum: &CurriculumConfig,
    opts: &RunOptions,
) -> Result<(GaussianPolicy, DenseNet, TrainingLog)> {
    let mut init = trainer_rng(opts.seed);
    init.set_stream(u64::MAX);
    let dim = task_observation_dim(task);
    let policy = GaussianPolicy::new(dim, task.action_dim(), &mut init)?;
    let value = DenseNet::critic(dim, &mut init)?;
    let mut learner = Learner::new(policy, value, cfg.ppo.lr);
    let log = run_loop(
        &mut learner,
        cfg,
        curriculum,
        opts,
        |l, _, level, anchor, pool| {
            let actor = DirectActor {
                task,
                policy: &l.policy,
                value_net: &l.value_net,
            };
            collect_rollouts(&actor, task, level, anchor, cfg.rollout_steps, cfg.ppo.gamma, pool)
        },
        |l, iter| match (checkpoint_path(opts, iter), task.addons.is_empty()) {
            (Some(path), true) => write_json(
                &path,
                &BaseCheckpoint::from_module(&BaseModule {
                    robot: task.robot,
                    policy: l.policy.clone(),
                    value_net: l.value_net.clone(),
                    frozen: false,
                }),
            ),
            _ => Ok(()),
        },
    )?;
    Ok((learner.policy, learner.value_net, log))
}

/// Trains the base module on a task with no add-ons.
pub fn train_base(
    task: &Task,
    cfg: &TrainingConfig,
    curriculum: &CurriculumConfig,
    opts: &RunOptions,
) -> Result<(BaseModule, TrainingLog)> {
    if !task.addons.is_empty() {
        return Err(CanError::Config("base training needs a task without add-ons".into()));
    }
    let (policy, value_net, log) = train_from_scratch(task, cfg, curriculum, opts)?;
    Ok((
        BaseModule {
            robot: task.robot,
            policy,
            value_net,
            frozen: false,
        },
        log,
    ))
}

/// Trains one add-on module behind a frozen base. The step reward is the
/// sum of the task's rewards minus the compensation penalty.
pub fn train_attribute(
    base: &BaseModule,
    task: &Task,
    cfg: &TrainingConfig,
    curriculum: &CurriculumConfig,
    opts: &RunOptions,
) -> Result<(AttributeModule, TrainingLog)> {
    if !base.frozen {
        return Err(CanError::Config("attribute training needs a frozen base".into()));
    }
    if base.robot != task.robot {
        return Err(CanError::Config(format!(
            "base trained for {:?}, task uses {:?}",
            base.robot, task.robot
        )));
    }
    let [spec] = task.addons.as_slice() else {
        return Err(CanError::Config("attribute training needs exactly one add-on".into()));
    };
    let beta = task.compensation_penalties[0];
    let mut init = trainer_rng(opts.seed);
    init.set_stream(u64::MAX);
    let fresh = AttributeModule::new(spec.kind, task.robot, beta, &mut init)?;
    let mut learner = Learner::new(fresh.comp_policy, fresh.value_net, cfg.ppo.lr);
    let ramp = cfg.ramp_iters();
    let mut last_weight = weight_schedule(0, ramp);
    let module_at = |l: &Learner, weight: f64| AttributeModule {
        attribute: spec.kind,
        robot: task.robot,
        comp_policy: l.policy.clone(),
        value_net: l.value_net.clone(),
        weight,
        penalty_coeff: beta,
    };
    let log = run_loop(
        &mut learner,
        cfg,
        curriculum,
        opts,
        |l, iter, level, anchor, pool| {
            last_weight = weight_schedule(iter, ramp);
            let actor = CascadeActor {
                task,
                base,
                spec: *spec,
                comp_policy: &l.policy,
                value_net: &l.value_net,
                weight: last_weight,
                penalty_coeff: beta,
            };
            collect_rollouts(&actor, task, level, anchor, cfg.rollout_steps, cfg.ppo.gamma, pool)
        },
        |l, iter| match checkpoint_path(opts, iter) {
            Some(path) => write_json(
                &path,
                &ModuleCheckpoint::from_module(&module_at(l, weight_schedule(iter - 1, ramp))),
            ),
            None => Ok(()),
        },
    )?;
    let module = module_at(&learner, last_weight);
    Ok((module, log))
}
