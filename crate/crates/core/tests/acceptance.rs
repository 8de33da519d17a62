//! Acceptance suite. Prints one PASS/FAIL line per criterion, then fails if
//! any criterion failed. The training criteria run the real harness commands
//! on the task files in `tasks/` and take several minutes on one core.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use can_core::attributes::{
    AttributeKind, AttributeSpec, DisturbanceForce, DoorSchedule, ObstacleParams, SpeedLimitProfile, TaskFile,
};
use can_core::curriculum::{CurriculumConfig, CurriculumState};
use can_core::dynamics::{PointRobotState, RobotKind, RobotState, SimConfig, WorldState};
use can_core::harness::{self, TrainOverrides, ARM_CAN, ARM_SCRATCH_CL, ARM_SCRATCH_RCL};
use can_core::nn::{DenseNet, GaussianPolicy};
use can_core::policy::{AttributeModule, BaseModule, CascadeDescriptor};
use can_core::train::{compute_gae, ppo_loss, PpoBatch, PpoConfig, RunOptions, TrainingLog};
use can_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Pinned tolerances and budgets.
const GAE_ROLLOUTS: usize = 1000;
const GAE_MAX_LEN: usize = 30;
const GAE_TOL: f64 = 1e-10;
const GAE_TIME: Duration = Duration::from_secs(5);
const GRAD_STEP: f64 = 1e-6;
const GRAD_REL_TOL: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely.
const GRAD_MAGNITUDE_FLOOR: f64 = 1e-3;
const GRAD_TIME: Duration = Duration::from_secs(30);
/// Parameters probed per network, spread evenly over every layer.
const GRAD_PROBES: usize = 400;
const CURRICULUM_TIME: Duration = Duration::from_secs(1);
const POINT_BUDGET: usize = 500;
const ARM_BUDGET: usize = 1500;
const ARM_MIN_LEVEL: f64 = 0.5;
const BASE_MIN_SUCCESS: f64 = 0.9;
const ATTRIBUTE_MIN_SUCCESS: f64 = 0.8;
const ZERO_SHOT_MIN_SUCCESS: f64 = 0.6;
const SCRATCH_CL_MAX_LEVEL: f64 = 0.2;
const INACTIVE_RATIO: f64 = 0.2;
const EVAL_EPISODES: usize = 50;

const TRAIN_SEED: u64 = 1;
const EVAL_SEED: u64 = 7;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

#[derive(Default)]
struct Report {
    failures: Vec<usize>,
}

impl Report {
    fn check(&mut self, id: usize, name: &str, f: impl FnOnce() -> Result<Outcome>) {
        let start = Instant::now();
        let o = f().unwrap_or_else(|e| outcome(false, format!("error: {e}")));
        let secs = start.elapsed().as_secs_f64();
        let tag = if o.passed { "PASS" } else { "FAIL" };
        println!("[{tag}] {id:>2} {name}: {} ({secs:.1} s)", o.detail);
        if !o.passed {
            self.failures.push(id);
        }
    }
}

fn tasks() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../tasks")
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- 1

/// Advantage as the literal double sum over future TD residuals.
fn gae_double_sum(r: &[f64], v: &[f64], done: &[bool], last: f64, g: f64, l: f64) -> Vec<f64> {
    let n = r.len();
    (0..n)
        .map(|t| {
            let mut total = 0.0;
            for k in t..n {
                // The episode must not end strictly between t and k.
                if (t..k).any(|j| done[j]) {
                    break;
                }
                let next = if done[k] {
                    0.0
                } else if k + 1 < n {
                    v[k + 1]
                } else {
                    last
                };
                let delta = r[k] + g * next - v[k];
                total += (g * l).powi((k - t) as i32) * delta;
            }
            total
        })
        .collect()
}

fn gae_oracle() -> Result<Outcome> {
    let start = Instant::now();
    let mut r = rng(11);
    let mut worst = 0.0f64;
    for _ in 0..GAE_ROLLOUTS {
        let n = r.random_range(1..=GAE_MAX_LEN);
        let rewards: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
        let values: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
        let done: Vec<bool> = (0..n).map(|_| r.random_bool(0.1)).collect();
        let last = r.random_range(-2.0..2.0);
        let g = r.random_range(0.0..1.0);
        let l = r.random_range(0.0..=1.0);
        let (adv, _) = compute_gae(&rewards, &values, &done, last, g, l)?;
        let oracle = gae_double_sum(&rewards, &values, &done, last, g, l);
        for (a, o) in adv.iter().zip(&oracle) {
            worst = worst.max((a - o).abs());
        }
    }
    let took = start.elapsed();
    Ok(outcome(
        worst < GAE_TOL && took < GAE_TIME,
        format!("{GAE_ROLLOUTS} rollouts, max |dev| {worst:.2e} (tol {GAE_TOL:.0e})"),
    ))
}

// ---------------------------------------------------------------- 2

/// Random minibatch whose probability ratios stay clear of the clip edges,
/// where the loss is not differentiable.
fn random_batch(policy: &GaussianPolicy, value_dim: usize, n: usize, cfg: &PpoConfig, r: &mut ChaCha8Rng) -> Result<PpoBatch> {
    let (s, a) = (policy.input_dim(), policy.action_dim());
    let policy_inputs: Vec<f64> = (0..n * s).map(|_| r.random_range(-1.0..1.0)).collect();
    let actions: Vec<f64> = (0..n * a).map(|_| r.random_range(-1.5..1.5)).collect();
    let mut old_log_probs = Vec::with_capacity(n);
    for i in 0..n {
        let lp = policy.log_prob(&policy_inputs[i * s..(i + 1) * s], &actions[i * a..(i + 1) * a])?;
        let ratio = loop {
            let x: f64 = r.random_range(0.6..1.5);
            if (x - (1.0 - cfg.clip_epsilon)).abs() > 1e-3 && (x - (1.0 + cfg.clip_epsilon)).abs() > 1e-3 {
                break x;
            }
        };
        old_log_probs.push(lp - ratio.ln());
    }
    Ok(PpoBatch {
        policy_inputs,
        value_inputs: (0..n * value_dim).map(|_| r.random_range(-1.0..1.0)).collect(),
        actions,
        old_log_probs,
        advantages: (0..n).map(|_| r.random_range(-2.0..2.0)).collect(),
        returns: (0..n).map(|_| r.random_range(-1.0..1.0)).collect(),
    })
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_MAGNITUDE_FLOOR)
}

/// Evenly spaced parameter indices with a random phase.
fn probes(count: usize, r: &mut ChaCha8Rng) -> impl Iterator<Item = usize> {
    let stride = (count / GRAD_PROBES).max(1);
    (r.random_range(0..stride)..count).step_by(stride)
}

/// Worst relative error over probed policy parameters (every log-std
/// entry included) and probed value parameters of one (policy, critic) pair.
fn gradient_errors(policy: &GaussianPolicy, value: &DenseNet, r: &mut ChaCha8Rng) -> Result<(f64, f64)> {
    let cfg = PpoConfig::default();
    let batch = random_batch(policy, value.input_dim(), 64, &cfg, r)?;
    let loss = ppo_loss(&batch, policy, value, &cfg)?;
    let h = GRAD_STEP;
    let n_net = policy.mean_net.param_count();
    let mut worst_policy = 0.0f64;
    let policy_probes: Vec<usize> = probes(n_net, r).chain(n_net..n_net + policy.action_dim()).collect();
    for k in policy_probes {
        let mut plus = policy.clone();
        let mut minus = policy.clone();
        if k < n_net {
            plus.mean_net.params_mut()[k] += h;
            minus.mean_net.params_mut()[k] -= h;
        } else {
            plus.log_std[k - n_net] += h;
            minus.log_std[k - n_net] -= h;
        }
        let fd = (ppo_loss(&batch, &plus, value, &cfg)?.loss - ppo_loss(&batch, &minus, value, &cfg)?.loss) / (2.0 * h);
        worst_policy = worst_policy.max(relative_error(loss.policy_grad[k], fd));
    }
    let mut worst_value = 0.0f64;
    for k in probes(value.param_count(), r).collect::<Vec<_>>() {
        let mut plus = value.clone();
        let mut minus = value.clone();
        plus.params_mut()[k] += h;
        minus.params_mut()[k] -= h;
        let fd = (ppo_loss(&batch, policy, &plus, &cfg)?.loss - ppo_loss(&batch, policy, &minus, &cfg)?.loss) / (2.0 * h);
        worst_value = worst_value.max(relative_error(loss.value_grad[k], fd));
    }
    Ok((worst_policy, worst_value))
}

/// Scales output layers up so the mean path carries real gradient; fresh
/// heads are nearly (compensation: exactly) zero.
fn excite(policy: &mut GaussianPolicy, r: &mut ChaCha8Rng) {
    let last = policy.mean_net.num_layers() - 1;
    policy
        .mean_net
        .weights_mut(last)
        .iter_mut()
        .for_each(|w| *w = r.random_range(-0.5..0.5));
    policy.log_std.iter_mut().for_each(|l| *l += r.random_range(-0.3..0.3));
}

fn gradient_check() -> Result<Outcome> {
    let start = Instant::now();
    let mut r = rng(12);
    let mut base = BaseModule::new(RobotKind::Point, &mut r)?;
    excite(&mut base.policy, &mut r);
    let (base_policy, base_value) = gradient_errors(&base.policy, &base.value_net, &mut r)?;
    let mut module = AttributeModule::new(AttributeKind::Obstacle, RobotKind::Point, 0.01, &mut r)?;
    excite(&mut module.comp_policy, &mut r);
    let (comp_policy, comp_value) = gradient_errors(&module.comp_policy, &module.value_net, &mut r)?;
    let worst = base_policy.max(base_value).max(comp_policy).max(comp_value);
    Ok(outcome(
        worst < GRAD_REL_TOL && start.elapsed() < GRAD_TIME,
        format!(
            "max rel err base {base_policy:.1e}, compensation {comp_policy:.1e}, value {:.1e} (tol {GRAD_REL_TOL:.0e})",
            base_value.max(comp_value)
        ),
    ))
}

// ---------------------------------------------------------------- 3

fn curriculum_suite() -> Result<Outcome> {
    let start = Instant::now();
    let mut problems = Vec::new();
    let cfg = CurriculumConfig {
        threshold: 0.5,
        ..CurriculumConfig::default()
    };
    let lambda = cfg.lambda;

    // Below threshold: level constant, queue grows up to capacity.
    let mut s = CurriculumState::new(cfg.clone())?;
    for i in 0..25 {
        let u = s.update(0.5)?;
        if u.increased || s.random_level != cfg.initial_level {
            problems.push("level moved below threshold");
        }
        if s.long_term_rewards.len() != (i + 1).min(cfg.queue_capacity) {
            problems.push("queue did not grow");
        }
    }

    // Crossing: exact multiplication and a cleared queue.
    let before = s.random_level;
    let u = s.update(100.0)?;
    if !u.increased || s.random_level != before * lambda || !s.long_term_rewards.is_empty() {
        problems.push("crossing did not multiply by lambda and clear");
    }

    // Geometric recurrence: 0.01 * 1.2^25 < 1 <= 0.01 * 1.2^26.
    let mut s = CurriculumState::new(CurriculumConfig {
        min_entries: 1,
        ..cfg.clone()
    })?;
    let mut levels = vec![s.random_level];
    let mut terminal_at = None;
    for k in 1..=30 {
        let u = s.update(1.0)?;
        if s.random_level != levels[k - 1] * lambda {
            problems.push("increase was not exactly lambda");
        }
        levels.push(s.random_level);
        if u.terminal && terminal_at.is_none() {
            terminal_at = Some(k);
        }
    }
    if levels.windows(2).any(|w| !(w[1] > w[0])) {
        problems.push("level sequence not monotone");
    }
    if terminal_at != Some(26) {
        problems.push("terminal not detected at the 26th increase");
    }
    let expected = 0.01 * 1.2f64.powi(26);
    if (levels[26] - expected).abs() > 1e-12 * expected {
        problems.push("level after 26 increases off the recurrence");
    }

    let took = start.elapsed();
    Ok(outcome(
        problems.is_empty() && took < CURRICULUM_TIME,
        if problems.is_empty() {
            format!("terminal after {} increases, level {:.4}", terminal_at.unwrap_or(0), levels[26])
        } else {
            problems.join("; ")
        },
    ))
}

// ---------------------------------------------------------------- 4

fn point_world(position: [f64; 2], velocity: [f64; 2], target: [f64; 2]) -> WorldState {
    WorldState {
        robot: RobotState::Point(PointRobotState { position, velocity }),
        target,
        time: 0.0,
        step_index: 0,
        obstacles: vec![],
        door: None,
        speed_limit: None,
        disturbance: None,
    }
}

fn reward_table() -> Result<Outcome> {
    let cfg = SimConfig::point();
    let spec = |kind| AttributeSpec { id: 1, kind, entity: 0 };
    let mut rows: Vec<(&str, f64, f64)> = Vec::new();

    let reached = point_world([0.3, 0.3], [0.0, 0.0], [0.3, 0.3]);
    rows.push(("reach: inside target", spec(AttributeKind::Reaching).reward(&reached, &[], &cfg)?, 1.0));
    let away = point_world([-0.5, 0.3], [0.0, 0.0], [0.5, 0.3]);
    rows.push(("reach: away", spec(AttributeKind::Reaching).reward(&away, &[], &cfg)?, 0.0));

    let mut hit = away.clone();
    hit.obstacles.push(ObstacleParams {
        center: [-0.45, 0.3],
        radius: 0.1,
        velocity: [0.0, 0.0],
    });
    rows.push(("obstacle: contact", spec(AttributeKind::Obstacle).reward(&hit, &[], &cfg)?, -0.3));
    let mut clear = away.clone();
    clear.obstacles.push(ObstacleParams {
        center: [0.4, -0.4],
        radius: 0.1,
        velocity: [0.0, 0.0],
    });
    rows.push(("obstacle: clear", spec(AttributeKind::Obstacle).reward(&clear, &[], &cfg)?, 0.0));

    let door = DoorSchedule {
        x: 0.0,
        y_min: -1.0,
        y_max: 1.0,
        open_intervals: vec![[2.0, 4.0]],
    };
    let mut at_door = point_world([-cfg.robot_radius, 0.0], [0.0, 0.0], [0.5, 0.0]);
    at_door.door = Some(door);
    rows.push(("door: closed contact", spec(AttributeKind::Door).reward(&at_door, &[], &cfg)?, -0.01));
    at_door.time = 3.0;
    rows.push(("door: open", spec(AttributeKind::Door).reward(&at_door, &[], &cfg)?, 0.0));

    let profile = SpeedLimitProfile {
        knots: vec![[0.0, 0.5]],
        penalty_coeff: 0.3,
    };
    for (v, label) in [(0.8, "speed: over limit"), (0.3, "speed: under limit")] {
        let mut w = point_world([0.0, 0.0], [v, 0.0], [0.5, 0.0]);
        w.speed_limit = Some(profile.clone());
        rows.push((label, spec(AttributeKind::SpeedLimit).reward(&w, &[], &cfg)?, -0.3 * f64::max(v - 0.5, 0.0)));
    }

    let mut pushed = away.clone();
    pushed.disturbance = Some(DisturbanceForce { force: vec![0.0, -0.5] });
    rows.push(("force", spec(AttributeKind::Force).reward(&pushed, &[0.3, 0.1], &cfg)?, 0.0));

    let wrong: Vec<String> = rows
        .iter()
        .filter(|(_, got, want)| got != want)
        .map(|(label, got, want)| format!("{label}: {got} != {want}"))
        .collect();
    Ok(outcome(
        wrong.is_empty(),
        if wrong.is_empty() {
            format!("{} table rows exact", rows.len())
        } else {
            wrong.join("; ")
        },
    ))
}

// ---------------------------------------------------------------- training criteria

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn train_base(&self, task: &str, out: &str) -> Result<TrainingLog> {
        harness::cmd_train_base(
            &tasks().join(task),
            &self.path(out),
            &RunOptions::seeded(TRAIN_SEED),
            &TrainOverrides::default(),
            None,
        )
    }

    fn train_attr(&self, task: &str, base: &str, out: &str) -> Result<TrainingLog> {
        harness::cmd_train_attr(
            &tasks().join(task),
            &self.path(base),
            &self.path(out),
            &RunOptions::seeded(TRAIN_SEED),
            &TrainOverrides::default(),
            None,
        )
    }

    /// Descriptor with `copies` instances of `module` (none: base only).
    fn descriptor(&self, name: &str, base: &str, module: Option<(&str, AttributeKind)>, copies: usize) -> Result<PathBuf> {
        let d = match module {
            Some((m, kind)) => harness::replicated_descriptor(&self.path(base), &self.path(m), kind, copies),
            None => CascadeDescriptor {
                base_checkpoint: self.path(base),
                modules: vec![],
            },
        };
        let path = self.path(name);
        d.save(&path)?;
        Ok(path)
    }

    fn success(&self, descriptor: &Path, task: &str, level: Option<f64>) -> Result<f64> {
        let report = harness::cmd_eval(descriptor, &tasks().join(task), EVAL_EPISODES, EVAL_SEED, level, None, None)?;
        Ok(report.success_rate)
    }
}

/// First iteration whose level reached `level`, counted from 1.
fn iterations_to_level(log: &TrainingLog, level: f64) -> Option<usize> {
    log.rows.iter().position(|r| r.random_level >= level).map(|i| i + 1)
}

fn max_level(log: &TrainingLog) -> f64 {
    log.rows.iter().map(|r| r.random_level).fold(log.final_level, f64::max)
}

fn fmt_iters(n: Option<usize>) -> String {
    n.map_or_else(|| "never".into(), |n| n.to_string())
}

fn base_training(ws: &Workspace) -> Result<Outcome> {
    let log = ws.train_base("point_base.json", "base.json")?;
    let reached = iterations_to_level(&log, 1.0);
    let d = ws.descriptor("base_only.json", "base.json", None, 0)?;
    let success = ws.success(&d, "point_base.json", Some(1.0))?;
    let point_ok = matches!(reached, Some(n) if n <= POINT_BUDGET) && success >= BASE_MIN_SUCCESS;

    let arm = ws.train_base("arm_base.json", "arm_base.json")?;
    let arm_iters = arm.rows.len();
    let arm_level = max_level(&arm);
    let arm_ok = arm_iters <= ARM_BUDGET && arm_level >= ARM_MIN_LEVEL;
    Ok(outcome(
        point_ok && arm_ok,
        format!(
            "point: level 1.0 after {} iterations, success {success:.2} (need {BASE_MIN_SUCCESS}); \
             arm: level {arm_level:.3} in {arm_iters} iterations (need {ARM_MIN_LEVEL} within {ARM_BUDGET})",
            fmt_iters(reached)
        ),
    ))
}

fn baseline_comparison(ws: &Workspace) -> Result<Outcome> {
    let out = ws.path("compare");
    std::fs::create_dir_all(&out).map_err(|source| can_core::CanError::Io {
        path: out.display().to_string(),
        source,
    })?;
    let summary = harness::cmd_compare(
        &tasks().join("point_obstacle.json"),
        Some(&ws.path("base.json")),
        Some(POINT_BUDGET),
        &RunOptions::seeded(TRAIN_SEED),
        &out,
    )?;
    std::fs::copy(out.join("can_module.json"), ws.path("obstacle.json")).map_err(|source| can_core::CanError::Io {
        path: "obstacle.json".into(),
        source,
    })?;
    let arm = |name| summary.arm(name).expect("arm present");
    let (can, cl, rcl) = (arm(ARM_CAN), arm(ARM_SCRATCH_CL), arm(ARM_SCRATCH_RCL));
    let beats = |other: Option<usize>| match (can.iterations_to_terminal, other) {
        (Some(c), Some(o)) => c < o,
        (Some(_), None) => true,
        (None, _) => false,
    };
    let passed = beats(cl.iterations_to_terminal)
        && beats(rcl.iterations_to_terminal)
        && cl.final_level < SCRATCH_CL_MAX_LEVEL
        && can.error.is_none()
        && cl.error.is_none()
        && rcl.error.is_none();
    Ok(outcome(
        passed,
        format!(
            "iterations to terminal: cascade {}, scratch CL {} (final level {:.3}, need < {SCRATCH_CL_MAX_LEVEL}), \
             scratch RCL {} (final level {:.3}); budget {POINT_BUDGET}",
            fmt_iters(can.iterations_to_terminal),
            fmt_iters(cl.iterations_to_terminal),
            cl.final_level,
            fmt_iters(rcl.iterations_to_terminal),
            rcl.final_level,
        ),
    ))
}

fn attribute_training(ws: &Workspace) -> Result<Outcome> {
    let mut parts = Vec::new();
    let mut passed = true;
    for (kind, task, module) in [
        (AttributeKind::Obstacle, "point_obstacle.json", "obstacle.json"),
        (AttributeKind::Door, "point_door.json", "door.json"),
        (AttributeKind::SpeedLimit, "point_speed.json", "speed.json"),
        (AttributeKind::Force, "point_force.json", "force.json"),
    ] {
        // The obstacle module comes from the comparison's cascade arm.
        if !ws.path(module).exists() {
            ws.train_attr(task, "base.json", module)?;
        }
        let d = ws.descriptor(&format!("with_{module}"), "base.json", Some((module, kind)), 1)?;
        let success = ws.success(&d, task, None)?;
        passed &= success >= ATTRIBUTE_MIN_SUCCESS;
        parts.push(format!("{} {success:.2}", kind.name()));
    }
    Ok(outcome(
        passed,
        format!("success at terminal level: {} (need {ATTRIBUTE_MIN_SUCCESS})", parts.join(", ")),
    ))
}

fn zero_shot(ws: &Workspace) -> Result<Outcome> {
    let task = "point_two_obstacles.json";
    let both = ws.descriptor("two.json", "base.json", Some(("obstacle.json", AttributeKind::Obstacle)), 2)?;
    let base_only = ws.descriptor("base_only.json", "base.json", None, 0)?;
    let composed = ws.success(&both, task, None)?;
    let alone = ws.success(&base_only, task, None)?;
    Ok(outcome(
        composed >= ZERO_SHOT_MIN_SUCCESS && composed > alone,
        format!("two modules {composed:.2} (need {ZERO_SHOT_MIN_SUCCESS}), base only {alone:.2}"),
    ))
}

fn inactive_compensation(ws: &Workspace) -> Result<Outcome> {
    let mut ratios = Vec::new();
    for (task, copies) in [("point_obstacle.json", 1), ("point_two_obstacles.json", 2)] {
        let d = ws.descriptor(
            &format!("activity_{copies}.json"),
            "base.json",
            Some(("obstacle.json", AttributeKind::Obstacle)),
            copies,
        )?;
        let cascade = CascadeDescriptor::load(&d)?.build()?;
        let file = TaskFile::load(&tasks().join(task))?;
        let t = can_core::attributes::Task::from_file(&file)?;
        let level = harness::evaluation_level(&file);
        for a in harness::compensation_activity(&cascade, &t, level, EVAL_EPISODES, EVAL_SEED)? {
            ratios.push(a.inactive_compensation / a.inactive_upstream);
        }
    }
    let worst = ratios.iter().copied().fold(0.0, f64::max);
    Ok(outcome(
        worst < INACTIVE_RATIO && ratios.iter().all(|r| r.is_finite()),
        format!(
            "mean |a_c| / mean |a_prev| far from obstacles: {} (need < {INACTIVE_RATIO})",
            ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(", ")
        ),
    ))
}

// ---------------------------------------------------------------- 10

/// Every output of a short base run, attribute run, assembly, evaluation
/// and comparison, read back as bytes.
fn pipeline_outputs(dir: &Path) -> Result<Vec<(String, Vec<u8>)>> {
    let short = TrainOverrides {
        budget: Some(3),
        max_episodes: None,
    };
    let opts = RunOptions::seeded(3);
    harness::cmd_train_base(&tasks().join("point_base.json"), &dir.join("base.json"), &opts, &short, None)?;
    harness::cmd_train_attr(
        &tasks().join("point_obstacle.json"),
        &dir.join("base.json"),
        &dir.join("obstacle.json"),
        &opts,
        &short,
        None,
    )?;
    harness::replicated_descriptor(&dir.join("base.json"), &dir.join("obstacle.json"), AttributeKind::Obstacle, 1)
        .save(&dir.join("desc.json"))?;
    harness::cmd_assemble(&dir.join("desc.json"), &dir.join("cascade.json"))?;
    harness::cmd_eval(
        &dir.join("cascade.json"),
        &tasks().join("point_obstacle.json"),
        5,
        4,
        None,
        Some(&dir.join("report.json")),
        Some(&dir.join("trajectory.jsonl")),
    )?;
    let compare = dir.join("compare");
    std::fs::create_dir_all(&compare).map_err(|source| can_core::CanError::Io {
        path: compare.display().to_string(),
        source,
    })?;
    harness::cmd_compare(&tasks().join("point_obstacle.json"), Some(&dir.join("base.json")), Some(2), &opts, &compare)?;
    let mut files = Vec::new();
    for name in [
        "base.json",
        "base.csv",
        "obstacle.json",
        "obstacle.csv",
        "report.json",
        "trajectory.jsonl",
        "compare/compare.csv",
        "compare/summary.json",
        "compare/can_module.json",
    ] {
        let bytes = std::fs::read(dir.join(name)).map_err(|source| can_core::CanError::Io {
            path: name.into(),
            source,
        })?;
        files.push((name.to_string(), bytes));
    }
    Ok(files)
}

fn determinism() -> Result<Outcome> {
    let a = tempfile::tempdir().expect("tempdir");
    let b = tempfile::tempdir().expect("tempdir");
    let first = pipeline_outputs(a.path())?;
    let second = pipeline_outputs(b.path())?;
    let differing: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| x.0.as_str())
        .collect();
    Ok(outcome(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} files byte-identical across two runs", first.len())
        } else {
            format!("differing: {}", differing.join(", "))
        },
    ))
}

#[test]
fn acceptance_criteria() {
    let mut report = Report::default();
    report.check(1, "GAE oracle equivalence", gae_oracle);
    report.check(2, "PPO gradient correctness", gradient_check);
    report.check(3, "curriculum unit suite", curriculum_suite);
    report.check(4, "reward conformance", reward_table);

    let ws = Workspace {
        dir: tempfile::tempdir().expect("tempdir"),
    };
    report.check(5, "desk-scale base training", || base_training(&ws));
    // The comparison's cascade arm is the obstacle module used by 6, 7 and 9.
    report.check(8, "baseline comparison direction", || baseline_comparison(&ws));
    report.check(6, "attribute training", || attribute_training(&ws));
    report.check(7, "zero-shot two-obstacle composition", || zero_shot(&ws));
    report.check(9, "inactive compensation", || inactive_compensation(&ws));
    report.check(10, "determinism", determinism);

    assert!(report.failures.is_empty(), "failed criteria: {:?}", report.failures);
}
