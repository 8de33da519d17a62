//! Experiment orchestration behind the command-line tool: training,
//! assembly, evaluation and the from-scratch baseline comparison.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attributes::{AttributeKind, EpisodeStats, Event, Task, TaskFile};
use crate::curriculum::{CurriculumConfig, CurriculumMode};
use crate::dynamics::{reset, RobotState, StartAnchor, WorldState};
use crate::error::{CanError, Result};
use crate::io::{read_json, write_json, write_text};
use crate::policy::{
    cascade_act, BaseCheckpoint, CascadeDescriptor, CascadePolicy, ModuleCheckpoint, ModuleEntry,
};
use crate::train::{train_attribute, train_base, train_from_scratch, RunOptions, TrainingLog};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationCounts {
    pub obstacle_contacts: usize,
    pub door_contacts: usize,
    pub speed_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: usize,
    pub seed: u64,
    pub random_level: f64,
    pub success_rate: f64,
    pub reach_rate: f64,
    pub mean_episode_length: f64,
    /// Event totals over all episodes.
    pub violations: ViolationCounts,
    /// Episodes with at least one event of the kind.
    pub violating_episodes: ViolationCounts,
}

/// One line of the optional trajectory export.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryStep {
    pub episode: usize,
    pub step: usize,
    pub time: f64,
    pub robot: RobotState,
    pub target: [f64; 2],
    pub action: Vec<f64>,
    pub events: Vec<Event>,
}

/// Runs `episodes` episodes at `level` with a deterministic controller.
pub fn evaluate<F>(
    task: &Task,
    level: f64,
    episodes: usize,
    seed: u64,
    mut controller: F,
    mut trajectory: Option<&mut Vec<TrajectoryStep>>,
) -> Result<EvalReport>
where
    F: FnMut(&WorldState) -> Result<Vec<f64>>,
{
    if episodes == 0 {
        return Err(CanError::Config("evaluation needs at least one episode".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut successes = 0;
    let mut reached = 0;
    let mut steps = 0;
    let mut totals = ViolationCounts::default();
    let mut episodes_with = ViolationCounts::default();
    for episode in 0..episodes {
        let mut world = reset(task, level, StartAnchor::Nominal, &mut rng)?;
        let mut stats = EpisodeStats::default();
        loop {
            let action = controller(&world)?;
            let out = task.step(&world, &action)?;
            stats.record(&out);
            if let Some(t) = trajectory.as_deref_mut() {
                t.push(TrajectoryStep {
                    episode,
                    step: out.world.step_index,
                    time: out.world.time,
                    robot: out.world.robot,
                    target: out.world.target,
                    action,
                    events: out.events.clone(),
                });
            }
            if out.done {
                break;
            }
            world = out.world;
        }
        successes += stats.success() as usize;
        reached += stats.reached as usize;
        steps += stats.steps;
        totals.obstacle_contacts += stats.obstacle_contacts;
        totals.door_contacts += stats.door_contacts;
        totals.speed_violations += stats.speed_violations;
        episodes_with.obstacle_contacts += (stats.obstacle_contacts > 0) as usize;
        episodes_with.door_contacts += (stats.door_contacts > 0) as usize;
        episodes_with.speed_violations += (stats.speed_violations > 0) as usize;
    }
    let n = episodes as f64;
    Ok(EvalReport {
        episodes,
        seed,
        random_level: level,
        success_rate: successes as f64 / n,
        reach_rate: reached as f64 / n,
        mean_episode_length: steps as f64 / n,
        violations: totals,
        violating_episodes: episodes_with,
    })
}

/// Evaluates a cascade with mean actions.
pub fn evaluate_cascade(
    cascade: &CascadePolicy,
    task: &Task,
    level: f64,
    episodes: usize,
    seed: u64,
    trajectory: Option<&mut Vec<TrajectoryStep>>,
) -> Result<EvalReport> {
    if cascade.base.robot != task.robot {
        return Err(CanError::Config("cascade and task use different robots".into()));
    }
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    evaluate(
        task,
        level,
        episodes,
        seed,
        |w| Ok(cascade_act(cascade, w, &task.sim, &mut unused, false)?.0),
        trajectory,
    )
}

/// Compensation magnitudes of one module, split by its activity predicate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct CompensationActivity {
    pub inactive_states: usize,
    pub active_states: usize,
    /// Mean `||a_c||` over inactive states.
    pub inactive_compensation: f64,
    /// Mean `||a_prev||` over inactive states.
    pub inactive_upstream: f64,
    pub active_compensation: f64,
}

/// Walks deterministic episodes and measures, per module, how large its
/// compensation is when its attribute is inactive.
pub fn compensation_activity(
    cascade: &CascadePolicy,
    task: &Task,
    level: f64,
    episodes: usize,
    seed: u64,
) -> Result<Vec<CompensationActivity>> {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut acc = vec![CompensationActivity::default(); cascade.modules.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..episodes {
        let mut world = reset(task, level, StartAnchor::Nominal, &mut rng)?;
        loop {
            let (action, record) = cascade_act(cascade, &world, &task.sim, &mut unused, false)?;
            for ((bound, rec), a) in cascade.modules.iter().zip(&record.modules).zip(acc.iter_mut()) {
                if bound.binding.is_active(&world, &task.sim)? {
                    a.active_states += 1;
                    a.active_compensation += norm(&rec.compensation);
                } else {
                    a.inactive_states += 1;
                    a.inactive_compensation += norm(&rec.compensation);
                    a.inactive_upstream += norm(&rec.upstream);
                }
            }
            let out = task.step(&world, &action)?;
            if out.done {
                break;
            }
            world = out.world;
        }
    }
    for a in &mut acc {
        if a.inactive_states > 0 {
            a.inactive_compensation /= a.inactive_states as f64;
            a.inactive_upstream /= a.inactive_states as f64;
        }
        if a.active_states > 0 {
            a.active_compensation /= a.active_states as f64;
        }
    }
    Ok(acc)
}

/// Overrides applied on top of the task file's training section.
#[derive(Debug, Clone, Default)]
pub struct TrainOverrides {
    pub budget: Option<usize>,
    pub max_episodes: Option<usize>,
}

fn load_task(path: &Path) -> Result<(TaskFile, Task)> {
    let file = TaskFile::load(path)?;
    let task = Task::from_file(&file)?;
    Ok((file, task))
}

fn apply(file: &mut TaskFile, ov: &TrainOverrides) {
    if let Some(b) = ov.budget {
        file.training.max_iterations = b;
    }
    if let Some(e) = ov.max_episodes {
        file.training.ppo.max_episodes = e;
    }
}

/// Training log location: `log_dir/<checkpoint stem>.csv`, next to the
/// checkpoint when no directory is given.
pub fn log_path(out: &Path, log_dir: Option<&Path>) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_os_string()).unwrap_or_else(|| "train".into());
    let dir = log_dir
        .map(Path::to_path_buf)
        .or_else(|| out.parent().map(Path::to_path_buf))
        .unwrap_or_default();
    dir.join(stem).with_extension("csv")
}

pub fn cmd_train_base(
    task_path: &Path,
    out: &Path,
    opts: &RunOptions,
    overrides: &TrainOverrides,
    log_dir: Option<&Path>,
) -> Result<TrainingLog> {
    let (mut file, task) = load_task(task_path)?;
    apply(&mut file, overrides);
    let (base, log) = train_base(&task, &file.training, &file.curriculum, opts)?;
    write_json(out, &BaseCheckpoint::from_module(&base))?;
    write_text(&log_path(out, log_dir), &log.to_csv())?;
    Ok(log)
}

pub fn cmd_train_attr(
    task_path: &Path,
    base_path: &Path,
    out: &Path,
    opts: &RunOptions,
    overrides: &TrainOverrides,
    log_dir: Option<&Path>,
) -> Result<TrainingLog> {
    let (mut file, task) = load_task(task_path)?;
    apply(&mut file, overrides);
    let base: BaseCheckpoint = read_json(base_path)?;
    let base = base.to_module()?;
    let (module, log) = train_attribute(&base, &task, &file.training, &file.curriculum, opts)?;
    write_json(out, &ModuleCheckpoint::from_module(&module))?;
    write_text(&log_path(out, log_dir), &log.to_csv())?;
    Ok(log)
}

/// Validates a descriptor and writes it back with resolved paths. Nothing
/// is trained and no checkpoint is touched.
pub fn cmd_assemble(descriptor: &Path, out: &Path) -> Result<CascadePolicy> {
    let d = CascadeDescriptor::load(descriptor)?;
    let cascade = d.build()?;
    let absolute = |p: &Path| {
        std::fs::canonicalize(p).map_err(|source| CanError::Io {
            path: p.display().to_string(),
            source,
        })
    };
    let resolved = CascadeDescriptor {
        base_checkpoint: absolute(&d.base_checkpoint)?,
        modules: d
            .modules
            .iter()
            .map(|m| {
                Ok(ModuleEntry {
                    attribute: m.attribute,
                    checkpoint: absolute(&m.checkpoint)?,
                    entity_binding: m.entity_binding,
                })
            })
            .collect::<Result<_>>()?,
    };
    resolved.save(out)?;
    Ok(cascade)
}

/// Evaluation level of a task: its curriculum's terminal level, at most 1.
pub fn evaluation_level(file: &TaskFile) -> f64 {
    file.curriculum.terminal_level.min(1.0)
}

pub fn cmd_eval(
    descriptor: &Path,
    task_path: &Path,
    episodes: usize,
    seed: u64,
    level: Option<f64>,
    report_out: Option<&Path>,
    trajectory_out: Option<&Path>,
) -> Result<EvalReport> {
    let cascade = CascadeDescriptor::load(descriptor)?.build()?;
    let (file, task) = load_task(task_path)?;
    let level = level.unwrap_or_else(|| evaluation_level(&file));
    let mut steps = Vec::new();
    let report = evaluate_cascade(
        &cascade,
        &task,
        level,
        episodes,
        seed,
        trajectory_out.map(|_| &mut steps),
    )?;
    if let Some(path) = report_out {
        write_json(path, &report)?;
    }
    if let Some(path) = trajectory_out {
        let mut text = String::new();
        for s in &steps {
            text.push_str(&serde_json::to_string(s)?);
            text.push('\n');
        }
        write_text(path, &text)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: String,
    /// `None` when the terminal level was not reached within the budget.
    pub iterations_to_terminal: Option<usize>,
    pub iterations_run: usize,
    pub final_level: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub budget: usize,
    pub seed: u64,
    pub arms: Vec<ArmSummary>,
}

impl CompareSummary {
    pub fn arm(&self, name: &str) -> Option<&ArmSummary> {
        self.arms.iter().find(|a| a.arm == name)
    }
}

pub const ARM_CAN: &str = "can";
pub const ARM_SCRATCH_CL: &str = "scratch_cl";
pub const ARM_SCRATCH_RCL: &str = "scratch_rcl";

/// Runs the cascade arm (one attribute module behind `base`, training the
/// base first when none is given) against PPO from scratch with forward and
/// reverse curricula, all with the same iteration budget and seed.
/// Writes `compare.csv`, `summary.json` and, when it trains, the cascade
/// arm's module checkpoint `can_module.json` into `out_dir`.
pub fn cmd_compare(
    task_path: &Path,
    base_path: Option<&Path>,
    budget: Option<usize>,
    opts: &RunOptions,
    out_dir: &Path,
) -> Result<CompareSummary> {
    let (file, task) = load_task(task_path)?;
    if task.addons.len() != 1 {
        return Err(CanError::Config("comparison needs a task with exactly one add-on".into()));
    }
    let mut cfg = file.training.clone();
    let budget = budget.unwrap_or(cfg.max_iterations);
    let base = match base_path {
        Some(p) => read_json::<BaseCheckpoint>(p)?.to_module()?,
        None => {
            let mut base_file = file.clone();
            base_file.addons.clear();
            let base_task = Task::from_file(&base_file)?;
            let (mut base, log) = train_base(&base_task, &cfg, &file.curriculum, opts)?;
            write_text(&out_dir.join("base.csv"), &log.to_csv())?;
            write_json(&out_dir.join("base.json"), &BaseCheckpoint::from_module(&base))?;
            base.frozen = true;
            base
        }
    };
    cfg.max_iterations = budget;
    cfg.ppo.max_episodes = usize::MAX;
    cfg.checkpoint_every = 0;
    let arm_opts = RunOptions {
        checkpoint_dir: None,
        ..opts.clone()
    };
    let mut csv = String::from("arm,iter,random_level,mean_ep_reward\n");
    let mut arms = Vec::new();
    let mut record = |name: &str, result: Result<TrainingLog>| {
        let summary = match result {
            Ok(log) => {
                for r in &log.rows {
                    let reward = r.mean_ep_reward.map(|v| v.to_string()).unwrap_or_default();
                    let _ = writeln!(csv, "{name},{},{},{reward}", r.iter, r.random_level);
                }
                ArmSummary {
                    arm: name.into(),
                    iterations_to_terminal: log.iterations_to_terminal,
                    iterations_run: log.rows.len(),
                    final_level: log.final_level,
                    error: None,
                }
            }
            Err(e) => ArmSummary {
                arm: name.into(),
                iterations_to_terminal: None,
                iterations_run: 0,
                final_level: 0.0,
                error: Some(e.to_string()),
            },
        };
        arms.push(summary);
    };

    let can = train_attribute(&base, &task, &cfg, &file.curriculum, &arm_opts).and_then(|(module, log)| {
        write_json(&out_dir.join("can_module.json"), &ModuleCheckpoint::from_module(&module))?;
        Ok(log)
    });
    record(ARM_CAN, can);
    for (name, mode) in [(ARM_SCRATCH_CL, CurriculumMode::Cl), (ARM_SCRATCH_RCL, CurriculumMode::Rcl)] {
        let curriculum = CurriculumConfig {
            mode,
            ..file.curriculum.clone()
        };
        let result = train_from_scratch(&task, &cfg, &curriculum, &arm_opts).map(|(_, _, log)| log);
        record(name, result);
    }
    let summary = CompareSummary {
        budget,
        seed: opts.seed,
        arms,
    };
    write_text(&out_dir.join("compare.csv"), &csv)?;
    write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Descriptor binding `copies` instances of one module to consecutive
/// entities of its attribute.
pub fn replicated_descriptor(base: &Path, module: &Path, attribute: AttributeKind, copies: usize) -> CascadeDescriptor {
    CascadeDescriptor {
        base_checkpoint: base.to_path_buf(),
        modules: (0..copies)
            .map(|i| ModuleEntry {
                attribute,
                checkpoint: module.to_path_buf(),
                entity_binding: i,
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attributes::{AddonConfig, ObstacleConfig};
    use crate::dynamics::RobotKind;
    use crate::policy::{AttributeModule, BaseModule};

    fn scripted(task: &Task) -> impl FnMut(&WorldState) -> Result<Vec<f64>> + '_ {
        move |w: &WorldState| {
            let e = w.robot.effector(&task.sim);
            let RobotState::Point(s) = w.robot else { unreachable!() };
            Ok((0..2).map(|d| 4.0 * (w.target[d] - e[d]) - 2.0 * s.velocity[d]).collect())
        }
    }

    #[test]
    fn scripted_controller_always_succeeds_on_base_task() {
        let task = Task::from_file(&TaskFile::new(RobotKind::Point, vec![])).unwrap();
        let mut traj = Vec::new();
        let report = evaluate(&task, 1.0, 20, 3, scripted(&task), Some(&mut traj)).unwrap();
        assert_eq!(report.success_rate, 1.0);
        assert_eq!(report.violations, ViolationCounts::default());
        assert!(report.mean_episode_length > 0.0);
        assert_eq!(traj.len() as f64, report.mean_episode_length * 20.0);
    }

    #[test]
    fn scripted_controller_runs_into_obstacle() {
        let task = Task::from_file(&TaskFile::new(
            RobotKind::Point,
            vec![AddonConfig::Obstacle(ObstacleConfig {
                velocity: Some([0.0, 0.0]),
                ..Default::default()
            })],
        ))
        .unwrap();
        let report = evaluate(&task, 0.0, 3, 0, scripted(&task), None).unwrap();
        assert!((0.0..=1.0).contains(&report.success_rate));
        assert_eq!(report.success_rate, 0.0);
        assert!(report.violations.obstacle_contacts > 0);
    }

    #[test]
    fn assemble_and_eval_from_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut base = BaseModule::new(RobotKind::Point, &mut rng).unwrap();
        base.frozen = true;
        let module = AttributeModule::new(AttributeKind::Obstacle, RobotKind::Point, 0.01, &mut rng).unwrap();
        let arm_module = AttributeModule::new(AttributeKind::Obstacle, RobotKind::Arm, 0.01, &mut rng).unwrap();
        write_json(&dir.path().join("base.json"), &BaseCheckpoint::from_module(&base)).unwrap();
        write_json(&dir.path().join("obs.json"), &ModuleCheckpoint::from_module(&module)).unwrap();
        write_json(&dir.path().join("arm.json"), &ModuleCheckpoint::from_module(&arm_module)).unwrap();
        let before = std::fs::read(dir.path().join("obs.json")).unwrap();

        let d = replicated_descriptor(Path::new("base.json"), Path::new("obs.json"), AttributeKind::Obstacle, 2);
        d.save(&dir.path().join("two.json")).unwrap();
        let cascade = cmd_assemble(&dir.path().join("two.json"), &dir.path().join("two_out.json")).unwrap();
        assert_eq!(cascade.modules.len(), 2);
        assert_eq!(before, std::fs::read(dir.path().join("obs.json")).unwrap());

        let bad = replicated_descriptor(Path::new("base.json"), Path::new("arm.json"), AttributeKind::Obstacle, 1);
        bad.save(&dir.path().join("bad.json")).unwrap();
        assert!(cmd_assemble(&dir.path().join("bad.json"), &dir.path().join("bad_out.json")).is_err());

        let task_file = TaskFile::new(
            RobotKind::Point,
            vec![AddonConfig::Obstacle(ObstacleConfig::default()), AddonConfig::Obstacle(ObstacleConfig::default())],
        );
        write_json(&dir.path().join("task.json"), &task_file).unwrap();
        let report_path = dir.path().join("report.json");
        let traj_path = dir.path().join("traj.jsonl");
        let run = || {
            cmd_eval(
                &dir.path().join("two_out.json"),
                &dir.path().join("task.json"),
                4,
                1,
                None,
                Some(&report_path),
                Some(&traj_path),
            )
            .unwrap()
        };
        let report = run();
        let first = std::fs::read(&report_path).unwrap();
        let first_traj = std::fs::read(&traj_path).unwrap();
        assert_eq!(report, run());
        assert_eq!(first, std::fs::read(&report_path).unwrap());
        assert_eq!(first_traj, std::fs::read(&traj_path).unwrap());
    }

    #[test]
    fn log_path_defaults_next_to_checkpoint() {
        assert_eq!(log_path(Path::new("a/b/base.json"), None), PathBuf::from("a/b/base.csv"));
        assert_eq!(log_path(Path::new("base.json"), Some(Path::new("logs"))), PathBuf::from("logs/base.csv"));
    }
}
