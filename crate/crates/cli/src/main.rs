use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use can_core::harness::{self, TrainOverrides};
use can_core::train::{RunOptions, TrainingLog};
use clap::{Args, Parser, Subcommand};

/// Exit status for usage errors, matching clap's own.
const USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "can", version, about = "Train, assemble and evaluate cascaded attribute policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Run {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Rollout worker threads; 1 is the reference mode. Results do not depend on it.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Iteration budget, overriding the task file.
    #[arg(long)]
    budget: Option<usize>,
    /// Episode budget, overriding the task file.
    #[arg(long)]
    max_episodes: Option<usize>,
    /// Directory for training logs. Falls back to CAN_LOG_DIR, then the checkpoint's directory.
    #[arg(long, env = "CAN_LOG_DIR")]
    log_dir: Option<PathBuf>,
    /// Write intermediate checkpoints here.
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
}

impl Run {
    fn options(&self) -> RunOptions {
        RunOptions {
            seed: self.seed,
            threads: self.threads.max(1),
            checkpoint_dir: self.checkpoint_dir.clone(),
        }
    }

    fn overrides(&self) -> TrainOverrides {
        TrainOverrides {
            budget: self.budget,
            max_episodes: self.max_episodes,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train the target-reaching base module of a task.
    TrainBase {
        #[arg(long)]
        task: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: Run,
    },
    /// Train one add-on module behind a frozen base.
    TrainAttr {
        #[arg(long)]
        task: PathBuf,
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: Run,
    },
    /// Validate a cascade descriptor and write it with resolved paths.
    Assemble {
        #[arg(long)]
        descriptor: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run deterministic evaluation episodes of a cascade.
    Eval {
        #[arg(long)]
        cascade: PathBuf,
        #[arg(long)]
        task: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random level of the initial states; defaults to the task's terminal level.
        #[arg(long)]
        level: Option<f64>,
        /// JSON report path; the report is always printed.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-step JSONL trajectory path.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Compare the cascade against PPO from scratch with both curricula.
    Compare {
        #[arg(long)]
        task: PathBuf,
        /// Pretrained base; trained first when omitted.
        #[arg(long)]
        base: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[arg(long)]
        budget: Option<usize>,
    },
}

fn require(path: &Path, what: &str) -> std::result::Result<(), String> {
    if path.is_file() {
        Ok(())
    } else {
        Err(format!("{what} not found: {}", path.display()))
    }
}

fn inputs(command: &Command) -> Vec<(&Path, &'static str)> {
    match command {
        Command::TrainBase { task, .. } => vec![(task, "task file")],
        Command::TrainAttr { task, base, .. } => vec![(task, "task file"), (base, "base checkpoint")],
        Command::Assemble { descriptor, .. } => vec![(descriptor, "descriptor")],
        Command::Eval { cascade, task, .. } => vec![(cascade, "cascade descriptor"), (task, "task file")],
        Command::Compare { task, base, .. } => {
            let mut v = vec![(task.as_path(), "task file")];
            if let Some(b) = base {
                v.push((b, "base checkpoint"));
            }
            v
        }
    }
}

fn summarize(log: &TrainingLog) {
    let level = log.final_level;
    match log.iterations_to_terminal {
        Some(n) => println!("terminal level reached after {n} iterations (level {level})"),
        None => println!("stopped after {} iterations at level {level} ({:?})", log.rows.len(), log.stop),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainBase { task, out, run } => {
            let log = harness::cmd_train_base(&task, &out, &run.options(), &run.overrides(), run.log_dir.as_deref())
                .context("base training failed")?;
            summarize(&log);
        }
        Command::TrainAttr { task, base, out, run } => {
            let log = harness::cmd_train_attr(
                &task,
                &base,
                &out,
                &run.options(),
                &run.overrides(),
                run.log_dir.as_deref(),
            )
            .context("attribute training failed")?;
            summarize(&log);
        }
        Command::Assemble { descriptor, out } => {
            let cascade = harness::cmd_assemble(&descriptor, &out).context("assembly failed")?;
            println!("cascade with {} module(s) written to {}", cascade.modules.len(), out.display());
        }
        Command::Eval {
            cascade,
            task,
            episodes,
            seed,
            level,
            out,
            trajectory,
        } => {
            let report = harness::cmd_eval(
                &cascade,
                &task,
                episodes,
                seed,
                level,
                out.as_deref(),
                trajectory.as_deref(),
            )
            .context("evaluation failed")?;
            println!("{}", can_core::io::to_pretty_json(&report)?);
        }
        Command::Compare {
            task,
            base,
            out,
            seed,
            threads,
            budget,
        } => {
            let opts = RunOptions {
                seed,
                threads: threads.max(1),
                checkpoint_dir: None,
            };
            let summary =
                harness::cmd_compare(&task, base.as_deref(), budget, &opts, &out).context("comparison failed")?;
            for arm in &summary.arms {
                let reached = arm
                    .iterations_to_terminal
                    .map_or_else(|| "inf".to_string(), |n| n.to_string());
                match &arm.error {
                    Some(e) => println!("{}: error: {e}", arm.arm),
                    None => println!("{}: iterations to terminal {reached}, final level {}", arm.arm, arm.final_level),
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    for (path, what) in inputs(&cli.command) {
        if let Err(msg) = require(path, what) {
            eprintln!("error: {msg}");
            return ExitCode::from(USAGE);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
