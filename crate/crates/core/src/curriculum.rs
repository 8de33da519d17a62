//! Curriculum on the initial-state random level.
//!
//! After every training iteration the batch mean episodic reward joins a
//! bounded queue. Once the queue average exceeds the threshold the level is
//! multiplied by the growth factor and the queue starts over.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::dynamics::StartAnchor;
use crate::error::{CanError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurriculumMode {
    /// Start around the nominal configuration and widen.
    Cl,
    /// Start on the target and widen.
    Rcl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumConfig {
    pub mode: CurriculumMode,
    pub initial_level: f64,
    pub lambda: f64,
    pub threshold: f64,
    pub queue_capacity: usize,
    /// Entries needed before the queue average is trusted.
    pub min_entries: usize,
    pub terminal_level: f64,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            mode: CurriculumMode::Cl,
            initial_level: 0.01,
            lambda: 1.2,
            threshold: 0.8,
            queue_capacity: 10,
            min_entries: 3,
            terminal_level: 1.0,
        }
    }
}

impl CurriculumConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CanError::Config(format!("curriculum: {m}")));
        if !(self.initial_level > 0.0) {
            return bad("initial level must be positive");
        }
        if !(self.lambda > 1.0) || !self.lambda.is_finite() {
            return bad("growth factor must exceed 1");
        }
        if !self.threshold.is_finite() {
            return bad("threshold must be finite");
        }
        if self.queue_capacity == 0 || self.min_entries == 0 || self.min_entries > self.queue_capacity {
            return bad("need 0 < min_entries <= queue_capacity");
        }
        if !(self.terminal_level > 0.0 && self.terminal_level.is_finite()) {
            return bad("terminal level must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumState {
    pub config: CurriculumConfig,
    pub random_level: f64,
    pub long_term_rewards: VecDeque<f64>,
}

/// Result of feeding one batch reward to the curriculum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelUpdate {
    pub increased: bool,
    pub terminal: bool,
}

impl CurriculumState {
    pub fn new(config: CurriculumConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            random_level: config.initial_level,
            long_term_rewards: VecDeque::with_capacity(config.queue_capacity),
            config,
        })
    }

    pub fn is_terminal(&self) -> bool {
        self.random_level >= self.config.terminal_level
    }

    pub fn queue_average(&self) -> Option<f64> {
        let q = &self.long_term_rewards;
        (q.len() >= self.config.min_entries).then(|| q.iter().sum::<f64>() / q.len() as f64)
    }

    pub fn update(&mut self, batch_mean_reward: f64) -> Result<LevelUpdate> {
        if !batch_mean_reward.is_finite() {
            return Err(CanError::Divergence(format!(
                "non-finite batch reward {batch_mean_reward}"
            )));
        }
        if self.long_term_rewards.len() == self.config.queue_capacity {
            self.long_term_rewards.pop_front();
        }
        self.long_term_rewards.push_back(batch_mean_reward);
        let increased = matches!(self.queue_average(), Some(avg) if avg > self.config.threshold);
        if increased {
            self.random_level *= self.config.lambda;
            self.long_term_rewards.clear();
        }
        Ok(LevelUpdate {
            increased,
            terminal: self.is_terminal(),
        })
    }

    /// Level and anchor handed to the environment reset.
    pub fn effective_reset_level(&self) -> (f64, StartAnchor) {
        effective_reset_level(self, self.config.mode)
    }
}

pub fn curriculum_update(state: &CurriculumState, batch_mean_reward: f64) -> Result<(CurriculumState, bool, bool)> {
    let mut next = state.clone();
    let u = next.update(batch_mean_reward)?;
    Ok((next, u.increased, u.terminal))
}

pub fn effective_reset_level(state: &CurriculumState, mode: CurriculumMode) -> (f64, StartAnchor) {
    let level = state.random_level.clamp(0.0, 1.0);
    match mode {
        CurriculumMode::Cl => (level, StartAnchor::Nominal),
        CurriculumMode::Rcl => (level, StartAnchor::Target),
    }
}
