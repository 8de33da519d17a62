//! Diagonal Gaussian policy head with a state-independent learned `log_std`.

use rand::Rng;
use rand_distr::StandardNormal;

use super::dense::DenseNet;
use crate::error::{check_dim, Result};

pub const MIN_STD: f64 = 1e-3;
pub const MAX_STD: f64 = 10.0;
/// Initial standard deviation of every action dimension.
pub const INITIAL_STD: f64 = 0.5;
/// Gain of the mean network's output layer; keeps initial means near zero.
pub const POLICY_OUTPUT_GAIN: f64 = 0.01;

const HALF_LOG_TWO_PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub mean_net: DenseNet,
    pub log_std: Vec<f64>,
}

impl GaussianPolicy {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, action_dim: usize, rng: &mut R) -> Result<Self> {
        let mean_net = DenseNet::three_layer(input_dim, action_dim, POLICY_OUTPUT_GAIN, rng)?;
        Ok(Self {
            mean_net,
            log_std: vec![INITIAL_STD.ln(); action_dim],
        })
    }

    pub fn from_parts(mean_net: DenseNet, log_std: Vec<f64>) -> Result<Self> {
        check_dim("log_std length", mean_net.output_dim(), log_std.len())?;
        Ok(Self { mean_net, log_std })
    }

    pub fn input_dim(&self) -> usize {
        self.mean_net.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.mean_net.output_dim()
    }

    /// Standard deviations after clamping to `[MIN_STD, MAX_STD]`.
    pub fn std(&self) -> Vec<f64> {
        self.log_std.iter().map(|l| clamped_std(*l)).collect()
    }

    /// `d sigma / d log_std` divided by sigma: 1 inside the clamp range, 0 outside.
    pub(crate) fn log_std_active(&self) -> Vec<f64> {
        self.log_std
            .iter()
            .map(|&l| {
                let s = l.exp();
                if (MIN_STD..=MAX_STD).contains(&s) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn mean(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.mean_net.forward(state)
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> Result<(Vec<f64>, f64)> {
        let mean = self.mean(state)?;
        let action: Vec<f64> = mean
            .iter()
            .zip(self.std())
            .map(|(m, s)| {
                let eps: f64 = rng.sample(StandardNormal);
                m + s * eps
            })
            .collect();
        let log_prob = self.log_prob(state, &action)?;
        Ok((action, log_prob))
    }

    pub fn log_prob(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        check_dim("action", self.action_dim(), action.len())?;
        let mean = self.mean(state)?;
        Ok(gaussian_log_prob(&mean, &self.std(), action))
    }

    /// Closed-form differential entropy `sum_d log sigma_d + 0.5 log(2 pi e)`.
    pub fn entropy(&self) -> f64 {
        self.std().iter().map(|s| s.ln() + HALF_LOG_TWO_PI + 0.5).sum()
    }
}

fn clamped_std(log_std: f64) -> f64 {
    log_std.exp().clamp(MIN_STD, MAX_STD)
}

pub fn gaussian_log_prob(mean: &[f64], std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(std)
        .zip(action)
        .map(|((m, s), a)| {
            let z = (a - m) / s;
            -0.5 * z * z - s.ln() - HALF_LOG_TWO_PI
        })
        .sum()
}
