use serde::{Deserialize, Serialize};

use super::{AdamState, DenseNet, GaussianPolicy};
use crate::error::{CanError, Result};

/// Serialized network: row-major weight matrices (`fan_in` rows of `fan_out`
/// entries) and biases per layer, plus the policy `log_std` when present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCheckpoint {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_std: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<Vec<AdamState>>,
}

impl NetworkCheckpoint {
    pub fn from_net(net: &DenseNet) -> Self {
        Self {
            layer_sizes: net.layer_sizes().to_vec(),
            weights: net.weight_rows(),
            biases: net.bias_vectors(),
            log_std: None,
            optimizer: None,
        }
    }

    pub fn from_policy(policy: &GaussianPolicy) -> Self {
        Self {
            log_std: Some(policy.log_std.clone()),
            ..Self::from_net(&policy.mean_net)
        }
    }

    pub fn to_net(&self) -> Result<DenseNet> {
        DenseNet::from_parts(&self.layer_sizes, &self.weights, &self.biases)
    }

    pub fn to_policy(&self) -> Result<GaussianPolicy> {
        let log_std = self
            .log_std
            .clone()
            .ok_or_else(|| CanError::Config("policy checkpoint without log_std".into()))?;
        GaussianPolicy::from_parts(self.to_net()?, log_std)
    }
}
