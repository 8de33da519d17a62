//! Dense networks, the Gaussian policy head and the Adam optimizer.

mod adam;
mod checkpoint;
mod dense;
mod gaussian;

pub use adam::{adam_step, AdamState};
pub use checkpoint::NetworkCheckpoint;
pub use dense::{BatchTrace, DenseNet, CRITIC_OUTPUT_GAIN, HIDDEN_WIDTH};
pub use gaussian::{
    gaussian_log_prob, GaussianPolicy, INITIAL_STD, MAX_STD, MIN_STD, POLICY_OUTPUT_GAIN,
};
