//! Cascade attribute networks.
//!
//! A control policy is split into a base module that solves target reaching
//! and a chain of add-on attribute modules. Each add-on owns a compensation
//! network that sees only its own minimal state view plus the upstream action
//! and nudges that action to satisfy one extra requirement (avoid an
//! obstacle, wait for a door, respect a speed limit, reject a disturbance).
//! Modules are trained one at a time with PPO on top of a frozen base and can
//! be re-assembled into task combinations that were never trained.

pub mod attributes;
pub mod curriculum;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod io;
pub mod nn;
pub mod policy;
pub mod train;

pub use error::{CanError, Result};
