//! Fitts' law benchmark for behavior-cloned reaching policies.
//!
//! The crate generates (or loads) kinesthetic reaching demonstrations, trains
//! an MLP behavior-cloning policy on them, rolls the policy out open-loop
//! against a kinematic arm model, and checks whether movement time scales
//! with the index of difficulty the way it does for the demonstrations.

pub mod demogen;
pub mod error;
pub mod io;
pub mod kinematics;
pub mod pipeline;
pub mod policy;
pub mod rollout;
pub mod stats;
pub mod trajectory;

pub use error::{Error, Result};
