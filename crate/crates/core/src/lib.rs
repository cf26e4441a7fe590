//! Population of policy-gradient agents that keep their own successful
//! behaviour in a memory, stay close to it, and push away from each other.
//!
//! The crate is organised bottom-up:
//!
//! * [`metrics`]: behaviour traces, RBF-kernel MMD distances, team diversity.
//! * [`memory`]: per-agent top-k trajectory memory.
//! * [`env`]: grid mazes, point mazes, visitation counts.
//! * [`policy`]: MLP policies, action distributions, autodiff.

pub mod env;
pub mod error;
pub mod memory;
pub mod metrics;
pub mod optim;
pub mod policy;
pub mod train;
pub mod trajectory;

pub use error::{Error, Result};
pub use trajectory::{Action, Step, Termination, Trajectory};
