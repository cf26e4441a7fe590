//! Configuration, rollouts and the training loop.

mod config;
mod rollout;
mod trainer;

pub use config::{AgentMode, EnvConfig, MemorySettings, RunConfig};
pub use rollout::{batch_summary, collect_reference_trajectory, collect_rollouts, evaluate};
pub use trainer::{
    resolve_run_dir, run_training, Agent, ExploreKind, ExploreRecord, IterationRecord,
    IterationReport, RunArtifacts, Trainer, LOG_HEADER, RUN_DIR_ENV,
};
