//! Run configuration in a flat `section.key = value` text format.
//!
//! Blank lines and lines starting with `#` are ignored. Keys not listed in
//! [`RunConfig::entries`] are rejected.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::memory::MemoryConfig;
use crate::metrics::{Bandwidth, KernelConfig};
use crate::optim::{ExploreConfig, PenaltyState, PpoConfig};

/// Guidance-memory settings as written in a config. The radius may be left
/// to the environment: `auto` is 10% of its position-space diameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemorySettings {
    pub capacity: usize,
    pub similarity_radius: Option<f64>,
    pub reanchor_on_improvement: bool,
}

impl MemorySettings {
    pub fn resolve(&self, diameter: f64) -> MemoryConfig {
        MemoryConfig {
            capacity: self.capacity,
            similarity_radius: self.similarity_radius.unwrap_or(0.1 * diameter),
            reanchor_on_improvement: self.reanchor_on_improvement,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentMode {
    /// Memory guidance plus diversity exploration.
    Pose,
    /// Independent PPO learners.
    Ppo,
    /// PPO with a count-based exploration bonus.
    PpoExp,
}

impl fmt::Display for AgentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgentMode::Pose => "pose",
            AgentMode::Ppo => "ppo",
            AgentMode::PpoExp => "ppo_exp",
        })
    }
}

impl FromStr for AgentMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pose" => Ok(AgentMode::Pose),
            "ppo" => Ok(AgentMode::Ppo),
            "ppo_exp" => Ok(AgentMode::PpoExp),
            _ => Err(format!("expected pose, ppo or ppo_exp, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    /// One of [`crate::env::maps::NAMES`].
    pub name: String,
    /// 0 selects the layout's default.
    pub max_steps: usize,
    /// Cell side used to count point-maze visits.
    pub point_cell_size: f64,
    /// Multiplies environment rewards before advantage estimation. Logged
    /// returns are unscaled.
    pub reward_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub mode: AgentMode,
    pub agents: usize,
    /// Trajectories collected per agent and iteration.
    pub trajectories: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Root directory for run outputs.
    pub output_dir: PathBuf,
    /// Run subdirectory; empty derives one from env, mode and seed.
    pub name: String,
    /// Write checkpoints every this many iterations; 0 writes only the final one.
    pub checkpoint_interval: usize,
    /// Episodes per agent in the final evaluation.
    pub eval_episodes: usize,
    pub hidden: Vec<usize>,
    pub ppo: PpoConfig,
    pub penalty: PenaltyState,
    pub explore: ExploreConfig,
    /// Step size of the first-order exploration phase.
    pub explore_lr: f64,
    pub kernel: KernelConfig,
    pub memory: MemorySettings,
    pub bonus_lambda: f64,
    pub record_wall_time: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: EnvConfig {
                name: "deceptive15".into(),
                max_steps: 0,
                point_cell_size: 0.5,
                reward_scale: 1.0,
            },
            mode: AgentMode::Pose,
            agents: 3,
            trajectories: 8,
            iterations: 200,
            seed: 0,
            output_dir: PathBuf::from("runs"),
            name: String::new(),
            checkpoint_interval: 0,
            eval_episodes: 20,
            hidden: vec![64, 64],
            ppo: PpoConfig::default(),
            penalty: PenaltyState::default(),
            explore: ExploreConfig::default(),
            explore_lr: 3e-4,
            kernel: KernelConfig::default(),
            memory: MemorySettings {
                capacity: 10,
                similarity_radius: None,
                reanchor_on_improvement: true,
            },
            bonus_lambda: 0.1,
            record_wall_time: false,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| Error::InvalidValue {
        key: key.to_string(),
        msg: format!("`{value}`: {e}"),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::InvalidValue {
            key: key.to_string(),
            msg: format!("expected true or false, got `{value}`"),
        }),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    if value.is_empty() || value == "-" {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

impl RunConfig {
    /// Every key with its current value, in canonical order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let list = |v: &[usize]| {
            if v.is_empty() {
                "-".to_string()
            } else {
                v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
            }
        };
        let bandwidth = match self.kernel.bandwidth {
            Bandwidth::MedianHeuristic => "median".to_string(),
            Bandwidth::Fixed(h) => h.to_string(),
        };
        vec![
            ("env.name", self.env.name.clone()),
            ("env.max_steps", self.env.max_steps.to_string()),
            ("env.point_cell_size", self.env.point_cell_size.to_string()),
            ("env.reward_scale", self.env.reward_scale.to_string()),
            ("run.mode", self.mode.to_string()),
            ("run.agents", self.agents.to_string()),
            ("run.trajectories", self.trajectories.to_string()),
            ("run.iterations", self.iterations.to_string()),
            ("run.seed", self.seed.to_string()),
            ("run.output_dir", self.output_dir.display().to_string()),
            ("run.name", self.name.clone()),
            ("run.checkpoint_interval", self.checkpoint_interval.to_string()),
            ("run.eval_episodes", self.eval_episodes.to_string()),
            ("policy.hidden", list(&self.hidden)),
            ("ppo.clip", self.ppo.clip.to_string()),
            ("ppo.gamma", self.ppo.gamma.to_string()),
            ("ppo.gae_lambda", self.ppo.gae_lambda.to_string()),
            ("ppo.epochs", self.ppo.epochs.to_string()),
            ("ppo.minibatch_size", self.ppo.minibatch_size.to_string()),
            ("ppo.lr", self.ppo.lr.to_string()),
            ("ppo.vf_coef", self.ppo.vf_coef.to_string()),
            ("ppo.ent_coef", self.ppo.ent_coef.to_string()),
            ("ppo.max_grad_norm", self.ppo.max_grad_norm.to_string()),
            ("penalty.sigma", self.penalty.sigma.to_string()),
            ("penalty.eta", self.penalty.eta.to_string()),
            ("penalty.sigma_min", self.penalty.sigma_min.to_string()),
            ("penalty.sigma_max", self.penalty.sigma_max.to_string()),
            ("penalty.delta_guid", self.penalty.delta_guid.to_string()),
            ("penalty.baseline", self.penalty.baseline.to_string()),
            ("explore.delta_kl", self.explore.delta_kl.to_string()),
            ("explore.cg_iters", self.explore.cg_iters.to_string()),
            ("explore.cg_damping", self.explore.cg_damping.to_string()),
            ("explore.backtrack_steps", self.explore.backtrack_steps.to_string()),
            ("explore.backtrack_ratio", self.explore.backtrack_ratio.to_string()),
            ("explore.first_order_fraction", self.explore.first_order_fraction.to_string()),
            ("explore.div_coeff", self.explore.div_coeff.to_string()),
            ("explore.fvp_max_states", self.explore.fvp_max_states.to_string()),
            ("explore.lr", self.explore_lr.to_string()),
            ("kernel.bandwidth", bandwidth),
            ("kernel.max_points", self.kernel.max_points.to_string()),
            ("memory.capacity", self.memory.capacity.to_string()),
            (
                "memory.similarity_radius",
                self.memory
                    .similarity_radius
                    .map_or_else(|| "auto".to_string(), |r| r.to_string()),
            ),
            ("memory.reanchor", self.memory.reanchor_on_improvement.to_string()),
            ("bonus.lambda", self.bonus_lambda.to_string()),
            ("log.record_wall_time", self.record_wall_time.to_string()),
        ]
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "env.name" => self.env.name = v.to_string(),
            "env.max_steps" => self.env.max_steps = parse(key, v)?,
            "env.point_cell_size" => self.env.point_cell_size = parse(key, v)?,
            "env.reward_scale" => self.env.reward_scale = parse(key, v)?,
            "run.mode" => self.mode = parse(key, v)?,
            "run.agents" => self.agents = parse(key, v)?,
            "run.trajectories" => self.trajectories = parse(key, v)?,
            "run.iterations" => self.iterations = parse(key, v)?,
            "run.seed" => self.seed = parse(key, v)?,
            "run.output_dir" => self.output_dir = PathBuf::from(v),
            "run.name" => self.name = v.to_string(),
            "run.checkpoint_interval" => self.checkpoint_interval = parse(key, v)?,
            "run.eval_episodes" => self.eval_episodes = parse(key, v)?,
            "policy.hidden" => self.hidden = parse_list(key, v)?,
            "ppo.clip" => self.ppo.clip = parse(key, v)?,
            "ppo.gamma" => self.ppo.gamma = parse(key, v)?,
            "ppo.gae_lambda" => self.ppo.gae_lambda = parse(key, v)?,
            "ppo.epochs" => self.ppo.epochs = parse(key, v)?,
            "ppo.minibatch_size" => self.ppo.minibatch_size = parse(key, v)?,
            "ppo.lr" => self.ppo.lr = parse(key, v)?,
            "ppo.vf_coef" => self.ppo.vf_coef = parse(key, v)?,
            "ppo.ent_coef" => self.ppo.ent_coef = parse(key, v)?,
            "ppo.max_grad_norm" => self.ppo.max_grad_norm = parse(key, v)?,
            "penalty.sigma" => self.penalty.sigma = parse(key, v)?,
            "penalty.eta" => self.penalty.eta = parse(key, v)?,
            "penalty.sigma_min" => self.penalty.sigma_min = parse(key, v)?,
            "penalty.sigma_max" => self.penalty.sigma_max = parse(key, v)?,
            "penalty.delta_guid" => self.penalty.delta_guid = parse(key, v)?,
            "penalty.baseline" => self.penalty.baseline = parse_bool(key, v)?,
            "explore.delta_kl" => self.explore.delta_kl = parse(key, v)?,
            "explore.cg_iters" => self.explore.cg_iters = parse(key, v)?,
            "explore.cg_damping" => self.explore.cg_damping = parse(key, v)?,
            "explore.backtrack_steps" => self.explore.backtrack_steps = parse(key, v)?,
            "explore.backtrack_ratio" => self.explore.backtrack_ratio = parse(key, v)?,
            "explore.first_order_fraction" => self.explore.first_order_fraction = parse(key, v)?,
            "explore.div_coeff" => self.explore.div_coeff = parse(key, v)?,
            "explore.fvp_max_states" => self.explore.fvp_max_states = parse(key, v)?,
            "explore.lr" => self.explore_lr = parse(key, v)?,
            "kernel.bandwidth" => {
                self.kernel.bandwidth = if v == "median" {
                    Bandwidth::MedianHeuristic
                } else {
                    Bandwidth::Fixed(parse(key, v)?)
                }
            }
            "kernel.max_points" => self.kernel.max_points = parse(key, v)?,
            "memory.capacity" => self.memory.capacity = parse(key, v)?,
            "memory.similarity_radius" => {
                self.memory.similarity_radius = if v == "auto" {
                    None
                } else {
                    Some(parse(key, v)?)
                }
            }
            "memory.reanchor" => self.memory.reanchor_on_improvement = parse_bool(key, v)?,
            "bonus.lambda" => self.bonus_lambda = parse(key, v)?,
            "log.record_wall_time" => self.record_wall_time = parse_bool(key, v)?,
            other => return Err(Error::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment.split_once('=').ok_or_else(|| Error::InvalidValue {
            key: assignment.to_string(),
            msg: "expected key=value".into(),
        })?;
        self.set(k.trim(), v)
    }

    /// Parses a config file; keys it omits keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
                line: i + 1,
                msg: format!("expected `key = value`, found `{line}`"),
            })?;
            cfg.set(k.trim(), v).map_err(|e| Error::Config {
                line: i + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for (k, v) in self.entries() {
            let s = k.split('.').next().unwrap_or("");
            if s != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                section = s;
            }
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |key: &str, msg: &str| {
            Err(Error::InvalidValue {
                key: key.to_string(),
                msg: msg.to_string(),
            })
        };
        if self.agents == 0 {
            return invalid("run.agents", "at least one agent is required");
        }
        if self.trajectories == 0 {
            return invalid("run.trajectories", "at least one trajectory per batch is required");
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return invalid("policy.hidden", "layer widths must be positive");
        }
        if !(self.env.point_cell_size > 0.0) {
            return invalid("env.point_cell_size", "must be positive");
        }
        if !(self.env.reward_scale > 0.0 && self.env.reward_scale.is_finite()) {
            return invalid("env.reward_scale", "must be positive");
        }
        if !(self.explore_lr >= 0.0) {
            return invalid("explore.lr", "must be nonnegative");
        }
        if !(self.bonus_lambda >= 0.0) {
            return invalid("bonus.lambda", "must be nonnegative");
        }
        if self.memory.similarity_radius.map_or(false, |r| !(r >= 0.0)) {
            return invalid("memory.similarity_radius", "must be nonnegative");
        }
        if self.eval_episodes == 0 {
            return invalid("run.eval_episodes", "must be positive");
        }
        self.ppo.validate()?;
        self.penalty.validate()?;
        self.explore.validate()?;
        self.kernel.validate()?;
        crate::env::maps::build(&self.env.name, self.env.max_steps)?;
        Ok(())
    }

    /// Run subdirectory name.
    pub fn run_name(&self) -> String {
        if self.name.is_empty() {
            format!("{}_{}_seed{}", self.env.name, self.mode, self.seed)
        } else {
            self.name.clone()
        }
    }
}
