//! The multi-agent training loop and run-directory persistence.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::env::{maps, Env, VisitationCounter};
use crate::error::{Error, Result};
use crate::memory::GuidanceMemory;
use crate::metrics::{behavior_characterization, BehaviorTrace};
use crate::optim::{
    adapt_sigma, build_samples, diversity_gradient_traces, exploration_step,
    first_order_exploration, hinge_distances, penalty_weights, policy_improvement_step,
    AgentOptimizers, PenaltyState, PolicyExploreModel, TrustRegionModel,
};
use crate::policy::{write_text, Head, PolicyArch, PolicyParams, ValueParams};
use crate::trajectory::Trajectory;

use super::config::{AgentMode, RunConfig};
use super::rollout::{batch_summary, collect_reference_trajectory, collect_rollouts, evaluate};

pub const LOG_HEADER: &str = "iteration,agent_id,avg_return,success_rate,mean_hinge_distance,sigma,diversity_value,kl_after_explore,wall_time_ms";

/// Environment variable that replaces `run.output_dir`.
pub const RUN_DIR_ENV: &str = "POSE_RUN_DIR";

/// One row of `train_log.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub agent_id: usize,
    pub avg_return: f64,
    pub success_rate: f64,
    pub mean_hinge_distance: f64,
    pub sigma: f64,
    pub diversity_value: f64,
    pub kl_after_explore: f64,
    pub wall_time_ms: u64,
}

impl IterationRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.iteration,
            self.agent_id,
            self.avg_return,
            self.success_rate,
            self.mean_hinge_distance,
            self.sigma,
            self.diversity_value,
            self.kl_after_explore,
            self.wall_time_ms
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExploreKind {
    FirstOrder,
    TrustRegion,
}

/// What the exploration step did for one agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExploreRecord {
    pub agent_id: usize,
    pub kind: ExploreKind,
    pub accepted: bool,
    /// Mean KL from the pre-step policy to the post-step policy.
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IterationReport {
    pub records: Vec<IterationRecord>,
    pub explores: Vec<ExploreRecord>,
}

/// Everything one agent owns.
#[derive(Debug, Clone)]
pub struct Agent {
    pub id: usize,
    pub policy: PolicyParams,
    pub value: ValueParams,
    pub opt: AgentOptimizers,
    pub memory: GuidanceMemory,
    pub penalty: PenaltyState,
    pub visits: VisitationCounter,
    env: Env,
    rng: ChaCha8Rng,
}

impl Agent {
    fn new(id: usize, cfg: &RunConfig, env: Env) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(id as u64));
        let head = Head::for_space(env.action_space());
        let arch = PolicyArch::new(env.obs_dim(), cfg.hidden.clone(), head);
        let policy = PolicyParams::init(arch, &mut rng);
        let value = ValueParams::init(env.obs_dim(), &cfg.hidden, &mut rng);
        let opt = AgentOptimizers::new(&policy, &value, &cfg.ppo);
        Self {
            id,
            memory: GuidanceMemory::new(cfg.memory.resolve(env.diameter()), env.goal_hint()),
            penalty: cfg.penalty,
            visits: env.visitation_counter(cfg.env.point_cell_size),
            policy,
            value,
            opt,
            env,
            rng,
        }
    }

    pub fn env(&self) -> &Env {
        &self.env
    }
}

/// Per-agent state between the improvement and exploration phases.
struct Pending {
    batch: Vec<Trajectory>,
    traces: Vec<BehaviorTrace>,
    avg_return: f64,
    success_rate: f64,
    mean_hinge: f64,
}

/// Steps a team of agents through training iterations.
#[derive(Debug, Clone)]
pub struct Trainer {
    cfg: RunConfig,
    agents: Vec<Agent>,
    iteration: usize,
}

impl Trainer {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let env = maps::build(&cfg.env.name, cfg.env.max_steps)?;
        let agents = (0..cfg.agents).map(|i| Agent::new(i, &cfg, env.clone())).collect();
        Ok(Self {
            cfg,
            agents,
            iteration: 0,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    /// Number of completed iterations.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    fn first_order_phase(&self) -> bool {
        (self.iteration as f64) < self.cfg.explore.first_order_fraction * self.cfg.iterations as f64
    }

    /// Runs one training iteration for every agent.
    pub fn step(&mut self) -> Result<IterationReport> {
        let started = Instant::now();
        let cfg = &self.cfg;
        let pose = cfg.mode == AgentMode::Pose;
        let bonus = if cfg.mode == AgentMode::PpoExp {
            cfg.bonus_lambda
        } else {
            0.0
        };
        let mut pending = Vec::with_capacity(self.agents.len());
        for agent in &mut self.agents {
            let batch = collect_rollouts(
                &agent.policy,
                &agent.value,
                &mut agent.env,
                cfg.trajectories,
                &mut agent.rng,
                Some(&mut agent.visits),
                bonus,
            )?;
            let (avg_return, success_rate) = batch_summary(&batch);
            let mut mean_hinge = 0.0;
            let mut weights = vec![0.0; batch.len()];
            if pose {
                for t in &batch {
                    agent.memory.try_admit(t, &cfg.kernel)?;
                }
                if !agent.memory.is_empty() {
                    let hinges =
                        hinge_distances(&batch, &agent.memory, agent.penalty.delta_guid, &cfg.kernel)?;
                    mean_hinge = hinges.iter().sum::<f64>() / hinges.len() as f64;
                    weights = penalty_weights(&hinges, agent.penalty.sigma, agent.penalty.baseline);
                }
            }
            let samples =
                build_samples(&batch, cfg.ppo.gamma, cfg.ppo.gae_lambda, cfg.env.reward_scale)?;
            policy_improvement_step(
                &mut agent.policy,
                &mut agent.value,
                &mut agent.opt,
                &samples,
                &weights,
                &cfg.ppo,
                &mut agent.rng,
            )?;
            let traces = if pose && cfg.agents >= 2 {
                batch
                    .iter()
                    .map(behavior_characterization)
                    .collect::<Result<Vec<_>>>()?
            } else {
                Vec::new()
            };
            pending.push(Pending {
                batch,
                traces,
                avg_return,
                success_rate,
                mean_hinge,
            });
        }

        let mut report = IterationReport::default();
        let mut diversity = vec![0.0; self.agents.len()];
        let mut kls = vec![0.0; self.agents.len()];
        if pose && self.agents.len() >= 2 {
            let first_order = self.first_order_phase();
            let references = self
                .agents
                .iter_mut()
                .map(|a| {
                    let t = collect_reference_trajectory(&a.policy, &mut a.env)?;
                    behavior_characterization(&t)
                })
                .collect::<Result<Vec<_>>>()?;
            let cfg = &self.cfg;
            for (agent, p) in self.agents.iter_mut().zip(&pending) {
                let dg = diversity_gradient_traces(
                    &agent.policy,
                    &p.batch,
                    &p.traces,
                    &references,
                    agent.id,
                    &cfg.kernel,
                )?;
                diversity[agent.id] = dg.value;
                let model = PolicyExploreModel::new(
                    &agent.policy,
                    &p.batch,
                    &dg.weights,
                    cfg.explore.cg_damping,
                    cfg.explore.fvp_max_states,
                )?;
                let (theta, kind, accepted, kl) = if first_order {
                    let theta = first_order_exploration(
                        &agent.policy.theta,
                        &dg.grad,
                        cfg.explore.div_coeff,
                        cfg.explore_lr,
                    );
                    let kl = model.kl(&theta)?;
                    (theta, ExploreKind::FirstOrder, true, kl)
                } else {
                    let out = exploration_step(&agent.policy.theta, &model, &dg.grad, &cfg.explore)?;
                    (out.theta, ExploreKind::TrustRegion, out.accepted, out.kl)
                };
                drop(model);
                if theta.iter().any(|v| !v.is_finite()) {
                    warn!("agent {}: non-finite exploration step discarded", agent.id);
                } else {
                    agent.policy.theta = theta;
                }
                kls[agent.id] = kl;
                report.explores.push(ExploreRecord {
                    agent_id: agent.id,
                    kind,
                    accepted,
                    kl,
                });
            }
        }

        let elapsed = if self.cfg.record_wall_time {
            started.elapsed().as_millis() as u64
        } else {
            0
        };
        for (agent, p) in self.agents.iter_mut().zip(&pending) {
            if pose {
                agent.penalty = adapt_sigma(agent.penalty, p.mean_hinge);
            }
            report.records.push(IterationRecord {
                iteration: self.iteration,
                agent_id: agent.id,
                avg_return: p.avg_return,
                success_rate: p.success_rate,
                mean_hinge_distance: p.mean_hinge,
                sigma: agent.penalty.sigma,
                diversity_value: diversity[agent.id],
                kl_after_explore: kls[agent.id],
                wall_time_ms: elapsed,
            });
        }
        self.iteration += 1;
        Ok(report)
    }

    /// Sampled-policy evaluation of every agent on a fresh copy of the
    /// environment. Uses its own random streams, leaving training untouched.
    pub fn evaluate(&self, episodes: usize) -> Result<Vec<(f64, f64)>> {
        self.agents
            .iter()
            .map(|a| {
                let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed.wrapping_add(a.id as u64));
                rng.set_stream(1);
                let mut env = a.env.clone();
                evaluate(&a.policy, &mut env, episodes, &mut rng)
            })
            .collect()
    }
}

/// Files produced by [`run_training`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub run_dir: PathBuf,
    pub records: Vec<IterationRecord>,
    /// `(avg_return, success_rate)` per agent after training.
    pub final_eval: Vec<(f64, f64)>,
}

/// Directory a run writes to, honouring [`RUN_DIR_ENV`].
pub fn resolve_run_dir(cfg: &RunConfig) -> PathBuf {
    let root = std::env::var_os(RUN_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .unwrap_or_else(|| cfg.output_dir.clone());
    root.join(cfg.run_name())
}

fn write_checkpoints(dir: &Path, agents: &[Agent], tag: &str) -> Result<()> {
    for a in agents {
        write_text(
            &dir.join(format!("agent{}_{tag}.policy", a.id)),
            &a.policy.to_checkpoint(),
        )?;
        write_text(
            &dir.join(format!("agent{}_{tag}.value", a.id)),
            &a.value.to_checkpoint(),
        )?;
    }
    Ok(())
}

/// Trains a team and writes the run directory: `config.cfg`,
/// `train_log.csv`, `heatmap_agent<i>.csv`, `memory_agent<i>.txt`,
/// `evaluation.csv` and `checkpoints/`.
pub fn run_training(cfg: RunConfig) -> Result<RunArtifacts> {
    let run_dir = resolve_run_dir(&cfg);
    let mut trainer = Trainer::new(cfg)?;
    let cfg = trainer.config().clone();
    std::fs::create_dir_all(&run_dir).map_err(|e| Error::io(&run_dir, e))?;
    write_text(&run_dir.join("config.cfg"), &cfg.to_text())?;
    let log_path = run_dir.join("train_log.csv");
    let file = File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut log = BufWriter::new(file);
    let io = |e| Error::io(&log_path, e);
    writeln!(log, "{LOG_HEADER}").map_err(io)?;

    let ckpt_dir = run_dir.join("checkpoints");
    let mut records = Vec::with_capacity(cfg.iterations * cfg.agents);
    for it in 0..cfg.iterations {
        let report = match trainer.step() {
            Ok(r) => r,
            Err(e @ Error::NonFinite(_)) => {
                log.flush().map_err(io)?;
                write_checkpoints(&ckpt_dir, trainer.agents(), &format!("abort_iter{it}"))?;
                return Err(Error::NonFinite(format!(
                    "{e}; training aborted at iteration {it}, checkpoints written to {}",
                    ckpt_dir.display()
                )));
            }
            Err(e) => return Err(e),
        };
        for r in &report.records {
            writeln!(log, "{}", r.csv_row()).map_err(io)?;
        }
        if it % 50 == 0 || it + 1 == cfg.iterations {
            let best = report
                .records
                .iter()
                .map(|r| r.avg_return)
                .fold(f64::NEG_INFINITY, f64::max);
            info!("iteration {it}: best agent return {best:.3}");
        }
        records.extend(report.records);
        if cfg.checkpoint_interval > 0 && (it + 1) % cfg.checkpoint_interval == 0 {
            write_checkpoints(&ckpt_dir, trainer.agents(), &format!("iter{}", it + 1))?;
        }
    }
    log.flush().map_err(io)?;

    let mut final_eval = Vec::new();
    if cfg.iterations > 0 {
        write_checkpoints(&ckpt_dir, trainer.agents(), "final")?;
        for a in trainer.agents() {
            write_text(
                &run_dir.join(format!("heatmap_agent{}.csv", a.id)),
                &a.visits.to_csv(),
            )?;
            write_text(
                &run_dir.join(format!("memory_agent{}.txt", a.id)),
                &a.memory.to_text(),
            )?;
        }
        final_eval = trainer.evaluate(cfg.eval_episodes)?;
        let mut text = String::from("agent_id,avg_return,success_rate\n");
        for (i, (r, s)) in final_eval.iter().enumerate() {
            text.push_str(&format!("{i},{r},{s}\n"));
        }
        write_text(&run_dir.join("evaluation.csv"), &text)?;
    }
    Ok(RunArtifacts {
        run_dir,
        records,
        final_eval,
    })
}
