//! `pose`: train, evaluate and inspect agent teams.
//!
//! Exit codes: 0 on success, 1 for runtime or configuration errors, 2 for
//! usage errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pose_core::env::{maps, VisitationCounter};
use pose_core::policy::PolicyParams;
use pose_core::train::{evaluate, run_training, RunConfig};
use pose_core::Error;

#[derive(Debug, Parser)]
#[command(name = "pose", version, about = "Train and evaluate diverse agent teams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a team and write a run directory.
    Train {
        /// Config file; defaults are used for keys it omits.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override a config key, e.g. `--set ppo.clip=0.1`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Evaluate a saved policy checkpoint with sampled actions.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Environment name.
        #[arg(long, default_value = "deceptive15")]
        env: String,
        /// Episode step limit; 0 keeps the layout default.
        #[arg(long, default_value_t = 0)]
        max_steps: usize,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Export an agent's state-visitation counts from a run directory.
    Heatmap {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        agent: usize,
        /// Destination CSV; `-` prints to stdout.
        #[arg(long, default_value = "-")]
        output: PathBuf,
    },
    /// Print the default configuration.
    PrintConfig,
}

fn read(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    if path == Path::new("-") {
        print!("{text}");
        return Ok(());
    }
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn train(config: Option<&Path>, overrides: &[String]) -> Result<(), Error> {
    let mut cfg = match config {
        Some(p) => RunConfig::parse(&read(p)?)?,
        None => RunConfig::default(),
    };
    for o in overrides {
        cfg.apply_override(o)?;
    }
    let artifacts = run_training(cfg)?;
    for (i, (ret, success)) in artifacts.final_eval.iter().enumerate() {
        eprintln!("agent {i}: avg_return {ret:.3}, success_rate {success:.3}");
    }
    println!("{}", artifacts.run_dir.display());
    Ok(())
}

fn heatmap(run_dir: &Path, agent: usize, output: &Path) -> Result<(), Error> {
    let text = read(&run_dir.join(format!("heatmap_agent{agent}.csv")))?;
    // Parsing validates the file before it is copied.
    VisitationCounter::parse_csv(&text)?;
    write(output, &text)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Train { config, overrides } => train(config.as_deref(), &overrides),
        Command::Evaluate {
            checkpoint,
            env,
            max_steps,
            episodes,
            seed,
        } => {
            let policy = PolicyParams::from_checkpoint(&read(&checkpoint)?)?;
            let mut env = maps::build(&env, max_steps)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (ret, success) = evaluate(&policy, &mut env, episodes, &mut rng)?;
            println!("avg_return {ret}\nsuccess_rate {success}");
            Ok(())
        }
        Command::Heatmap {
            run_dir,
            agent,
            output,
        } => heatmap(&run_dir, agent, &output),
        Command::PrintConfig => {
            print!("{}", RunConfig::default().to_text());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
