//! `kickoff` command line: train, evaluate and inspect league progress.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use kickoff_core::driver::{self, RunConfig};
use kickoff_core::eval::EvalConfig;

#[derive(Parser)]
#[command(name = "kickoff", version, about = "Multi-agent football training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy through the curriculum and self-play league.
    Train {
        /// TOML run configuration; omitted fields take the profile defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Built-in profile used when no config file is given (desk or full).
        #[arg(long, default_value = "desk")]
        profile: String,
        /// Continue the run stored in this directory.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Override the total environment-step budget.
        #[arg(long)]
        budget: Option<u64>,
    },
    /// Play evaluation matches against the scripted opponent.
    Evaluate {
        /// Actor checkpoint (for example `<run>/actor.json`).
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 50)]
        matches: usize,
        /// Comma-separated seed groups; one aggregate row per seed.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        /// Opponent strength (reaction probability).
        #[arg(long, default_value_t = kickoff_core::eval::MEDIUM_STRENGTH)]
        strength: f64,
        /// Directory for the CSV reports.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Print phase history and pool contents of a run.
    LeagueStatus {
        #[arg(long)]
        run: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train {
            config,
            profile,
            resume,
            budget,
        } => {
            let mut cfg = match &config {
                Some(path) => RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
                None => RunConfig::profile(&profile)?,
            };
            cfg.apply_env_overrides()?;
            if let Some(dir) = &resume {
                cfg.out_dir = dir.clone();
            }
            if let Some(b) = budget {
                cfg.budget_env_steps = b;
            }
            let summary = driver::train(&cfg, resume.is_some())
                .with_context(|| format!("training into {}", cfg.out_dir.display()))?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Evaluate {
            checkpoint,
            matches,
            seeds,
            strength,
            out,
        } => {
            let cfg = EvalConfig {
                matches,
                opponent_strength: strength,
                seeds,
                ..EvalConfig::default()
            };
            let reports = driver::evaluate(&checkpoint, &cfg, &out)?;
            for r in &reports {
                let g = |k: &str| r.metric(k).map_or(0.0, |m| m.iqm);
                println!(
                    "seed {:>4}: goals {:.2}-{:.2}  good passes {:.1}  good shots {:.1}  possession {:.0}",
                    r.group_seed,
                    g("goals_for"),
                    g("goals_against"),
                    g("good_passes"),
                    g("good_shots"),
                    g("possession_steps")
                );
            }
            println!("reports written to {}", out.display());
        }
        Command::LeagueStatus { run } => {
            let status = driver::league_status(&run).with_context(|| format!("reading run {}", run.display()))?;
            print!("{status}");
        }
    }
    Ok(())
}
