use anyhow::Result;
use clap::{Parser, Subcommand};
use sitegrid_cli::config::RunConfig;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "sitegrid",
    about = "Grid-world coverage / data-harvesting simulator and DDQN experiment runner",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario file from the config and seed.
    Gen {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an agent; writes checkpoints and a metrics CSV.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo evaluation of a checkpoint (or the random baseline).
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Checkpoint to evaluate.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Evaluate the uniform-random baseline instead of a checkpoint.
        #[arg(long)]
        random_policy: bool,
        /// Episode count (defaults to eval_episodes from the config).
        #[arg(long)]
        episodes: Option<usize>,
        /// Additionally record the first N episode trajectories.
        #[arg(long, default_value_t = 0)]
        trace: usize,
    },
    /// Train and evaluate one agent per (proj, port) cell.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated local crop sides, e.g. 9,17,25,33.
        #[arg(long, value_delimiter = ',', required = true)]
        proj: Vec<usize>,
        /// Comma-separated pooling kernels, e.g. 2,3,5,7.
        #[arg(long, value_delimiter = ',', required = true)]
        port: Vec<usize>,
    },
    /// Render a scenario plus a recorded trajectory to SVG.
    Render {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print flatten-size tables (literal formula vs architecture).
    Sizecalc {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [9usize, 17, 25, 33])]
        proj: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [2usize, 3, 5, 7])]
        port: Vec<usize>,
    },
}

fn load(config: &PathBuf, seed: Option<u64>) -> Result<RunConfig> {
    let cfg = RunConfig::from_file(config)?;
    Ok(match seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Gen { config, seed, out } => {
            let path = sitegrid_cli::cmd_gen(&load(&config, seed)?, &out)?;
            println!("wrote {}", path.display());
        }
        Command::Train { config, seed, out } => {
            let artifacts = sitegrid_cli::cmd_train(&load(&config, seed)?, &out)?;
            println!("wrote {}", artifacts.metrics_csv.display());
            println!("wrote {}", artifacts.final_checkpoint.display());
        }
        Command::Eval {
            config,
            seed,
            out,
            checkpoint,
            random_policy,
            episodes,
            trace,
        } => {
            let path = sitegrid_cli::cmd_eval(
                &load(&config, seed)?,
                checkpoint.as_deref(),
                random_policy,
                episodes,
                trace,
                &out,
            )?;
            println!("wrote {}", path.display());
        }
        Command::Sweep {
            config,
            seed,
            out,
            proj,
            port,
        } => {
            let path = sitegrid_cli::cmd_sweep(&load(&config, seed)?, &proj, &port, &out)?;
            println!("wrote {}", path.display());
        }
        Command::Render {
            scenario,
            trajectory,
            out,
        } => {
            let path = sitegrid_cli::cmd_render(&scenario, &trajectory, &out)?;
            println!("wrote {}", path.display());
        }
        Command::Sizecalc { config, proj, port } => {
            print!("{}", sitegrid_cli::cmd_sizecalc(&load(&config, None)?, &proj, &port)?);
        }
    }
    Ok(())
}
