use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use pignpi_cli::commands::{
    cmd_evaluate, cmd_render, cmd_report, cmd_simulate, cmd_sweep, cmd_train, Experiment,
};
use pignpi_cli::config::ExperimentConfig;
use pignpi_cli::exit_code;
use pignpi_core::metrics::GridSpec;

#[derive(Parser)]
#[command(name = "pignpi", version, about = "Learn pairwise interactions from particle trajectories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Run directory.
    #[arg(long)]
    out: PathBuf,
    /// Override the experiment seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overwrite existing outputs.
    #[arg(long)]
    force: bool,
    /// Trajectory directory; defaults to $PIGNPI_DATA_ROOT/<name>, then <out>/data.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured system and store its trajectories.
    Simulate(Common),
    /// Train every sweep cell and repetition, then evaluate on the test split.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Re-evaluate trained checkpoints, optionally on another trajectory.
    Evaluate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[arg(long, default_value = "eval")]
        tag: String,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Write a CSV grid of learned pair forces around a fixed particle.
    Render {
        /// A repetition directory, `runs/<cell>/rep_<k>`.
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3.0)]
        half_width: f64,
        #[arg(long, default_value_t = 61)]
        cells: usize,
    },
    /// Simulate, train, evaluate generalization and report in one go.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Gather aggregate tables into report.csv.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

fn experiment(c: &Common) -> Result<Experiment> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    Ok(Experiment::new(cfg, &c.out, c.data.clone()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(c) => {
            for p in cmd_simulate(&experiment(&c)?, c.force)? {
                println!("{}", p.display());
            }
        }
        Command::Train { common, jobs } => {
            let rows = cmd_train(&experiment(&common)?, common.force, jobs)?;
            println!("trained {} cells", rows.len());
        }
        Command::Evaluate {
            out,
            trajectory,
            tag,
            data,
        } => {
            let exp = Experiment::open(&out, data)?;
            let rows = cmd_evaluate(&exp, trajectory.as_deref(), &tag)?;
            println!("evaluated {} cells", rows.len());
        }
        Command::Render {
            run,
            out,
            half_width,
            cells,
        } => {
            cmd_render(&run, &out, &GridSpec::square(half_width, cells))?;
            println!("{}", out.display());
        }
        Command::Sweep { common, jobs } => {
            let path = cmd_sweep(&experiment(&common)?, common.force, jobs)?;
            println!("{}", path.display());
        }
        Command::Report { out } => {
            let exp = Experiment::open(&out, None)?;
            println!("{}", cmd_report(&exp)?.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
