use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedamp_harness::commands::{cmd_bounds, cmd_diagnose, cmd_plot, cmd_run, cmd_sweep, Options};
use fedamp_harness::demo::cmd_paperdemo;

#[derive(Parser)]
#[command(
    name = "fedamp",
    version,
    about = "Federated averaging with amplified updates: simulation and diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set run.rounds=2048`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed (overrides `seeds.master`).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment per replication and write metrics.csv.
    Run(Common),
    /// Run the sweep grid and write sweep.csv.
    Sweep(Common),
    /// Write divergence.csv for the configured schedule.
    Diagnose(Common),
    /// Run the concentration checks and write bounds.csv.
    Bounds(Common),
    /// Render metrics CSV files to plot.svg.
    Plot {
        #[command(flatten)]
        common: Common,
        /// Metrics CSV file; repeatable.
        #[arg(long = "input")]
        inputs: Vec<PathBuf>,
    },
    /// Periodic-availability comparison of all arms.
    Paperdemo(Common),
}

fn options(c: Common, inputs: Vec<PathBuf>) -> Options {
    Options {
        config: c.config,
        sets: c.sets,
        out: c.out,
        seed: c.seed,
        inputs,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(c) => cmd_run(&options(c, Vec::new())),
        Command::Sweep(c) => cmd_sweep(&options(c, Vec::new())),
        Command::Diagnose(c) => cmd_diagnose(&options(c, Vec::new())),
        Command::Bounds(c) => cmd_bounds(&options(c, Vec::new())),
        Command::Plot { common, inputs } => cmd_plot(&options(common, inputs)),
        Command::Paperdemo(c) => cmd_paperdemo(&options(c, Vec::new())),
    };
    match result {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
