//! Command-line front end. Exit status: 0 on success, 2 for configuration
//! errors, 3 for solver or I/O failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use slabflow::commands::{execute, load_config, Command, Overrides};

#[derive(Parser)]
#[command(name = "slabflow", version, about = "Compressible rotating slab flow and its singular limits")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Solve for the static density and write it with its balance residual.
    StaticProfile(Common),
    /// Run the full compressible solver from a preset.
    RunFull(Common),
    /// Run the planar incompressible limit from a preset.
    #[command(name = "run-2d")]
    Run2d(Common),
    /// Run the radial limit equation from a preset.
    RunRadial(Common),
    /// Acoustic decay study over the epsilon list.
    Acoustic(Common),
    /// Epsilon sweep against the limit solver of the regime.
    Converge(Common),
}

#[derive(Args)]
struct Common {
    /// Key-value configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (command, common) = match cli.command {
        Sub::StaticProfile(c) => (Command::StaticProfile, c),
        Sub::RunFull(c) => (Command::RunFull, c),
        Sub::Run2d(c) => (Command::Run2d, c),
        Sub::RunRadial(c) => (Command::RunRadial, c),
        Sub::Acoustic(c) => (Command::Acoustic, c),
        Sub::Converge(c) => (Command::Converge, c),
    };
    let overrides = Overrides {
        out: common.out,
        seed: common.seed,
        workers: common.workers,
    };
    let result = load_config(&common.config).and_then(|mut config| {
        overrides.apply(&mut config)?;
        execute(command, &config)
    });
    match result {
        Ok(paths) => {
            log::info!("{} finished, {} file(s) written", command.name(), paths.len());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("slabflow {}: {e}", command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
