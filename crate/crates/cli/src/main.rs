use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use smpde_cli::{run, Command, RunOptions};

/// Mild-solution experiments for stochastic heat/Burgers equations.
#[derive(Debug, Parser)]
#[command(name = "smpde", version)]
struct Cli {
    /// Command to run; defaults to the one named in the config.
    #[arg(value_enum)]
    command: Option<Command>,
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, env = "SMPDE_THREADS")]
    threads: Option<usize>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = RunOptions {
        config: cli.config,
        command: cli.command,
        seed: cli.seed,
        threads: cli.threads,
        out: cli.out,
    };
    match run(&opts) {
        Ok(s) => {
            println!(
                "{}: {} artifacts in {} ({:.2} s)",
                s.manifest.command,
                s.manifest.artifacts.len(),
                s.out_dir.display(),
                s.wall_time_s
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
