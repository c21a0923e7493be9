//! Configuration, persistence and seeding around `smpde-core`.
//!
//! A run reads one TOML file, validates it completely, executes the selected
//! command on a dedicated thread pool and writes its artifacts plus a
//! `manifest.json` with a SHA-256 per artifact into the output directory.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod output;
pub mod seed;

use std::path::PathBuf;
use std::time::Instant;

pub use config::{Command, ExperimentConfig};
pub use error::CliError;
pub use output::Manifest;
pub use seed::seed_split;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub config: PathBuf,
    /// Overrides the command in the config.
    pub command: Option<Command>,
    pub seed: Option<u64>,
    /// Worker threads; `None` lets rayon decide.
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub manifest: Manifest,
    pub out_dir: PathBuf,
    pub wall_time_s: f64,
}

pub fn run(opts: &RunOptions) -> Result<RunSummary, CliError> {
    let started = Instant::now();
    let mut cfg = ExperimentConfig::load_with(&opts.config, opts.command)?;
    if let Some(s) = opts.seed {
        cfg.seed = s;
    }
    let out_dir = opts.out.clone().unwrap_or_else(|| cfg.output.directory.clone());
    let mut hashed = cfg.clone();
    hashed.output.directory = PathBuf::new();
    let config_sha256 = output::sha256_hex(hashed.to_toml().as_bytes());

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Format(format!("thread pool: {e}")))?;
    let mut out = output::Output::create(&out_dir, &cfg.output)?;
    pool.install(|| commands::execute(&cfg, cfg.seed, &mut out))?;
    let manifest = out.finish(cfg.command.name(), cfg.seed, config_sha256)?;
    Ok(RunSummary {
        manifest,
        out_dir,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}
