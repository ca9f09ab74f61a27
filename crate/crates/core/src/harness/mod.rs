//! Configuration, experiment commands and result files.
//!
//! Every command writes into a staging directory inside `--out` and moves
//! its files into place only when it succeeds. Exit codes: 0 on success, 2
//! on a configuration or usage error, 1 on any other failure.

mod commands;
mod config;
mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{ablate, geometry, plan, reward_check, run_episodes, train_flow, CommandOutput, Sweep};
pub use config::{load_config, ExperimentConfig, GeolabConfig, SCHEMA_VERSION};
pub use output::{write_metrics, Cell, EpisodeRow, RunManifest, Staging, Table};

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "wav", version, about = "Latent trajectory planning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses one per core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run planning episodes on the point-mass world.
    Plan(Common),
    /// Repeat the plan episodes over a sweep of one planner field.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// `KEY=V1,V2,...` with KEY one of K, M, N, K1, K2, alpha, beta.
        #[arg(long)]
        sweep: String,
    },
    /// Feasible-mass decay and one-shot versus iterative search.
    Geometry(Common),
    /// Train the video, value and action flows on expert demonstrations.
    TrainFlow(Common),
    /// Dump per-step reward terms along the expert rollout.
    RewardCheck(Common),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Plan(_) => "plan",
            Command::Ablate { .. } => "ablate",
            Command::Geometry(_) => "geometry",
            Command::TrainFlow(_) => "train-flow",
            Command::RewardCheck(_) => "reward-check",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Plan(c) | Command::Geometry(c) | Command::TrainFlow(c) | Command::RewardCheck(c) => c,
            Command::Ablate { common, .. } => common,
        }
    }
}

/// Parse `argv` (program name first), run the command, and return the exit
/// code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(manifest) => {
            log::info!("{} finished; outputs in {}", manifest.command, manifest.config.output_dir.display());
            0
        }
        Err(e @ Error::Config { .. }) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn resolve_config(common: &Common) -> Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => load_config(path).map_err(|e| match e {
            Error::Io { path, source } => Error::config("--config", format!("cannot read {}: {source}", path.display())),
            other => other,
        })?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn execute(command: &Command) -> Result<RunManifest> {
    let common = command.common();
    let config = resolve_config(common)?;
    let sweep = match command {
        Command::Ablate { sweep, .. } => Some(Sweep::parse(sweep)?),
        _ => None,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot build worker pool: {e}")))?;
    let started_at = chrono::Utc::now().to_rfc3339();
    let mut staging = Staging::new(&config.output_dir)?;
    let output = pool.install(|| match command {
        Command::Plan(_) => plan(&config, &mut staging),
        Command::Ablate { .. } => ablate(&config, sweep.as_ref().expect("parsed above"), &mut staging),
        Command::Geometry(_) => geometry(&config, &mut staging),
        Command::TrainFlow(_) => train_flow(&config, &mut staging),
        Command::RewardCheck(_) => reward_check(&config, &mut staging),
    })?;
    staging.path("manifest.json");
    let manifest = RunManifest {
        command: command.name().to_string(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        started_at,
        finished_at: chrono::Utc::now().to_rfc3339(),
        outputs: staging.files().to_vec(),
        config: config.clone(),
        episodes: output.episodes,
        success_rate: output.success_rate,
        summary: output.summary,
    };
    staging.write_json("manifest.json", &manifest)?;
    staging.promote()?;
    Ok(manifest)
}
