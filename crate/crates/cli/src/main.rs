//! `agp`: dataset indexing, prototype inspection, one-shot benchmarks and
//! character generation.

mod cmd;
mod render;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use agp::config::Config;

#[derive(Parser)]
#[command(name = "agp", version, about = "Abstracted Gaussian prototypes for one-shot character learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand. They override the JSON config.
#[derive(Args, Clone, Debug, Default)]
pub struct Common {
    /// JSON config file; unknown keys are rejected.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 1 gives bit-reproducible output.
    #[arg(long)]
    jobs: Option<usize>,
    /// Dataset root laid out as alphabet/character/instance.png.
    #[arg(long)]
    data_root: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Index a dataset tree and print its size.
    Index(cmd::index::IndexArgs),
    /// Render raw image, mixture assignment and prototype side by side.
    Proto(cmd::proto::ProtoArgs),
    /// Run an N-way one-shot classification benchmark.
    Bench(cmd::bench::BenchArgs),
    /// Generate new character variants.
    Generate(cmd::generate::GenerateArgs),
    /// Write the procedural surrogate corpus.
    Synth(cmd::synth::SynthArgs),
}

/// Loads the config file (or defaults) and applies the shared overrides.
pub(crate) fn resolve_config(common: &Common) -> anyhow::Result<Config> {
    let mut cfg = match &common.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(j) = common.jobs {
        cfg.jobs = Some(j);
    }
    if let Some(root) = &common.data_root {
        cfg.data_root = Some(root.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

pub(crate) fn init_pool(jobs: Option<usize>) -> anyhow::Result<()> {
    if let Some(n) = jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use agp::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Config(_) | E::Contract(_) => 2,
                E::Numerical { .. } => 4,
                _ => 3,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some()
            || cause.downcast_ref::<image::ImageError>().is_some()
            || cause.downcast_ref::<csv::Error>().is_some()
        {
            return 3;
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return 2;
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Index(a) => cmd::index::run(a),
        Command::Proto(a) => cmd::proto::run(a),
        Command::Bench(a) => cmd::bench::run(a),
        Command::Generate(a) => cmd::generate::run(a),
        Command::Synth(a) => cmd::synth::run(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
