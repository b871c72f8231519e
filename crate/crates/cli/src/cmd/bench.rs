use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::Serialize;

use agp::config::Config;
use agp::episodes::{run_benchmark, BenchConfig, BenchmarkReport, Method, TrialStatus};

use crate::Common;

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Mode {
    Within,
    Unconstrained,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MethodArg {
    Agp,
    Mse,
}

#[derive(Args)]
pub struct BenchArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 5)]
    n_way: usize,
    #[arg(long, value_enum, default_value_t = Mode::Unconstrained)]
    mode: Mode,
    #[arg(long, value_enum, default_value_t = MethodArg::Agp)]
    method: MethodArg,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// Output directory for report.json and trials.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct ReportFile<'a> {
    settings: &'a Config,
    report: &'a BenchmarkReport,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    trial: usize,
    seed: u64,
    true_class: usize,
    predicted_class: Option<usize>,
    correct: bool,
    error: &'a str,
}

pub fn run(args: BenchArgs) -> anyhow::Result<()> {
    let cfg = crate::resolve_config(&args.common)?;
    crate::init_pool(cfg.jobs)?;
    let index = super::load_index(&cfg)?;
    let bench = BenchConfig {
        n_way: args.n_way,
        within_alphabet: matches!(args.mode, Mode::Within),
        trials: args.trials,
        method: match args.method {
            MethodArg::Agp => Method::Agp,
            MethodArg::Mse => Method::Mse,
        },
        seed: cfg.seed,
        threshold: cfg.thresholds.image,
        agp: cfg.agp(),
        similarity: cfg.similarity(),
    };
    let report = run_benchmark(&index, &bench)?;

    super::ensure_dir(&args.out)?;
    super::write_json(
        &args.out.join("report.json"),
        &ReportFile {
            settings: &cfg,
            report: &report,
        },
    )?;
    let mut w = csv::Writer::from_path(args.out.join("trials.csv"))?;
    for r in &report.log {
        let error = match &r.status {
            TrialStatus::Ok => "",
            TrialStatus::Failed(msg) => msg.as_str(),
        };
        w.serialize(CsvRow {
            trial: r.trial,
            seed: r.seed,
            true_class: r.true_class,
            predicted_class: r.predicted_class,
            correct: r.correct,
            error,
        })?;
    }
    w.flush()?;
    if let Some(reason) = &report.aborted {
        eprintln!("warning: stopped after {} trials: {reason}", report.trials);
    }
    println!(
        "{}-way {:?} {:?}: {}/{} correct, accuracy {:.4} ({:.1}s)",
        args.n_way,
        args.mode,
        args.method,
        report.correct,
        report.trials,
        report.accuracy,
        report.wall_time_secs
    );
    Ok(())
}
