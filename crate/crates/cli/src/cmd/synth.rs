use std::path::PathBuf;

use clap::Args;

use agp::synthetic::{write_corpus, SynthConfig};

#[derive(Args)]
pub struct SynthArgs {
    /// Output directory for the corpus tree.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 12)]
    alphabets: usize,
    #[arg(long, default_value_t = 24)]
    classes: usize,
    #[arg(long, default_value_t = 6)]
    instances: usize,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
}

pub fn run(args: SynthArgs) -> anyhow::Result<()> {
    let cfg = SynthConfig {
        alphabets: args.alphabets,
        classes_per_alphabet: args.classes,
        instances_per_class: args.instances,
        seed: args.seed,
        ..SynthConfig::default()
    };
    let index = write_corpus(&args.out, &cfg)?;
    println!(
        "wrote {} classes, {} images to {}",
        index.classes().len(),
        index.instance_count(),
        args.out.display()
    );
    Ok(())
}
