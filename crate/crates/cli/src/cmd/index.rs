use std::path::PathBuf;

use clap::Args;

use crate::Common;

#[derive(Args)]
pub struct IndexArgs {
    #[command(flatten)]
    common: Common,
    /// Where to cache the index as JSON.
    #[arg(long)]
    cache: Option<PathBuf>,
}

pub fn run(args: IndexArgs) -> anyhow::Result<()> {
    let cfg = crate::resolve_config(&args.common)?;
    let index = super::load_index(&cfg)?;
    if let Some(path) = &args.cache {
        index.save(path)?;
    }
    println!("alphabets {}", index.alphabets().len());
    println!("classes {}", index.classes().len());
    println!("instances {}", index.instance_count());
    Ok(())
}
