use std::path::PathBuf;

use anyhow::Context;
use clap::Args;

use agp::agp::prototype_from_image;
use agp::dataset::{load_image, normalize_center, to_point_cloud, CLASSIFY_FRAME};

use crate::Common;

#[derive(Args)]
pub struct ProtoArgs {
    #[command(flatten)]
    common: Common,
    /// Character image.
    image: PathBuf,
    /// Mixture components (defaults to classify_k).
    #[arg(long)]
    k: Option<usize>,
    /// Prototype points (defaults to density).
    #[arg(long)]
    density: Option<usize>,
    /// Output PNG.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: ProtoArgs) -> anyhow::Result<()> {
    let cfg = crate::resolve_config(&args.common)?;
    crate::init_pool(cfg.jobs)?;
    let k = args.k.unwrap_or(cfg.classify_k);
    let density = args.density.unwrap_or(cfg.density);
    let frame = CLASSIFY_FRAME as f64;
    let img = load_image(&args.image, cfg.thresholds.image)?;
    let normalized = normalize_center(&to_point_cloud(&img)?, frame)?;
    let proto = prototype_from_image(&img, k, density, cfg.seed, frame, &cfg.em)?;
    crate::render::triptych(&img, &normalized, &proto, CLASSIFY_FRAME as u32)
        .save(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    println!(
        "k {} density {} log-likelihood {:.3} -> {}",
        k,
        density,
        proto.model.log_likelihood(),
        args.out.display()
    );
    Ok(())
}
