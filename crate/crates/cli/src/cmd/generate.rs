use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, ValueEnum};
use rand::seq::{index, IndexedRandom};
use rand::Rng as _;

use agp::config::Config;
use agp::dataset::{load_image, rasterize, to_point_cloud, ClassId, DatasetIndex, VAE_FRAME};
use agp::genpipe::{generate_variants, GenerationJob, Provenance, SourceInstance, Task};
use agp::seed;
use agp::vae::{loss_curve_csv, save_checkpoint};

use crate::Common;

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum TaskArg {
    Exemplars,
    Alphabet,
    Unconstrained,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Exemplars => Task::NewExemplars,
            TaskArg::Alphabet => Task::WithinAlphabet,
            TaskArg::Unconstrained => Task::Unconstrained,
        }
    }
}

#[derive(Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value_t = TaskArg::Exemplars)]
    task: TaskArg,
    /// Source images, comma separated, laid out as
    /// alphabet/character/instance.png. Drawn from the dataset when omitted.
    #[arg(long, value_delimiter = ',')]
    sources: Vec<PathBuf>,
    /// Source classes to draw for the alphabet and unconstrained tasks.
    #[arg(long, default_value_t = 10)]
    classes: usize,
    /// Variants to generate.
    #[arg(long, default_value_t = 4)]
    count: usize,
    /// VAE training epochs (overrides the config).
    #[arg(long)]
    epochs: Option<usize>,
    /// Prototypes per source class (overrides the config's D).
    #[arg(long)]
    per_class: Option<usize>,
    /// Rerun the job recorded in a provenance file; other job flags are ignored.
    #[arg(long)]
    provenance: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn source_from_path(i: usize, path: &Path, threshold: f64) -> anyhow::Result<SourceInstance> {
    let alphabet = path
        .parent()
        .and_then(Path::parent)
        .and_then(Path::file_name)
        .map(|n| n.to_string_lossy().into_owned());
    Ok(SourceInstance {
        class_id: ClassId(i),
        alphabet,
        path: Some(path.to_path_buf()),
        image: load_image(path, threshold)?,
    })
}

fn pick_sources(
    index: &DatasetIndex,
    task: Task,
    classes: usize,
    seed: u64,
    threshold: f64,
) -> anyhow::Result<Vec<SourceInstance>> {
    let mut rng = seed::rng(seed);
    let chosen: Vec<ClassId> = match task {
        Task::NewExemplars => vec![ClassId(rng.random_range(0..index.classes().len()))],
        Task::WithinAlphabet => {
            let eligible: Vec<_> = index
                .alphabets()
                .iter()
                .filter(|a| a.classes.len() >= classes)
                .collect();
            let alphabet = eligible.choose(&mut rng).ok_or_else(|| {
                agp::Error::Infeasible(format!("no alphabet has {classes} classes"))
            })?;
            index::sample(&mut rng, alphabet.classes.len(), classes)
                .into_iter()
                .map(|i| alphabet.classes[i])
                .collect()
        }
        Task::Unconstrained => {
            if index.classes().len() < classes {
                return Err(agp::Error::Infeasible(format!(
                    "dataset has fewer than {classes} classes"
                ))
                .into());
            }
            index::sample(&mut rng, index.classes().len(), classes)
                .into_iter()
                .map(ClassId)
                .collect()
        }
    };
    chosen
        .into_iter()
        .map(|id| {
            let entry = index.class(id);
            let path = &entry.instances[rng.random_range(0..entry.instances.len())];
            Ok(SourceInstance {
                class_id: id,
                alphabet: Some(index.alphabet_of(id).name.clone()),
                path: Some(path.clone()),
                image: load_image(path, threshold)?,
            })
        })
        .collect()
}

fn job_from_provenance(
    prov: &Provenance,
    cfg: &mut Config,
    threshold: f64,
) -> anyhow::Result<(GenerationJob, u64)> {
    let sources = prov
        .sources
        .iter()
        .map(|s| {
            let path = s.path.as_ref().ok_or_else(|| {
                agp::Error::Config("provenance source has no recorded path".into())
            })?;
            Ok(SourceInstance {
                class_id: s.class_id,
                alphabet: s.alphabet.clone(),
                path: Some(path.clone()),
                image: load_image(path, threshold)?,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let o = &prov.options;
    cfg.density = o.density;
    cfg.vae = o.vae;
    cfg.latent = o.strategy;
    cfg.thresholds.binarize = o.threshold;
    cfg.max_attempts = o.max_attempts;
    cfg.em = o.em;
    let job = GenerationJob {
        task: prov.task,
        sources,
        per_class_agps: prov.per_class_agps,
        k_range: prov.k_range.clone(),
        variants_requested: prov.variants_requested,
    };
    Ok((job, prov.seed))
}

pub fn run(args: GenerateArgs) -> anyhow::Result<()> {
    let mut cfg = crate::resolve_config(&args.common)?;
    crate::init_pool(cfg.jobs)?;
    let threshold = cfg.thresholds.image;
    let (job, seed) = match &args.provenance {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let prov: Provenance = serde_json::from_str(&text)
                .map_err(|e| agp::Error::Config(format!("provenance: {e}")))?;
            job_from_provenance(&prov, &mut cfg, threshold)?
        }
        None => {
            if let Some(e) = args.epochs {
                cfg.vae.epochs = e;
            }
            if let Some(d) = args.per_class {
                cfg.per_class_agps = d;
            }
            cfg.validate()?;
            let task = Task::from(args.task);
            let sources = if args.sources.is_empty() {
                let index = super::load_index(&cfg)?;
                pick_sources(&index, task, args.classes, seed::derive(cfg.seed, 3), threshold)?
            } else {
                args.sources
                    .iter()
                    .enumerate()
                    .map(|(i, p)| source_from_path(i, p, threshold))
                    .collect::<anyhow::Result<_>>()?
            };
            let job = GenerationJob {
                task,
                sources,
                per_class_agps: cfg.per_class_agps,
                k_range: cfg.gen_k_range.clone(),
                variants_requested: args.count,
            };
            (job, cfg.seed)
        }
    };

    let outcome = generate_variants(&job, &cfg.gen_options(), seed)?;
    super::ensure_dir(&args.out)?;
    let checkpoint = "vae_checkpoint.json";
    save_checkpoint(&outcome.params, &args.out.join(checkpoint))?;
    std::fs::write(
        args.out.join("loss_curve.csv"),
        loss_curve_csv(&outcome.variants.provenance.loss_curve),
    )?;
    let mut provenance = outcome.variants.provenance.clone();
    provenance.checkpoint = Some(PathBuf::from(checkpoint));
    super::write_json(&args.out.join("provenance.json"), &provenance)?;

    let images = &outcome.variants.images;
    for (rec, img) in provenance
        .variants
        .iter()
        .filter(|r| r.accepted_attempt.is_some())
        .zip(images)
    {
        img.image()
            .save_png(&args.out.join(format!("variant_{:03}.png", rec.index)))?;
    }
    let thumbs = job
        .sources
        .iter()
        .map(|s| rasterize(&to_point_cloud(&s.image)?, VAE_FRAME))
        .collect::<agp::Result<Vec<_>>>()?;
    let variants: Vec<_> = images.iter().map(|s| s.image()).collect();
    crate::render::contact_sheet(&thumbs, &variants, 5, 3)
        .save(args.out.join("contact_sheet.png"))
        .context("writing contact sheet")?;

    let failures = outcome.variants.failures();
    println!(
        "{} variants written to {} ({} failed), final loss {:.3}",
        images.len(),
        args.out.display(),
        failures,
        provenance.loss_curve.last().map_or(f64::NAN, |s| s.total)
    );
    if failures > 0 {
        eprintln!("warning: {failures} variants produced no acceptable skeleton");
    }
    Ok(())
}
