//! The generative pipeline: prototype training sets, VAE training, latent
//! sampling, decoding and skeleton refinement.

use std::path::PathBuf;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agp::prototype_from_image;
use crate::dataset::{rasterize_soft, BinaryImage, ClassId, Raster, CLASSIFY_FRAME, VAE_FRAME};
use crate::error::{Error, Result};
use crate::gmm::EmOptions;
use crate::seed;
use crate::skeleton::{binarize, is_thin, skeletonize, SkeletonImage, DEFAULT_THRESHOLD};
use crate::vae::{
    decode, encode, interpolate_pair, sample_latent, train, EpochStats, LatentStrategy, TrainConfig,
    VaeParams,
};

pub const DEFAULT_PER_CLASS: usize = 500;
pub const DEFAULT_K_RANGE: [usize; 5] = [6, 7, 8, 9, 10];
pub const DEFAULT_MAX_ATTEMPTS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// New exemplars of one character from a single instance.
    NewExemplars,
    /// New characters for one alphabet, one instance per source class.
    WithinAlphabet,
    /// New characters from classes drawn across alphabets.
    Unconstrained,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SourceInstance {
    pub class_id: ClassId,
    pub alphabet: Option<String>,
    pub path: Option<PathBuf>,
    pub image: BinaryImage,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerationJob {
    pub task: Task,
    pub sources: Vec<SourceInstance>,
    pub per_class_agps: usize,
    pub k_range: Vec<usize>,
    pub variants_requested: usize,
}

impl GenerationJob {
    pub fn new(task: Task, sources: Vec<SourceInstance>, variants_requested: usize) -> Self {
        Self {
            task,
            sources,
            per_class_agps: DEFAULT_PER_CLASS,
            k_range: DEFAULT_K_RANGE.to_vec(),
            variants_requested,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sources.is_empty() {
            return Err(Error::Contract("generation job has no sources".into()));
        }
        match self.task {
            Task::NewExemplars if self.sources.len() != 1 => {
                return Err(Error::Contract(format!(
                    "new-exemplar jobs take exactly 1 source instance, got {}",
                    self.sources.len()
                )));
            }
            Task::WithinAlphabet => {
                let first = &self.sources[0].alphabet;
                if first.is_none() || self.sources.iter().any(|s| &s.alphabet != first) {
                    return Err(Error::Contract(
                        "within-alphabet sources must all name the same alphabet".into(),
                    ));
                }
            }
            _ => {}
        }
        let mut ids: Vec<ClassId> = self.sources.iter().map(|s| s.class_id).collect();
        ids.sort();
        ids.dedup();
        if ids.len() != self.sources.len() {
            return Err(Error::Contract("each source class may appear only once".into()));
        }
        if self.k_range.is_empty() || self.k_range.contains(&0) {
            return Err(Error::Contract("k_range must be non-empty and positive".into()));
        }
        if self.per_class_agps == 0 || !self.per_class_agps.is_multiple_of(self.k_range.len()) {
            return Err(Error::Contract(format!(
                "per_class_agps {} is not a positive multiple of |k_range| = {}",
                self.per_class_agps,
                self.k_range.len()
            )));
        }
        Ok(())
    }

    fn class_index(&self, id: ClassId) -> usize {
        self.sources
            .iter()
            .position(|s| s.class_id == id)
            .expect("label comes from this job")
    }
}

/// Tunables of the generation stage that are not part of the job itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenOptions {
    pub density: usize,
    pub vae: TrainConfig,
    pub strategy: LatentStrategy,
    pub threshold: f64,
    pub max_attempts: usize,
    pub em: EmOptions,
}

impl Default for GenOptions {
    fn default() -> Self {
        Self {
            density: crate::agp::DEFAULT_DENSITY,
            vae: TrainConfig::default(),
            strategy: LatentStrategy::interpolate(),
            threshold: DEFAULT_THRESHOLD,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            em: EmOptions::default(),
        }
    }
}

impl GenOptions {
    pub fn validate(&self) -> Result<()> {
        self.vae.validate()?;
        self.strategy.validate()?;
        if self.density == 0 || self.max_attempts == 0 {
            return Err(Error::Config("density and max_attempts must be >= 1".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!(
                "binarization threshold {} outside (0, 1)",
                self.threshold
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabelledRaster {
    pub class_id: ClassId,
    pub k: usize,
    pub raster: Raster,
}

/// `per_class_agps / |k_range|` prototypes per (class, k), rasterized to the
/// VAE frame. Output is ordered by class, then k, then replicate.
pub fn synthesize_training_set(
    job: &GenerationJob,
    opts: &GenOptions,
    seed: u64,
) -> Result<Vec<LabelledRaster>> {
    job.validate()?;
    let k_max = *job.k_range.iter().max().expect("validated non-empty");
    for s in &job.sources {
        if s.image.count_on() < k_max {
            return Err(Error::Infeasible(format!(
                "source of class {} has {} foreground pixels, fewer than k = {k_max}",
                s.class_id.0,
                s.image.count_on()
            )));
        }
    }
    let reps = job.per_class_agps / job.k_range.len();
    let tasks: Vec<(usize, usize, usize)> = (0..job.sources.len())
        .flat_map(|c| {
            job.k_range
                .iter()
                .flat_map(move |&k| (0..reps).map(move |r| (c, k, r)))
        })
        .collect();
    tasks
        .par_iter()
        .map(|&(c, k, r)| {
            let s = seed::derive(seed::derive(seed::derive(seed, c as u64), k as u64), r as u64);
            let src = &job.sources[c];
            let proto = prototype_from_image(
                &src.image,
                k,
                opts.density,
                s,
                CLASSIFY_FRAME as f64,
                &opts.em,
            )?;
            Ok(LabelledRaster {
                class_id: src.class_id,
                k,
                raster: rasterize_soft(&proto.points, VAE_FRAME)?,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub class_id: ClassId,
    pub alphabet: Option<String>,
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantRecord {
    pub index: usize,
    pub seed: u64,
    /// 1-based attempt that produced the accepted image, `None` if every
    /// attempt was rejected.
    pub accepted_attempt: Option<usize>,
}

/// Everything needed to rerun a job.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub task: Task,
    pub sources: Vec<SourceRecord>,
    pub per_class_agps: usize,
    pub k_range: Vec<usize>,
    pub variants_requested: usize,
    pub options: GenOptions,
    pub seed: u64,
    pub training_set_size: usize,
    pub loss_curve: Vec<EpochStats>,
    pub variants: Vec<VariantRecord>,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VariantSet {
    pub images: Vec<SkeletonImage>,
    pub provenance: Provenance,
}

impl VariantSet {
    pub fn failures(&self) -> usize {
        self.provenance
            .variants
            .iter()
            .filter(|v| v.accepted_attempt.is_none())
            .count()
    }
}

pub struct GenerationOutcome {
    pub variants: VariantSet,
    pub params: VaeParams,
}

/// Runs the whole pipeline. Seeds: stream 0 builds the training set,
/// stream 1 trains the VAE, stream 2 drives variant `i` through
/// `derive(derive(seed, 2), i)`.
///
/// A variant whose decoded skeleton is blank or not thin is resampled, up to
/// `max_attempts` times; variants that never succeed are recorded with
/// `accepted_attempt: None` and contribute no image.
pub fn generate_variants(
    job: &GenerationJob,
    opts: &GenOptions,
    seed: u64,
) -> Result<GenerationOutcome> {
    job.validate()?;
    opts.validate()?;
    let training = synthesize_training_set(job, opts, seed::derive(seed, 0))?;
    let rasters: Vec<Raster> = training.iter().map(|l| l.raster.clone()).collect();
    let trained = train(&rasters, opts.vae.arch(), &opts.vae, seed::derive(seed, 1))?;
    let params = trained.params;
    let encodings = encode(&params, &rasters)?;

    // indices of training encodings per source class
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); job.sources.len()];
    for (i, l) in training.iter().enumerate() {
        by_class[job.class_index(l.class_id)].push(i);
    }

    let draw_latent = |rng_seed: u64| -> Result<Vec<f64>> {
        let j = params.arch.latent_dim;
        match opts.strategy {
            LatentStrategy::Prior => sample_latent(j, &encodings, &opts.strategy, rng_seed),
            LatentStrategy::Interpolate { .. } => {
                let mut rng = seed::rng(rng_seed);
                let (a, b) = if job.task == Task::NewExemplars || by_class.len() < 2 {
                    let pool = &by_class[rng.random_range(0..by_class.len())];
                    if pool.len() < 2 {
                        return Err(Error::Contract(
                            "interpolation needs two encodings of the class".into(),
                        ));
                    }
                    let a = rng.random_range(0..pool.len());
                    let mut b = rng.random_range(0..pool.len() - 1);
                    if b >= a {
                        b += 1;
                    }
                    (pool[a], pool[b])
                } else {
                    let ca = rng.random_range(0..by_class.len());
                    let mut cb = rng.random_range(0..by_class.len() - 1);
                    if cb >= ca {
                        cb += 1;
                    }
                    let pa = &by_class[ca];
                    let pb = &by_class[cb];
                    (
                        pa[rng.random_range(0..pa.len())],
                        pb[rng.random_range(0..pb.len())],
                    )
                };
                interpolate_pair(&encodings[a].mu, &encodings[b].mu, &opts.strategy, &mut rng)
            }
        }
    };

    let variant_stream = seed::derive(seed, 2);
    let produced: Vec<(VariantRecord, Option<SkeletonImage>)> = (0..job.variants_requested)
        .into_par_iter()
        .map(|index| {
            let vseed = seed::derive(variant_stream, index as u64);
            for attempt in 1..=opts.max_attempts {
                let z = draw_latent(seed::derive(vseed, attempt as u64))?;
                let decoded = decode(&params, &z)?;
                let skel = skeletonize(&binarize(&decoded, opts.threshold)?);
                if !skel.image().is_blank() && is_thin(skel.image()) {
                    let rec = VariantRecord {
                        index,
                        seed: vseed,
                        accepted_attempt: Some(attempt),
                    };
                    return Ok((rec, Some(skel)));
                }
                log::debug!("variant {index}: attempt {attempt} rejected");
            }
            let rec = VariantRecord {
                index,
                seed: vseed,
                accepted_attempt: None,
            };
            Ok((rec, None))
        })
        .collect::<Result<_>>()?;

    let mut images = Vec::new();
    let mut records = Vec::new();
    for (rec, img) in produced {
        if rec.accepted_attempt.is_none() {
            log::warn!("variant {} failed after {} attempts", rec.index, opts.max_attempts);
        }
        images.extend(img);
        records.push(rec);
    }
    let provenance = Provenance {
        task: job.task,
        sources: job
            .sources
            .iter()
            .map(|s| SourceRecord {
                class_id: s.class_id,
                alphabet: s.alphabet.clone(),
                path: s.path.clone(),
            })
            .collect(),
        per_class_agps: job.per_class_agps,
        k_range: job.k_range.clone(),
        variants_requested: job.variants_requested,
        options: opts.clone(),
        seed,
        training_set_size: training.len(),
        loss_curve: trained.curve,
        variants: records,
        checkpoint: None,
    };
    Ok(GenerationOutcome {
        variants: VariantSet { images, provenance },
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{generate_specs, SynthConfig};

    fn sources(n: usize, same_alphabet: bool) -> Vec<SourceInstance> {
        let specs = generate_specs(&SynthConfig::default());
        (0..n)
            .map(|i| {
                let (a, c) = if same_alphabet { (0, i) } else { (i, 0) };
                SourceInstance {
                    class_id: ClassId(a * 100 + c),
                    alphabet: Some(specs[a].name.clone()),
                    path: None,
                    image: specs[a].characters[c].render(0, 105),
                }
            })
            .collect()
    }

    fn small_opts(epochs: usize) -> GenOptions {
        GenOptions {
            vae: TrainConfig {
                latent_dim: 4,
                lr: 1e-3,
                batch: 16,
                epochs,
            },
            ..GenOptions::default()
        }
    }

    #[test]
    fn job_validation() {
        let mut job = GenerationJob::new(Task::NewExemplars, sources(2, true), 1);
        assert!(job.validate().is_err());
        job.sources.truncate(1);
        job.validate().unwrap();
        job.per_class_agps = 12;
        assert!(job.validate().is_err());
        job.per_class_agps = 10;
        job.k_range.clear();
        assert!(job.validate().is_err());

        let mut within = GenerationJob::new(Task::WithinAlphabet, sources(3, true), 1);
        within.validate().unwrap();
        within.sources[1].alphabet = Some("Other".into());
        assert!(within.validate().is_err());

        let mut dup = GenerationJob::new(Task::Unconstrained, sources(2, false), 1);
        dup.sources[1].class_id = dup.sources[0].class_id;
        assert!(dup.validate().is_err());
    }

    #[test]
    fn training_set_has_equal_allocation() {
        let mut job = GenerationJob::new(Task::Unconstrained, sources(2, false), 0);
        job.per_class_agps = 10;
        let set = synthesize_training_set(&job, &GenOptions::default(), 5).unwrap();
        assert_eq!(set.len(), 20);
        for c in &job.sources {
            for &k in &job.k_range {
                let n = set.iter().filter(|l| l.class_id == c.class_id && l.k == k).count();
                assert_eq!(n, 2);
            }
        }
        assert!(set.iter().all(|l| l.raster.width() == 28 && l.raster.height() == 28));
        assert_eq!(set, synthesize_training_set(&job, &GenOptions::default(), 5).unwrap());
    }

    #[test]
    fn sparse_source_is_infeasible() {
        let mut img = BinaryImage::blank(105, 105).unwrap();
        for x in 0..5 {
            img.set(x + 50, 50, true);
        }
        let src = SourceInstance {
            class_id: ClassId(0),
            alphabet: None,
            path: None,
            image: img,
        };
        let job = GenerationJob::new(Task::NewExemplars, vec![src], 1);
        assert!(matches!(
            synthesize_training_set(&job, &GenOptions::default(), 0),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn zero_variants_still_trains() {
        let mut job = GenerationJob::new(Task::NewExemplars, sources(1, true), 0);
        job.per_class_agps = 10;
        let out = generate_variants(&job, &small_opts(1), 3).unwrap();
        assert!(out.variants.images.is_empty());
        assert_eq!(out.variants.provenance.loss_curve.len(), 1);
        assert_eq!(out.variants.provenance.training_set_size, 10);
        assert!(out.params.all_finite());
    }

    #[test]
    fn variants_are_thin_nonblank_and_reproducible() {
        let mut job = GenerationJob::new(Task::WithinAlphabet, sources(2, true), 3);
        job.per_class_agps = 20;
        let opts = small_opts(3);
        let a = generate_variants(&job, &opts, 11).unwrap();
        let b = generate_variants(&job, &opts, 11).unwrap();
        assert_eq!(a.variants, b.variants);
        assert_eq!(
            a.variants.images.len() + a.variants.failures(),
            job.variants_requested
        );
        for img in &a.variants.images {
            assert!(!img.image().is_blank());
            assert!(is_thin(img.image()));
            assert_eq!(img.image().width(), 28);
        }
    }
}
