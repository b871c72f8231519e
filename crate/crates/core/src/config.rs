//! JSON configuration shared by the command-line tool.
//!
//! Every key is optional and defaults to the tuned value; unknown keys are
//! rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agp::{DEFAULT_DENSITY, DEFAULT_K};
use crate::dataset::{CLASSIFY_FRAME, DEFAULT_THRESHOLD};
use crate::episodes::AgpConfig;
use crate::error::{Error, Result};
use crate::genpipe::{GenOptions, DEFAULT_K_RANGE, DEFAULT_MAX_ATTEMPTS, DEFAULT_PER_CLASS};
use crate::gmm::EmOptions;
use crate::similarity::SimilarityParams;
use crate::vae::{LatentStrategy, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Ink threshold when loading character images.
    pub image: f64,
    /// Binarization threshold applied to decoded VAE outputs.
    pub binarize: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            image: DEFAULT_THRESHOLD,
            binarize: crate::skeleton::DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub data_root: Option<PathBuf>,
    pub radius: f64,
    pub beta: f64,
    pub density: usize,
    pub classify_k: usize,
    pub gen_k_range: Vec<usize>,
    /// Prototypes synthesized per source class for VAE training.
    #[serde(rename = "D", alias = "per_class_agps")]
    pub per_class_agps: usize,
    pub shift_px: f64,
    #[serde(alias = "rotations_deg")]
    pub rotations: Vec<f64>,
    pub vae: TrainConfig,
    pub latent: LatentStrategy,
    pub max_attempts: usize,
    pub em: EmOptions,
    pub thresholds: Thresholds,
    pub seed: u64,
    /// Restricts the dataset to alphabets under this top-level split
    /// directory (for example `images_evaluation`).
    pub split: Option<String>,
    pub jobs: Option<usize>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            data_root: None,
            radius: 1.6,
            beta: 1.4,
            density: DEFAULT_DENSITY,
            classify_k: DEFAULT_K,
            gen_k_range: DEFAULT_K_RANGE.to_vec(),
            per_class_agps: DEFAULT_PER_CLASS,
            shift_px: 3.0,
            rotations: vec![15.0, -15.0, 25.0, -25.0],
            vae: TrainConfig::default(),
            latent: LatentStrategy::interpolate(),
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            em: EmOptions::default(),
            thresholds: Thresholds::default(),
            seed: 0,
            split: None,
            jobs: None,
        }
    }
}

impl Config {
    pub fn from_json(json: &str) -> Result<Self> {
        let cfg: Config =
            serde_json::from_str(json).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.similarity().validate()?;
        self.gen_options().validate()?;
        if self.density == 0 || self.classify_k == 0 {
            return Err(Error::Config("density and classify_k must be >= 1".into()));
        }
        if self.gen_k_range.is_empty() || self.gen_k_range.contains(&0) {
            return Err(Error::Config("gen_k_range must be non-empty and positive".into()));
        }
        if self.per_class_agps == 0 || !self.per_class_agps.is_multiple_of(self.gen_k_range.len()) {
            return Err(Error::Config(format!(
                "D = {} must be a positive multiple of |gen_k_range| = {}",
                self.per_class_agps,
                self.gen_k_range.len()
            )));
        }
        let t = self.thresholds.image;
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::Config(format!("image threshold {t} outside (0, 1]")));
        }
        if self.em.tol <= 0.0 || self.em.max_iter == 0 || self.em.reg <= 0.0 {
            return Err(Error::Config(format!("invalid EM options {:?}", self.em)));
        }
        if self.jobs == Some(0) {
            return Err(Error::Config("jobs must be >= 1".into()));
        }
        Ok(())
    }

    pub fn similarity(&self) -> SimilarityParams {
        SimilarityParams {
            radius: self.radius,
            beta: self.beta,
            shift_px: self.shift_px,
            rotations_deg: self.rotations.clone(),
        }
    }

    pub fn agp(&self) -> AgpConfig {
        AgpConfig {
            k: self.classify_k,
            density: self.density,
            frame: CLASSIFY_FRAME as f64,
            em: self.em,
        }
    }

    pub fn gen_options(&self) -> GenOptions {
        GenOptions {
            density: self.density,
            vae: self.vae,
            strategy: self.latent,
            threshold: self.thresholds.binarize,
            max_attempts: self.max_attempts,
            em: self.em,
        }
    }
}
