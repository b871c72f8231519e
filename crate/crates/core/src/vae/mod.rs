//! Convolutional variational autoencoder over small square rasters.
//!
//! Activations are kept as `(pixels, channels)` matrices so convolutions run
//! as im2col + matrix products; transposed convolutions are implemented as
//! the exact adjoint of the matching strided convolution.

pub mod layers;
mod model;
mod optim;

use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use self::model::{
    bce_with_logits, kl_divergence, loss, loss_and_grad, sigmoid, LossParts, VaeArch, VaeParams,
    TENSOR_NAMES,
};
pub use self::optim::{Adam, AdamConfig};
use crate::dataset::Raster;
use crate::error::{Error, Result};
use crate::seed;

/// Posterior parameters for one input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Encoding {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

fn to_batch(arch: &VaeArch, xs: &[Raster]) -> Result<Array2<f64>> {
    let side = arch.input_side;
    let mut batch = Array2::zeros((xs.len(), side * side));
    for (mut row, r) in batch.rows_mut().into_iter().zip(xs) {
        if r.width() != side || r.height() != side {
            return Err(Error::Contract(format!(
                "raster is {}x{}, network expects {side}x{side}",
                r.width(),
                r.height()
            )));
        }
        row.assign(&ndarray::ArrayView1::from(r.values()));
    }
    Ok(batch)
}

/// Encodes a batch. No sampling happens here.
pub fn encode(p: &VaeParams, xs: &[Raster]) -> Result<Vec<Encoding>> {
    let batch = to_batch(&p.arch, xs)?;
    let (mu, logvar, _) = model::encoder_forward(p, &batch);
    let out: Vec<Encoding> = mu
        .rows()
        .into_iter()
        .zip(logvar.rows())
        .map(|(m, lv)| Encoding {
            mu: m.to_vec(),
            sigma: lv.iter().map(|l| (0.5 * l).exp()).collect(),
        })
        .collect();
    let finite = out.iter().all(|e| {
        e.mu.iter().all(|v| v.is_finite()) && e.sigma.iter().all(|s| s.is_finite() && *s > 0.0)
    });
    if !finite {
        return Err(Error::numerical("encoder activations", None));
    }
    Ok(out)
}

/// `z = mu + sigma * eps`, elementwise.
pub fn reparameterize(mu: &[f64], sigma: &[f64], eps: &[f64]) -> Result<Vec<f64>> {
    if mu.len() != sigma.len() || mu.len() != eps.len() {
        return Err(Error::Contract("latent vectors differ in length".into()));
    }
    if sigma.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Contract("sigma must be strictly positive".into()));
    }
    Ok(mu
        .iter()
        .zip(sigma)
        .zip(eps)
        .map(|((m, s), e)| m + s * e)
        .collect())
}

/// Decodes latent codes into Bernoulli means in `[0, 1]`.
pub fn decode_batch(p: &VaeParams, zs: &[Vec<f64>]) -> Result<Vec<Raster>> {
    let j = p.arch.latent_dim;
    let mut z = Array2::zeros((zs.len(), j));
    for (mut row, v) in z.rows_mut().into_iter().zip(zs) {
        if v.len() != j {
            return Err(Error::Contract(format!(
                "latent code has length {}, expected {j}",
                v.len()
            )));
        }
        row.assign(&ndarray::ArrayView1::from(v.as_slice()));
    }
    let (logits, _) = model::decoder_forward(p, &z);
    let side = p.arch.input_side;
    logits
        .rows()
        .into_iter()
        .map(|row| {
            let vals: Vec<f64> = row.iter().map(|&l| sigmoid(l)).collect();
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::numerical("decoder output", None));
            }
            Raster::from_values(side, side, vals)
        })
        .collect()
}

pub fn decode(p: &VaeParams, z: &[f64]) -> Result<Raster> {
    Ok(decode_batch(p, &[z.to_vec()])?.remove(0))
}

/// Negative ELBO on a batch with explicit noise `eps` of shape `(batch, J)`.
pub fn elbo_loss(p: &VaeParams, xs: &[Raster], eps: &Array2<f64>) -> Result<LossParts> {
    if xs.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let batch = to_batch(&p.arch, xs)?;
    if eps.dim() != (xs.len(), p.arch.latent_dim) {
        return Err(Error::Contract(format!(
            "noise shape {:?} does not match batch of {} with J = {}",
            eps.dim(),
            xs.len(),
            p.arch.latent_dim
        )));
    }
    loss(p, &batch, eps)
}

/// Standard-normal noise for a batch.
pub fn draw_noise(rng: &mut seed::Rng, n: usize, j: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, j), || rng.sample(StandardNormal))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub latent_dim: usize,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            latent_dim: 16,
            lr: 1e-4,
            batch: 32,
            epochs: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.batch == 0 || !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("invalid VAE training settings {self:?}")));
        }
        Ok(())
    }

    pub fn arch(&self) -> VaeArch {
        VaeArch {
            latent_dim: self.latent_dim,
            ..VaeArch::default()
        }
    }
}

/// Epoch means of the per-batch losses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub total: f64,
    pub recon_bce: f64,
    pub kl: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: VaeParams,
    pub curve: Vec<EpochStats>,
}

/// Trains from Glorot initialization with Adam.
///
/// Initialization uses stream 0 of `seed`; shuffling and noise use stream 1.
/// Fails with the 1-based epoch index if the loss stops being finite.
pub fn train(data: &[Raster], arch: VaeArch, cfg: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    let params = VaeParams::init(arch, seed::derive(seed, 0))?;
    train_from(params, data, cfg, seed)
}

pub fn train_from(
    mut params: VaeParams,
    data: &[Raster],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Contract("training set is empty".into()));
    }
    let arch = params.arch;
    let all = to_batch(&arch, data)?;
    let mut adam = Adam::new(
        &params,
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
    );
    let mut rng = seed::rng(seed::derive(seed, 1));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = LossParts::default();
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch) {
            let x = all.select(ndarray::Axis(0), chunk);
            let eps = draw_noise(&mut rng, chunk.len(), arch.latent_dim);
            let (parts, grads) = loss_and_grad(&params, &x, &eps)
                .map_err(|_| Error::numerical("VAE training", Some(epoch)))?;
            adam.update(&mut params, &grads);
            sums.total += parts.total;
            sums.recon_bce += parts.recon_bce;
            sums.kl += parts.kl;
            batches += 1;
        }
        if !params.all_finite() {
            return Err(Error::numerical("VAE training", Some(epoch)));
        }
        let b = batches as f64;
        let stats = EpochStats {
            epoch,
            total: sums.total / b,
            recon_bce: sums.recon_bce / b,
            kl: sums.kl / b,
        };
        log::debug!(
            "vae epoch {epoch}: total {:.4} recon {:.4} kl {:.4}",
            stats.total,
            stats.recon_bce,
            stats.kl
        );
        curve.push(stats);
    }
    Ok(TrainOutcome { params, curve })
}

/// Mean loss over a whole dataset with noise drawn from `seed`.
pub fn evaluate(p: &VaeParams, data: &[Raster], batch: usize, seed: u64) -> Result<LossParts> {
    if data.is_empty() || batch == 0 {
        return Err(Error::Contract("nothing to evaluate".into()));
    }
    let mut rng = seed::rng(seed);
    let mut sums = LossParts::default();
    for chunk in data.chunks(batch) {
        let eps = draw_noise(&mut rng, chunk.len(), p.arch.latent_dim);
        let parts = elbo_loss(p, chunk, &eps)?;
        let w = chunk.len() as f64;
        sums.total += parts.total * w;
        sums.recon_bce += parts.recon_bce * w;
        sums.kl += parts.kl * w;
    }
    let n = data.len() as f64;
    Ok(LossParts {
        total: sums.total / n,
        recon_bce: sums.recon_bce / n,
        kl: sums.kl / n,
    })
}

/// CSV text of a loss curve with a header row.
pub fn loss_curve_csv(curve: &[EpochStats]) -> String {
    let mut out = String::from("epoch,total,recon_bce,kl\n");
    for s in curve {
        out.push_str(&format!("{},{},{},{}\n", s.epoch, s.total, s.recon_bce, s.kl));
    }
    out
}

/// How new latent codes are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case", deny_unknown_fields)]
pub enum LatentStrategy {
    Prior,
    Interpolate {
        t_min: f64,
        t_max: f64,
        jitter_sd: f64,
    },
}

impl LatentStrategy {
    pub fn interpolate() -> Self {
        LatentStrategy::Interpolate {
            t_min: 0.25,
            t_max: 0.75,
            jitter_sd: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LatentStrategy::Prior => Ok(()),
            LatentStrategy::Interpolate {
                t_min,
                t_max,
                jitter_sd,
            } => {
                if (0.0..=1.0).contains(&t_min)
                    && (0.0..=1.0).contains(&t_max)
                    && t_min <= t_max
                    && jitter_sd >= 0.0
                    && jitter_sd.is_finite()
                {
                    Ok(())
                } else {
                    Err(Error::Contract(format!("invalid latent strategy {self:?}")))
                }
            }
        }
    }
}

/// `(1 - t) mu_a + t mu_b + jitter`, with `t` and the jitter drawn per `strategy`.
pub fn interpolate_pair(
    a: &[f64],
    b: &[f64],
    strategy: &LatentStrategy,
    rng: &mut seed::Rng,
) -> Result<Vec<f64>> {
    let LatentStrategy::Interpolate {
        t_min,
        t_max,
        jitter_sd,
    } = *strategy
    else {
        return Err(Error::Contract("pair interpolation needs the interpolate strategy".into()));
    };
    strategy.validate()?;
    if a.len() != b.len() {
        return Err(Error::Contract("latent vectors differ in length".into()));
    }
    let t = if t_max > t_min {
        rng.random_range(t_min..t_max)
    } else {
        t_min
    };
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| {
            let noise: f64 = rng.sample(StandardNormal);
            (1.0 - t) * x + t * y + jitter_sd * noise
        })
        .collect())
}

/// Draws one latent code. `Interpolate` mixes the means of two distinct
/// random encodings.
pub fn sample_latent(
    latent_dim: usize,
    encodings: &[Encoding],
    strategy: &LatentStrategy,
    seed: u64,
) -> Result<Vec<f64>> {
    strategy.validate()?;
    let mut rng = seed::rng(seed);
    match strategy {
        LatentStrategy::Prior => Ok((0..latent_dim).map(|_| rng.sample(StandardNormal)).collect()),
        LatentStrategy::Interpolate { .. } => {
            if encodings.len() < 2 {
                return Err(Error::Contract(
                    "interpolation needs at least two encodings".into(),
                ));
            }
            if encodings.iter().any(|e| e.mu.len() != latent_dim) {
                return Err(Error::Contract("encoding has the wrong latent dimension".into()));
            }
            let a = rng.random_range(0..encodings.len());
            let mut b = rng.random_range(0..encodings.len() - 1);
            if b >= a {
                b += 1;
            }
            interpolate_pair(&encodings[a].mu, &encodings[b].mu, strategy, &mut rng)
        }
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorShape {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    format_version: u32,
    manifest: Vec<TensorShape>,
    params: VaeParams,
}

fn manifest(p: &VaeParams) -> Vec<TensorShape> {
    TENSOR_NAMES
        .iter()
        .zip(p.shapes())
        .map(|(n, s)| TensorShape {
            name: n.to_string(),
            shape: s,
        })
        .collect()
}

pub fn checkpoint_to_json(p: &VaeParams) -> Result<String> {
    Ok(serde_json::to_string(&Checkpoint {
        format_version: CHECKPOINT_VERSION,
        manifest: manifest(p),
        params: p.clone(),
    })?)
}

/// Parses a checkpoint and checks its version, manifest and tensor shapes.
pub fn checkpoint_from_json(json: &str) -> Result<VaeParams> {
    let ck: Checkpoint = serde_json::from_str(json)?;
    if ck.format_version != CHECKPOINT_VERSION {
        return Err(Error::Contract(format!(
            "unsupported checkpoint version {}",
            ck.format_version
        )));
    }
    let expected = manifest(&VaeParams::zeros(ck.params.arch)?);
    if ck.manifest != expected || manifest(&ck.params) != expected {
        return Err(Error::Contract(
            "checkpoint tensor shapes do not match its architecture".into(),
        ));
    }
    if !ck.params.all_finite() {
        return Err(Error::numerical("checkpoint weights", None));
    }
    Ok(ck.params)
}

pub fn save_checkpoint(p: &VaeParams, path: &Path) -> Result<()> {
    std::fs::write(path, checkpoint_to_json(p)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<VaeParams> {
    checkpoint_from_json(&std::fs::read_to_string(path)?)
}
