//! Network definition, forward pass and hand-written backward pass.

use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::layers::{add_bias, bias_grad, col2im, im2col, relu, relu_backward, Act, ConvGeom};
use crate::error::{Error, Result};
use crate::seed;

/// Layer sizes. The default is the 28 px network: two stride-2 3x3
/// convolutions (32, 64 filters), a dense head to `2 * latent_dim`, and a
/// decoder dense layer to 7x7x32 followed by transposed convolutions with
/// 64, 32 and 1 filters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaeArch {
    pub input_side: usize,
    pub enc_filters: [usize; 2],
    pub dec_channels: usize,
    pub dec_filters: [usize; 2],
    pub latent_dim: usize,
}

impl Default for VaeArch {
    fn default() -> Self {
        Self {
            input_side: 28,
            enc_filters: [32, 64],
            dec_channels: 32,
            dec_filters: [64, 32],
            latent_dim: 16,
        }
    }
}

pub(crate) struct Geoms {
    pub enc1: ConvGeom,
    pub enc2: ConvGeom,
    /// Transposed convolutions, stored as the convolution they are the adjoint of.
    pub dec1: ConvGeom,
    pub dec2: ConvGeom,
    pub dec3: ConvGeom,
}

impl VaeArch {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            self.enc_filters[0],
            self.enc_filters[1],
            self.dec_channels,
            self.dec_filters[0],
            self.dec_filters[1],
            self.latent_dim,
        ];
        if self.input_side == 0 || !self.input_side.is_multiple_of(4) || sizes.contains(&0) {
            return Err(Error::Config(format!("invalid VAE architecture {self:?}")));
        }
        Ok(())
    }

    pub fn pixels(&self) -> usize {
        self.input_side * self.input_side
    }

    /// Side after each encoder stage: `input -> input/2 -> input/4`.
    pub fn sides(&self) -> [usize; 3] {
        [self.input_side, self.input_side / 2, self.input_side / 4]
    }

    pub(crate) fn geoms(&self) -> Geoms {
        let [s0, s1, _] = self.sides();
        let [f1, f2] = self.enc_filters;
        let [d1, d2] = self.dec_filters;
        let geom = |in_side, in_c, out_c, stride| ConvGeom {
            in_side,
            in_c,
            out_c,
            kernel: 3,
            stride,
        };
        Geoms {
            enc1: geom(s0, 1, f1, 2),
            enc2: geom(s1, f1, f2, 2),
            dec1: geom(s1, d1, self.dec_channels, 2),
            dec2: geom(s0, d2, d1, 2),
            dec3: geom(s0, 1, d2, 1),
        }
    }

    fn flat_len(&self) -> usize {
        let s2 = self.sides()[2];
        s2 * s2 * self.enc_filters[1]
    }

    fn seed_len(&self) -> usize {
        let s2 = self.sides()[2];
        s2 * s2 * self.dec_channels
    }
}

/// All weights. Convolution kernels are `(3*3*in, out)` matrices; transposed
/// convolution kernels are stored as `(3*3*out, in)`, the kernel of the
/// convolution they are the adjoint of.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaeParams {
    pub arch: VaeArch,
    pub enc1_w: Array2<f64>,
    pub enc1_b: Array1<f64>,
    pub enc2_w: Array2<f64>,
    pub enc2_b: Array1<f64>,
    pub head_w: Array2<f64>,
    pub head_b: Array1<f64>,
    pub dec_dense_w: Array2<f64>,
    pub dec_dense_b: Array1<f64>,
    pub dec1_w: Array2<f64>,
    pub dec1_b: Array1<f64>,
    pub dec2_w: Array2<f64>,
    pub dec2_b: Array1<f64>,
    pub dec3_w: Array2<f64>,
    pub dec3_b: Array1<f64>,
}

pub const TENSOR_NAMES: [&str; 14] = [
    "enc1_w",
    "enc1_b",
    "enc2_w",
    "enc2_b",
    "head_w",
    "head_b",
    "dec_dense_w",
    "dec_dense_b",
    "dec1_w",
    "dec1_b",
    "dec2_w",
    "dec2_b",
    "dec3_w",
    "dec3_b",
];

impl VaeParams {
    pub fn zeros(arch: VaeArch) -> Result<Self> {
        arch.validate()?;
        let g = arch.geoms();
        let j = arch.latent_dim;
        let w = |r, c| Array2::zeros((r, c));
        let b = |n| Array1::zeros(n);
        Ok(Self {
            arch,
            enc1_w: w(g.enc1.patch_len(), g.enc1.out_c),
            enc1_b: b(g.enc1.out_c),
            enc2_w: w(g.enc2.patch_len(), g.enc2.out_c),
            enc2_b: b(g.enc2.out_c),
            head_w: w(arch.flat_len(), 2 * j),
            head_b: b(2 * j),
            dec_dense_w: w(j, arch.seed_len()),
            dec_dense_b: b(arch.seed_len()),
            dec1_w: w(g.dec1.patch_len(), g.dec1.out_c),
            dec1_b: b(g.dec1.in_c),
            dec2_w: w(g.dec2.patch_len(), g.dec2.out_c),
            dec2_b: b(g.dec2.in_c),
            dec3_w: w(g.dec3.patch_len(), g.dec3.out_c),
            dec3_b: b(g.dec3.in_c),
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(arch: VaeArch, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(arch)?;
        let mut rng = seed::rng(seed);
        let g = arch.geoms();
        let k2 = 9;
        let fans = [
            (k2, k2 * g.enc1.out_c),
            (k2 * g.enc2.in_c, k2 * g.enc2.out_c),
            (arch.flat_len(), 2 * arch.latent_dim),
            (arch.latent_dim, arch.seed_len()),
            (k2 * g.dec1.out_c, k2 * g.dec1.in_c),
            (k2 * g.dec2.out_c, k2 * g.dec2.in_c),
            (k2 * g.dec3.out_c, k2 * g.dec3.in_c),
        ];
        for (t, (fan_in, fan_out)) in p.weights_mut().into_iter().zip(fans) {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            t.mapv_inplace(|_| rng.random_range(-limit..limit));
        }
        Ok(p)
    }

    fn weights_mut(&mut self) -> [&mut Array2<f64>; 7] {
        [
            &mut self.enc1_w,
            &mut self.enc2_w,
            &mut self.head_w,
            &mut self.dec_dense_w,
            &mut self.dec1_w,
            &mut self.dec2_w,
            &mut self.dec3_w,
        ]
    }

    /// Every tensor as a flat slice, in [`TENSOR_NAMES`] order.
    pub fn tensors(&self) -> [&[f64]; 14] {
        fn f2(a: &Array2<f64>) -> &[f64] {
            a.as_slice().expect("standard layout")
        }
        fn f1(a: &Array1<f64>) -> &[f64] {
            a.as_slice().expect("standard layout")
        }
        [
            f2(&self.enc1_w),
            f1(&self.enc1_b),
            f2(&self.enc2_w),
            f1(&self.enc2_b),
            f2(&self.head_w),
            f1(&self.head_b),
            f2(&self.dec_dense_w),
            f1(&self.dec_dense_b),
            f2(&self.dec1_w),
            f1(&self.dec1_b),
            f2(&self.dec2_w),
            f1(&self.dec2_b),
            f2(&self.dec3_w),
            f1(&self.dec3_b),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 14] {
        [
            self.enc1_w.as_slice_mut().expect("standard layout"),
            self.enc1_b.as_slice_mut().expect("standard layout"),
            self.enc2_w.as_slice_mut().expect("standard layout"),
            self.enc2_b.as_slice_mut().expect("standard layout"),
            self.head_w.as_slice_mut().expect("standard layout"),
            self.head_b.as_slice_mut().expect("standard layout"),
            self.dec_dense_w.as_slice_mut().expect("standard layout"),
            self.dec_dense_b.as_slice_mut().expect("standard layout"),
            self.dec1_w.as_slice_mut().expect("standard layout"),
            self.dec1_b.as_slice_mut().expect("standard layout"),
            self.dec2_w.as_slice_mut().expect("standard layout"),
            self.dec2_b.as_slice_mut().expect("standard layout"),
            self.dec3_w.as_slice_mut().expect("standard layout"),
            self.dec3_b.as_slice_mut().expect("standard layout"),
        ]
    }

    /// Tensor shapes in [`TENSOR_NAMES`] order.
    pub fn shapes(&self) -> [Vec<usize>; 14] {
        let d2 = |a: &Array2<f64>| vec![a.nrows(), a.ncols()];
        let d1 = |a: &Array1<f64>| vec![a.len()];
        [
            d2(&self.enc1_w),
            d1(&self.enc1_b),
            d2(&self.enc2_w),
            d1(&self.enc2_b),
            d2(&self.head_w),
            d1(&self.head_b),
            d2(&self.dec_dense_w),
            d1(&self.dec_dense_b),
            d2(&self.dec1_w),
            d1(&self.dec1_b),
            d2(&self.dec2_w),
            d1(&self.dec2_b),
            d2(&self.dec3_w),
            d1(&self.dec3_b),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

fn reshape(m: Array2<f64>, rows: usize, cols: usize) -> Array2<f64> {
    m.as_standard_layout()
        .into_owned()
        .into_shape_with_order((rows, cols))
        .expect("element count preserved")
}

/// Encoder activations kept for the backward pass.
pub(crate) struct EncoderTrace {
    col1: Array2<f64>,
    a1: Act,
    col2: Array2<f64>,
    a2: Array2<f64>,
    flat: Array2<f64>,
}

pub(crate) struct DecoderTrace {
    z: Array2<f64>,
    d0: Array2<f64>,
    d1: Array2<f64>,
    d2: Array2<f64>,
}

/// `x` is `(n, side*side)`; returns `(mu, logvar)`, each `(n, J)`.
pub(crate) fn encoder_forward(
    p: &VaeParams,
    x: &Array2<f64>,
) -> (Array2<f64>, Array2<f64>, EncoderTrace) {
    let arch = p.arch;
    let g = arch.geoms();
    let [s0, s1, s2] = arch.sides();
    let n = x.nrows();
    let x0 = Act {
        n,
        h: s0,
        w: s0,
        data: reshape(x.clone(), n * s0 * s0, 1),
    };
    let col1 = im2col(&x0, &g.enc1);
    let mut h1 = col1.dot(&p.enc1_w);
    add_bias(&mut h1, &p.enc1_b);
    relu(&mut h1);
    let a1 = Act {
        n,
        h: s1,
        w: s1,
        data: h1,
    };
    let col2 = im2col(&a1, &g.enc2);
    let mut a2 = col2.dot(&p.enc2_w);
    add_bias(&mut a2, &p.enc2_b);
    relu(&mut a2);
    let flat = reshape(a2.clone(), n, s2 * s2 * arch.enc_filters[1]);
    let mut head = flat.dot(&p.head_w);
    add_bias(&mut head, &p.head_b);
    let j = arch.latent_dim;
    let mu = head.slice(s![.., ..j]).to_owned();
    let logvar = head.slice(s![.., j..]).to_owned();
    (
        mu,
        logvar,
        EncoderTrace {
            col1,
            a1,
            col2,
            a2,
            flat,
        },
    )
}

/// `z` is `(n, J)`; returns output logits `(n, side*side)`.
pub(crate) fn decoder_forward(p: &VaeParams, z: &Array2<f64>) -> (Array2<f64>, DecoderTrace) {
    let arch = p.arch;
    let g = arch.geoms();
    let [s0, _, s2] = arch.sides();
    let n = z.nrows();
    let mut d0 = z.dot(&p.dec_dense_w);
    add_bias(&mut d0, &p.dec_dense_b);
    relu(&mut d0);
    let d0 = reshape(d0, n * s2 * s2, arch.dec_channels);

    let mut d1 = col2im(&d0.dot(&p.dec1_w.t()), n, &g.dec1).data;
    add_bias(&mut d1, &p.dec1_b);
    relu(&mut d1);

    let mut d2 = col2im(&d1.dot(&p.dec2_w.t()), n, &g.dec2).data;
    add_bias(&mut d2, &p.dec2_b);
    relu(&mut d2);

    let mut logits = col2im(&d2.dot(&p.dec3_w.t()), n, &g.dec3).data;
    add_bias(&mut logits, &p.dec3_b);
    (
        reshape(logits, n, s0 * s0),
        DecoderTrace {
            z: z.clone(),
            d0,
            d1,
            d2,
        },
    )
}

/// Backpropagates `dlogits` through the decoder into `grads`; returns `dz`.
pub(crate) fn decoder_backward(
    p: &VaeParams,
    t: &DecoderTrace,
    dlogits: &Array2<f64>,
    grads: &mut VaeParams,
) -> Array2<f64> {
    let arch = p.arch;
    let g = arch.geoms();
    let [s0, s1, s2] = arch.sides();
    let n = dlogits.nrows();

    // transposed conv: y = col2im(x W^T) + b, so dx = im2col(dy) W, dW = im2col(dy)^T x
    let dy3 = reshape(dlogits.clone(), n * s0 * s0, 1);
    grads.dec3_b += &bias_grad(&dy3);
    let cols3 = im2col(&Act { n, h: s0, w: s0, data: dy3 }, &g.dec3);
    grads.dec3_w += &cols3.t().dot(&t.d2);
    let mut dd2 = cols3.dot(&p.dec3_w);
    relu_backward(&mut dd2, &t.d2);

    grads.dec2_b += &bias_grad(&dd2);
    let cols2 = im2col(&Act { n, h: s0, w: s0, data: dd2 }, &g.dec2);
    grads.dec2_w += &cols2.t().dot(&t.d1);
    let mut dd1 = cols2.dot(&p.dec2_w);
    relu_backward(&mut dd1, &t.d1);

    grads.dec1_b += &bias_grad(&dd1);
    let cols1 = im2col(&Act { n, h: s1, w: s1, data: dd1 }, &g.dec1);
    grads.dec1_w += &cols1.t().dot(&t.d0);
    let mut dd0 = cols1.dot(&p.dec1_w);
    relu_backward(&mut dd0, &t.d0);

    let dd0 = reshape(dd0, n, s2 * s2 * arch.dec_channels);
    grads.dec_dense_b += &bias_grad(&dd0);
    grads.dec_dense_w += &t.z.t().dot(&dd0);
    dd0.dot(&p.dec_dense_w.t())
}

pub(crate) fn encoder_backward(
    p: &VaeParams,
    t: &EncoderTrace,
    dmu: &Array2<f64>,
    dlogvar: &Array2<f64>,
    grads: &mut VaeParams,
) {
    let arch = p.arch;
    let g = arch.geoms();
    let [_, s1, s2] = arch.sides();
    let n = dmu.nrows();
    let dhead = concatenate(Axis(1), &[dmu.view(), dlogvar.view()]).expect("same row count");
    grads.head_b += &bias_grad(&dhead);
    grads.head_w += &t.flat.t().dot(&dhead);
    let dflat = dhead.dot(&p.head_w.t());
    let mut da2 = reshape(dflat, n * s2 * s2, arch.enc_filters[1]);
    relu_backward(&mut da2, &t.a2);

    grads.enc2_b += &bias_grad(&da2);
    grads.enc2_w += &t.col2.t().dot(&da2);
    let mut da1 = col2im(&da2.dot(&p.enc2_w.t()), n, &g.enc2).data;
    debug_assert_eq!(da1.nrows(), n * s1 * s1);
    relu_backward(&mut da1, &t.a1.data);

    grads.enc1_b += &bias_grad(&da1);
    grads.enc1_w += &t.col1.t().dot(&da1);
}

/// Numerically stable `log(1 + e^x)`.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of target `x` against `sigmoid(logit)`, computed in
/// logit space so it never takes `log(0)`.
pub fn bce_with_logits(logit: f64, x: f64) -> f64 {
    softplus(logit) - logit * x
}

/// `1/2 sum_i (mu_i^2 + sigma_i^2 - log sigma_i^2 - 1)` for one sample.
pub fn kl_divergence(mu: &[f64], logvar: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(m, lv)| m * m + lv.exp() - lv - 1.0)
        .sum::<f64>()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub recon_bce: f64,
    pub kl: f64,
}

/// Batch loss and its gradient with respect to every parameter.
///
/// Reconstruction is summed over pixels, KL over latent dimensions, and both
/// are averaged over the batch; `total = recon_bce + kl`.
pub fn loss_and_grad(
    p: &VaeParams,
    x: &Array2<f64>,
    eps: &Array2<f64>,
) -> Result<(LossParts, VaeParams)> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::Contract("empty batch".into()));
    }
    if x.ncols() != p.arch.pixels() || eps.dim() != (n, p.arch.latent_dim) {
        return Err(Error::Contract(format!(
            "batch shape {:?} / noise shape {:?} do not match the architecture",
            x.dim(),
            eps.dim()
        )));
    }
    let (mu, logvar, etrace) = encoder_forward(p, x);
    let sigma = logvar.mapv(|lv| (0.5 * lv).exp());
    let z = &mu + &(&sigma * eps);
    let (logits, dtrace) = decoder_forward(p, &z);

    let inv_n = 1.0 / n as f64;
    let mut recon = 0.0;
    let mut dlogits = Array2::zeros(logits.dim());
    ndarray::Zip::from(&mut dlogits)
        .and(&logits)
        .and(x)
        .for_each(|d, &l, &t| {
            recon += bce_with_logits(l, t);
            *d = (sigmoid(l) - t) * inv_n;
        });
    recon *= inv_n;
    let kl = mu
        .rows()
        .into_iter()
        .zip(logvar.rows())
        .map(|(m, lv)| kl_divergence(m.as_slice().unwrap(), lv.as_slice().unwrap()))
        .sum::<f64>()
        * inv_n;
    let parts = LossParts {
        total: recon + kl,
        recon_bce: recon,
        kl,
    };
    if !parts.total.is_finite() {
        return Err(Error::numerical("VAE loss", None));
    }

    let mut grads = VaeParams::zeros(p.arch)?;
    let dz = decoder_backward(p, &dtrace, &dlogits, &mut grads);
    let dmu = &dz + &mu.mapv(|m| m * inv_n);
    let dlogvar = &(&dz * eps * &sigma * 0.5) + &logvar.mapv(|lv| 0.5 * (lv.exp() - 1.0) * inv_n);
    encoder_backward(p, &etrace, &dmu, &dlogvar, &mut grads);
    Ok((parts, grads))
}

/// Loss only, for evaluation and finite differences.
pub fn loss(p: &VaeParams, x: &Array2<f64>, eps: &Array2<f64>) -> Result<LossParts> {
    let (mu, logvar, _) = encoder_forward(p, x);
    let z = &mu + &(&logvar.mapv(|lv| (0.5 * lv).exp()) * eps);
    let (logits, _) = decoder_forward(p, &z);
    let n = x.nrows() as f64;
    let recon = ndarray::Zip::from(&logits)
        .and(x)
        .fold(0.0, |acc, &l, &t| acc + bce_with_logits(l, t))
        / n;
    let kl = mu
        .rows()
        .into_iter()
        .zip(logvar.rows())
        .map(|(m, lv)| kl_divergence(m.as_slice().unwrap(), lv.as_slice().unwrap()))
        .sum::<f64>()
        / n;
    Ok(LossParts {
        total: recon + kl,
        recon_bce: recon,
        kl,
    })
}
