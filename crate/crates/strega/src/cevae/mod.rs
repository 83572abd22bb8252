//! The compact context-encoding VAE.
//!
//! Symmetric encoder/decoder with 64, 128 and 256 feature maps, residual
//! connections, batch normalization and a latent size of 256. The training
//! objective has three terms: a KL divergence toward the standard-normal
//! prior, the VAE reconstruction loss, and a context-encoding reconstruction
//! loss computed from an input with masked rectangles.

mod gradcheck;
mod model;
mod train;

pub use gradcheck::finite_diff_check;
pub use model::{ModelParams, ResBlockDown, ResBlockUp, LATENT_SIZE};
pub use train::{train, EpochMetrics, TrainConfig};

use crate::error::{Error, Result};
use crate::nn::BnMode;
use crate::rng::RngStream;
use crate::tensor::{Scalar, Tensor};
use serde::{Deserialize, Serialize};

/// Latent draw bookkeeping: `z = mu + exp(0.5*logvar) * eps`.
#[derive(Clone, Debug)]
pub struct LatentCode<T: Scalar = f32> {
    pub mu: Tensor<T>,
    pub logvar: Tensor<T>,
    pub z: Tensor<T>,
    pub eps: Tensor<T>,
}

/// Scalar record of the three loss terms for one batch.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub kl: f64,
    pub rec_vae: f64,
    pub rec_ce: f64,
    pub total: f64,
}

/// Weights of the three loss terms. `(1, 1, 0)` reduces the objective to a
/// plain VAE, which is the ablation baseline.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LossWeights {
    pub kl: f64,
    pub vae: f64,
    pub ce: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            kl: 1.0,
            vae: 1.0,
            ce: 1.0,
        }
    }
}

/// Context-encoding mask configuration. Per image, a count uniform in
/// `[1, max_rects]` of axis-aligned rectangles is filled with `fill_value`;
/// each rectangle side is a uniform fraction of the image side drawn from
/// `side_frac_range`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MaskSpec {
    pub max_rects: usize,
    pub side_frac_range: (f64, f64),
    pub fill_value: f32,
}

impl Default for MaskSpec {
    fn default() -> Self {
        MaskSpec {
            max_rects: 3,
            side_frac_range: (0.1, 0.3),
            fill_value: 0.0,
        }
    }
}

fn check_batch_shape<T: Scalar>(x: &Tensor<T>, side: usize) -> Result<()> {
    let d = x.dims();
    if d.len() != 4 || d[1] != 1 {
        return Err(Error::Dimension(format!(
            "expected batch of shape [B,1,S,S], got {:?}",
            d
        )));
    }
    if d[2] != side || d[3] != side {
        return Err(Error::ShapeMismatch {
            axis: 2,
            expected: side,
            got: d[2],
            context: "model input side".into(),
        });
    }
    Ok(())
}

/// Deterministic posterior parameters for a batch, eval-mode batch norm.
pub fn encode<T: Scalar>(
    x: &Tensor<T>,
    params: &ModelParams<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    check_batch_shape(x, params.input_side)?;
    let mut p = params.clone();
    let (mu, logvar, _) = p.encode_forward(x, BnMode::Eval)?;
    Ok((mu, logvar))
}

/// `z = mu + exp(0.5 * logvar) * eps`, `eps ~ N(0,1)` drawn from `rng`.
pub fn reparameterize<T: Scalar>(
    mu: &Tensor<T>,
    logvar: &Tensor<T>,
    rng: &mut RngStream,
) -> Result<LatentCode<T>> {
    let eps_data = (0..mu.len()).map(|_| T::from_f64(rng.normal())).collect();
    let eps = Tensor::from_vec(mu.dims(), eps_data)?;
    reparameterize_with_eps(mu, logvar, &eps)
}

/// Deterministic variant used by tests and the gradient checker.
pub fn reparameterize_with_eps<T: Scalar>(
    mu: &Tensor<T>,
    logvar: &Tensor<T>,
    eps: &Tensor<T>,
) -> Result<LatentCode<T>> {
    if mu.dims() != logvar.dims() || mu.dims() != eps.dims() {
        return Err(Error::Dimension(format!(
            "reparameterize shape mismatch: mu {:?}, logvar {:?}, eps {:?}",
            mu.dims(),
            logvar.dims(),
            eps.dims()
        )));
    }
    let half = T::from_f64(0.5);
    let z_data = mu
        .data()
        .iter()
        .zip(logvar.data())
        .zip(eps.data())
        .map(|((&m, &lv), &e)| m + (lv * half).exp() * e)
        .collect();
    Ok(LatentCode {
        mu: mu.clone(),
        logvar: logvar.clone(),
        z: Tensor::from_vec(mu.dims(), z_data)?,
        eps: eps.clone(),
    })
}

/// Mean over the batch of `0.5 * sum_d (mu^2 + exp(logvar) - 1 - logvar)`.
pub fn kl_loss<T: Scalar>(mu: &Tensor<T>, logvar: &Tensor<T>) -> Result<f64> {
    if mu.dims() != logvar.dims() {
        return Err(Error::Dimension(format!(
            "kl_loss shape mismatch: {:?} vs {:?}",
            mu.dims(),
            logvar.dims()
        )));
    }
    let batch = mu.dims()[0] as f64;
    let sum: f64 = mu
        .data()
        .iter()
        .zip(logvar.data())
        .map(|(&m, &lv)| {
            let (m, lv) = (m.into_f64(), lv.into_f64());
            0.5 * (m * m + lv.exp() - 1.0 - lv)
        })
        .sum();
    Ok(sum / batch)
}

/// Mean squared error over all pixels and batch entries.
pub fn rec_loss<T: Scalar>(x: &Tensor<T>, xhat: &Tensor<T>) -> Result<f64> {
    if x.dims() != xhat.dims() {
        return Err(Error::Dimension(format!(
            "rec_loss shape mismatch: {:?} vs {:?}",
            x.dims(),
            xhat.dims()
        )));
    }
    let sum: f64 = x
        .data()
        .iter()
        .zip(xhat.data())
        .map(|(&a, &b)| {
            let d = a.into_f64() - b.into_f64();
            d * d
        })
        .sum();
    Ok(sum / x.len() as f64)
}

/// Replace 1..=max_rects axis-aligned rectangles per image with the fill
/// value; every other pixel is bit-identical to the input.
pub fn context_mask<T: Scalar>(
    x: &Tensor<T>,
    spec: &MaskSpec,
    rng: &mut RngStream,
) -> Result<Tensor<T>> {
    let d = x.dims();
    if d.len() != 4 || d[1] != 1 {
        return Err(Error::Dimension(format!(
            "context_mask expects [B,1,S,S], got {:?}",
            d
        )));
    }
    let (b, h, w) = (d[0], d[2], d[3]);
    let (lo, hi) = spec.side_frac_range;
    if (h as f64 * lo) < 1.0 || (w as f64 * lo) < 1.0 {
        return Err(Error::DegenerateInput(format!(
            "image {h}x{w} smaller than the smallest mask rectangle"
        )));
    }
    let fill = T::from_f64(spec.fill_value as f64);
    let mut out = x.clone();
    for bi in 0..b {
        let n = rng.int_in(1, spec.max_rects.max(1));
        for _ in 0..n {
            let rh = ((rng.uniform(lo, hi) * h as f64).round() as usize).clamp(1, h);
            let rw = ((rng.uniform(lo, hi) * w as f64).round() as usize).clamp(1, w);
            let y0 = rng.below(h - rh + 1);
            let x0 = rng.below(w - rw + 1);
            for y in y0..y0 + rh {
                let base = ((bi * d[1]) * h + y) * w;
                for v in &mut out.data_mut()[base + x0..base + x0 + rw] {
                    *v = fill;
                }
            }
        }
    }
    Ok(out)
}

pub(crate) struct FrozenNoise<T: Scalar> {
    pub x_masked: Tensor<T>,
    pub eps: Tensor<T>,
}

/// Loss and full-model gradients for one batch with pre-drawn noise.
/// Deterministic given its inputs; shared by training and gradient checking.
pub(crate) fn cevae_loss_frozen<T: Scalar>(
    x: &Tensor<T>,
    noise: &FrozenNoise<T>,
    params: &mut ModelParams<T>,
    weights: &LossWeights,
) -> Result<(LossBreakdown, ModelParams<T>)> {
    check_batch_shape(x, params.input_side)?;
    let batch = x.dims()[0] as f64;
    let pixels = x.len() as f64;
    let mut grads = params.zeros_like();

    // VAE branch. Running statistics are folded in only on the passes whose
    // input distribution matches the inference path (clean input through the
    // encoder, posterior mean through the decoder); the sampled-z decode and
    // the masked-input encode normalize with batch statistics but leave the
    // running averages alone.
    let (mu, logvar, enc_cache) = params.encode_forward(x, BnMode::Train)?;
    let lat = reparameterize_with_eps(&mu, &logvar, &noise.eps)?;
    let (x_rec, dec_cache) = params.decode_forward(&lat.z, BnMode::TrainFrozenStats)?;

    // CE branch: decode the posterior mean of the masked input
    let (mu_ce, _lv_ce, enc_cache_ce) =
        params.encode_forward(&noise.x_masked, BnMode::TrainFrozenStats)?;
    let (x_ce, dec_cache_ce) = params.decode_forward(&mu_ce, BnMode::Train)?;

    let kl = kl_loss(&mu, &logvar)?;
    let rec_vae = rec_loss(x, &x_rec)?;
    let rec_ce = rec_loss(x, &x_ce)?;
    let total = weights.kl * kl + weights.vae * rec_vae + weights.ce * rec_ce;
    let breakdown = LossBreakdown {
        kl,
        rec_vae,
        rec_ce,
        total,
    };
    if !total.is_finite() {
        return Err(Error::TrainingDiverged {
            epoch: 0,
            total,
            kl,
            rec_vae,
            rec_ce,
        });
    }

    // VAE reconstruction gradient: d mse / d x_rec = 2 (x_rec - x) / pixels
    let scale_vae = T::from_f64(2.0 * weights.vae / pixels);
    let g_xrec_data = x_rec
        .data()
        .iter()
        .zip(x.data())
        .map(|(&r, &t)| (r - t) * scale_vae)
        .collect();
    let g_xrec = Tensor::from_vec(x.dims(), g_xrec_data)?;
    let g_z = params.decode_backward(&g_xrec, &dec_cache, &mut grads)?;

    // reparameterization: dmu += dz, dlogvar += dz * eps * 0.5 * exp(0.5 lv)
    let half = T::from_f64(0.5);
    let mut g_mu = g_z.clone();
    let g_lv_data: Vec<T> = g_z
        .data()
        .iter()
        .zip(noise.eps.data())
        .zip(logvar.data())
        .map(|((&gz, &e), &lv)| gz * e * half * (lv * half).exp())
        .collect();
    let mut g_lv = Tensor::from_vec(logvar.dims(), g_lv_data)?;

    // KL gradients: d/dmu = mu / B, d/dlogvar = 0.5 (exp(lv) - 1) / B
    let wk = T::from_f64(weights.kl / batch);
    for ((gm, &m), (gl, &lv)) in g_mu
        .data_mut()
        .iter_mut()
        .zip(mu.data())
        .zip(g_lv.data_mut().iter_mut().zip(logvar.data()))
    {
        *gm = *gm + m * wk;
        *gl = *gl + half * (lv.exp() - T::one()) * wk;
    }
    params.encode_backward(&g_mu, &g_lv, &enc_cache, &mut grads)?;

    // CE branch gradient flows through the posterior mean only
    let scale_ce = T::from_f64(2.0 * weights.ce / pixels);
    let g_xce_data = x_ce
        .data()
        .iter()
        .zip(x.data())
        .map(|(&r, &t)| (r - t) * scale_ce)
        .collect();
    let g_xce = Tensor::from_vec(x.dims(), g_xce_data)?;
    let g_mu_ce = params.decode_backward(&g_xce, &dec_cache_ce, &mut grads)?;
    let g_lv_zero = Tensor::zeros(g_mu_ce.dims());
    params.encode_backward(&g_mu_ce, &g_lv_zero, &enc_cache_ce, &mut grads)?;

    Ok((breakdown, grads))
}

/// The three-term objective and its gradients for one batch. Mask rectangles
/// and the latent noise are drawn from `rng`.
pub fn cevae_loss<T: Scalar>(
    x: &Tensor<T>,
    params: &mut ModelParams<T>,
    spec: &MaskSpec,
    weights: &LossWeights,
    rng: &mut RngStream,
) -> Result<(LossBreakdown, ModelParams<T>)> {
    let x_masked = context_mask(x, spec, rng)?;
    let eps_data = (0..x.dims()[0] * LATENT_SIZE)
        .map(|_| T::from_f64(rng.normal()))
        .collect();
    let eps = Tensor::from_vec(&[x.dims()[0], LATENT_SIZE], eps_data)?;
    cevae_loss_frozen(x, &FrozenNoise { x_masked, eps }, params, weights)
}

/// `x - g(f_mu(x))`: reconstruction residual at the posterior mean, with
/// eval-mode batch norm and no sampling.
pub fn anomaly_residual<T: Scalar>(x: &Tensor<T>, params: &ModelParams<T>) -> Result<Tensor<T>> {
    check_batch_shape(x, params.input_side)?;
    let mut p = params.clone();
    let (mu, _logvar, _) = p.encode_forward(x, BnMode::Eval)?;
    let (x_rec, _) = p.decode_forward(&mu, BnMode::Eval)?;
    let data = x
        .data()
        .iter()
        .zip(x_rec.data())
        .map(|(&a, &b)| a - b)
        .collect();
    Tensor::from_vec(x.dims(), data)
}
