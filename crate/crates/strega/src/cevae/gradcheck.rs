//! Analytic-versus-numeric gradient verification on the f64 path.

use super::{cevae_loss_frozen, context_mask, FrozenNoise, LossWeights, MaskSpec, ModelParams,
    LATENT_SIZE};
use crate::error::Result;
use crate::rng::RngStream;
use crate::tensor::Tensor;

const FD_STEP: f64 = 1e-3;

/// Compare the analytic gradient of the total loss against central finite
/// differences on `n_samples` randomly chosen parameters, all in f64.
/// `grad_hook` lets tests corrupt the analytic gradient on purpose.
pub(crate) fn finite_diff_check_inner(
    model: &ModelParams<f32>,
    batch: &Tensor<f32>,
    rng: &mut RngStream,
    n_samples: usize,
    grad_hook: impl Fn(usize, f64) -> f64,
) -> Result<f64> {
    let model64: ModelParams<f64> = model.cast();
    let batch64: Tensor<f64> = batch.cast();
    let weights = LossWeights::default();
    let spec = MaskSpec::default();

    // freeze the stochastic inputs so every loss evaluation sees them
    let mut noise_rng = rng.child("gradcheck-noise");
    let x_masked = context_mask(&batch64, &spec, &mut noise_rng)?;
    let eps_data = (0..batch.dims()[0] * LATENT_SIZE)
        .map(|_| noise_rng.normal())
        .collect();
    let eps = Tensor::from_vec(&[batch.dims()[0], LATENT_SIZE], eps_data)?;
    let noise = FrozenNoise { x_masked, eps };

    let mut work = model64.clone();
    let (_, grads) = cevae_loss_frozen(&batch64, &noise, &mut work, &weights)?;
    let analytic = grads.flatten();

    let mut flat = model64.flatten();
    let mut sample_rng = rng.child("gradcheck-sample");
    let mut max_rel = 0.0f64;
    for _ in 0..n_samples {
        let idx = sample_rng.below(flat.len());
        let orig = flat[idx];
        flat[idx] = orig + FD_STEP;
        work.load_flat(&flat)?;
        let (plus, _) = cevae_loss_frozen(&batch64, &noise, &mut work, &weights)?;
        flat[idx] = orig - FD_STEP;
        work.load_flat(&flat)?;
        let (minus, _) = cevae_loss_frozen(&batch64, &noise, &mut work, &weights)?;
        flat[idx] = orig;

        let numeric = (plus.total - minus.total) / (2.0 * FD_STEP);
        let ana = grad_hook(idx, analytic[idx]);
        // relative to the larger entry, floored at the O(1) loss scale: the
        // leaky-rectifier kinks inject O(h) absolute noise into the central
        // difference that would otherwise swamp near-zero gradients
        let denom = ana.abs().max(numeric.abs()).max(1.0);
        let rel = (ana - numeric).abs() / denom;
        if rel > max_rel {
            max_rel = rel;
        }
    }
    Ok(max_rel)
}

/// Max relative error between analytic gradients and central finite
/// differences (h = 1e-3) over at least 200 sampled parameters.
pub fn finite_diff_check(
    model: &ModelParams<f32>,
    batch: &Tensor<f32>,
    rng: &mut RngStream,
) -> Result<f64> {
    finite_diff_check_inner(model, batch, rng, 200, |_, g| g)
}
