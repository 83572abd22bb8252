//! Mini-batch training loop.

use super::{cevae_loss, LossWeights, MaskSpec, ModelParams};
use crate::error::{Error, Result};
use crate::nn::{adam_step, AdamState};
use crate::rng::RngStream;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weights: LossWeights,
    pub mask: MaskSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 16,
            lr: 1e-4,
            weights: LossWeights::default(),
            mask: MaskSpec::default(),
        }
    }
}

/// One line of the JSONL metrics stream.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub total: f64,
    pub kl: f64,
    pub rec_vae: f64,
    pub rec_ce: f64,
}

/// Train on a stack of slices `[N, S, S]`. Shuffled mini-batches per epoch,
/// Adam updates, one metrics record per epoch. Deterministic per seed.
pub fn train(
    dataset: &Tensor<f32>,
    params: &mut ModelParams<f32>,
    config: &TrainConfig,
    rng: &mut RngStream,
) -> Result<Vec<EpochMetrics>> {
    let d = dataset.dims();
    if d.len() != 3 {
        return Err(Error::Dimension(format!(
            "training dataset must be [N,S,S], got {:?}",
            d
        )));
    }
    if d[0] == 0 {
        return Err(Error::DegenerateInput("empty training dataset".into()));
    }
    if d[1] != params.input_side || d[2] != params.input_side {
        return Err(Error::ShapeMismatch {
            axis: 1,
            expected: params.input_side,
            got: d[1],
            context: "training slice side".into(),
        });
    }
    let (n, side) = (d[0], params.input_side);
    let plane = side * side;

    let mut shuffle_rng = rng.child("shuffle");
    let mut batch_rng = rng.child("batch-noise");
    let mut adam = AdamState::new(params.n_params(), config.lr);
    let mut metrics = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        shuffle_rng.shuffle(&mut order);

        let mut sums = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        let mut n_batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            // batch norm needs at least two samples worth of statistics
            if chunk.len() < 2 {
                continue;
            }
            let mut batch = Tensor::zeros(&[chunk.len(), 1, side, side]);
            for (bi, &si) in chunk.iter().enumerate() {
                batch.data_mut()[bi * plane..(bi + 1) * plane]
                    .copy_from_slice(&dataset.data()[si * plane..(si + 1) * plane]);
            }
            let (breakdown, grads) =
                cevae_loss(&batch, params, &config.mask, &config.weights, &mut batch_rng)
                    .map_err(|e| match e {
                        Error::TrainingDiverged {
                            total,
                            kl,
                            rec_vae,
                            rec_ce,
                            ..
                        } => Error::TrainingDiverged {
                            epoch,
                            total,
                            kl,
                            rec_vae,
                            rec_ce,
                        },
                        other => other,
                    })?;

            let mut flat = params.flatten();
            adam_step(&mut flat, &grads.flatten(), &mut adam)?;
            params.load_flat(&flat)?;

            sums.0 += breakdown.total;
            sums.1 += breakdown.kl;
            sums.2 += breakdown.rec_vae;
            sums.3 += breakdown.rec_ce;
            n_batches += 1;
        }
        let k = n_batches.max(1) as f64;
        let record = EpochMetrics {
            epoch,
            total: sums.0 / k,
            kl: sums.1 / k,
            rec_vae: sums.2 / k,
            rec_ce: sums.3 / k,
        };
        if !record.total.is_finite() {
            return Err(Error::TrainingDiverged {
                epoch,
                total: record.total,
                kl: record.kl,
                rec_vae: record.rec_vae,
                rec_ce: record.rec_ce,
            });
        }
        metrics.push(record);
    }
    Ok(metrics)
}
