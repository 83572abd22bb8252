//! Batch normalization over `[B, C, H, W]` activations.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Debug)]
pub struct BatchNormState<T: Scalar = f32> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub momentum: T,
    pub epsilon: T,
}

impl<T: Scalar> BatchNormState<T> {
    pub fn new(channels: usize) -> Self {
        BatchNormState {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            momentum: T::from_f64(0.1),
            epsilon: T::from_f64(1e-5),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

/// Batch-norm execution mode. `Train` normalizes with batch statistics and
/// folds them into the running averages; `TrainFrozenStats` normalizes with
/// batch statistics but leaves the running averages untouched (used for
/// training branches whose input distribution does not match the inference
/// path); `Eval` normalizes with the running averages and mutates nothing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    Train,
    TrainFrozenStats,
    Eval,
}

impl BnMode {
    pub fn is_training(self) -> bool {
        !matches!(self, BnMode::Eval)
    }
}

/// Per-channel intermediates needed by the backward pass.
#[derive(Clone, Debug)]
pub struct BnCache<T: Scalar> {
    pub xhat: Tensor<T>,
    pub inv_std: Vec<T>,
    pub mean: Vec<T>,
    pub training: bool,
}

fn check_input<T: Scalar>(input: &Tensor<T>, state: &BatchNormState<T>) -> Result<()> {
    let d = input.dims();
    if d.len() != 4 {
        return Err(Error::Dimension(format!(
            "batch_norm input must be rank 4 [B,C,H,W], got {:?}",
            d
        )));
    }
    if d[1] != state.channels() {
        return Err(Error::ShapeMismatch {
            axis: 1,
            expected: state.channels(),
            got: d[1],
            context: "batch_norm channels".into(),
        });
    }
    Ok(())
}

/// Forward pass; see [`BnMode`] for what each mode normalizes with and
/// whether the running statistics are updated.
pub fn batch_norm_forward<T: Scalar>(
    input: &Tensor<T>,
    state: &mut BatchNormState<T>,
    mode: BnMode,
) -> Result<(Tensor<T>, BnCache<T>)> {
    check_input(input, state)?;
    let training = mode.is_training();
    let d = input.dims();
    let (b, c, h, w) = (d[0], d[1], d[2], d[3]);
    let n = b * h * w;
    if training && n < 2 {
        return Err(Error::DegenerateBatch(n));
    }

    let mut out = Tensor::zeros(d);
    let mut xhat = Tensor::zeros(d);
    let mut inv_std = vec![T::zero(); c];
    let mut means = vec![T::zero(); c];
    let plane = h * w;

    for ch in 0..c {
        let (mean, var) = if training {
            let mut sum = 0.0f64;
            let mut sq = 0.0f64;
            for bi in 0..b {
                let base = (bi * c + ch) * plane;
                for &v in &input.data()[base..base + plane] {
                    let x = v.into_f64();
                    sum += x;
                    sq += x * x;
                }
            }
            let mean = sum / n as f64;
            let var = (sq / n as f64 - mean * mean).max(0.0);
            if mode == BnMode::Train {
                let m = state.momentum.into_f64();
                state.running_mean[ch] = T::from_f64(
                    (1.0 - m) * state.running_mean[ch].into_f64() + m * mean,
                );
                state.running_var[ch] =
                    T::from_f64((1.0 - m) * state.running_var[ch].into_f64() + m * var);
            }
            (mean, var)
        } else {
            (
                state.running_mean[ch].into_f64(),
                state.running_var[ch].into_f64(),
            )
        };
        let istd = 1.0 / (var + state.epsilon.into_f64()).sqrt();
        inv_std[ch] = T::from_f64(istd);
        means[ch] = T::from_f64(mean);
        let (g, bt) = (state.gamma[ch].into_f64(), state.beta[ch].into_f64());
        for bi in 0..b {
            let base = (bi * c + ch) * plane;
            let src = &input.data()[base..base + plane];
            for (i, &v) in src.iter().enumerate() {
                let xh = (v.into_f64() - mean) * istd;
                xhat.data_mut()[base + i] = T::from_f64(xh);
                out.data_mut()[base + i] = T::from_f64(g * xh + bt);
            }
        }
    }

    Ok((
        out,
        BnCache {
            xhat,
            inv_std,
            mean: means,
            training,
        },
    ))
}

/// Public single-output wrapper.
pub fn batch_norm<T: Scalar>(
    input: &Tensor<T>,
    state: &mut BatchNormState<T>,
    training: bool,
) -> Result<Tensor<T>> {
    let mode = if training { BnMode::Train } else { BnMode::Eval };
    Ok(batch_norm_forward(input, state, mode)?.0)
}

/// Returns `(grad_input, grad_gamma, grad_beta)`.
pub fn batch_norm_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    cache: &BnCache<T>,
    state: &BatchNormState<T>,
) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
    let d = grad_out.dims();
    if d != cache.xhat.dims() {
        return Err(Error::Dimension(format!(
            "batch_norm grad_out dims {:?} != forward dims {:?}",
            d,
            cache.xhat.dims()
        )));
    }
    let (b, c, h, w) = (d[0], d[1], d[2], d[3]);
    let n = (b * h * w) as f64;
    let plane = h * w;
    let mut grad_input = Tensor::zeros(d);
    let mut grad_gamma = vec![T::zero(); c];
    let mut grad_beta = vec![T::zero(); c];

    for ch in 0..c {
        let g = state.gamma[ch].into_f64();
        let istd = cache.inv_std[ch].into_f64();
        let mut sum_g = 0.0f64;
        let mut sum_gx = 0.0f64;
        for bi in 0..b {
            let base = (bi * c + ch) * plane;
            for i in 0..plane {
                let go = grad_out.data()[base + i].into_f64();
                sum_g += go;
                sum_gx += go * cache.xhat.data()[base + i].into_f64();
            }
        }
        grad_beta[ch] = T::from_f64(sum_g);
        grad_gamma[ch] = T::from_f64(sum_gx);

        for bi in 0..b {
            let base = (bi * c + ch) * plane;
            for i in 0..plane {
                let go = grad_out.data()[base + i].into_f64();
                let xh = cache.xhat.data()[base + i].into_f64();
                let gi = if cache.training {
                    g * istd * (go - sum_g / n - xh * sum_gx / n)
                } else {
                    g * istd * go
                };
                grad_input.data_mut()[base + i] = T::from_f64(gi);
            }
        }
    }
    Ok((grad_input, grad_gamma, grad_beta))
}
