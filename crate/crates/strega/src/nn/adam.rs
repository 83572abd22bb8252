//! Adam optimizer with bias correction.

use crate::error::{Error, Result};
use crate::tensor::Scalar;

#[derive(Clone, Debug)]
pub struct AdamState<T: Scalar = f32> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step_count: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Scalar> AdamState<T> {
    /// Defaults beta1=0.9, beta2=0.999, eps=1e-8.
    pub fn new(n_params: usize, lr: f64) -> Self {
        AdamState {
            m: vec![T::zero(); n_params],
            v: vec![T::zero(); n_params],
            step_count: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam update over a flat parameter vector. Rejects non-finite
/// gradients without touching params or state.
pub fn adam_step<T: Scalar>(
    params: &mut [T],
    grads: &[T],
    state: &mut AdamState<T>,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Dimension(format!(
            "adam_step length mismatch: params {}, grads {}, state {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient("adam_step".into()));
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i].into_f64();
        let m = state.beta1 * state.m[i].into_f64() + (1.0 - state.beta1) * g;
        let v = state.beta2 * state.v[i].into_f64() + (1.0 - state.beta2) * g * g;
        state.m[i] = T::from_f64(m);
        state.v[i] = T::from_f64(v);
        let mhat = m / bc1;
        let vhat = v / bc2;
        let upd = state.lr * mhat / (vhat.sqrt() + state.eps);
        params[i] = T::from_f64(params[i].into_f64() - upd);
    }
    Ok(())
}
