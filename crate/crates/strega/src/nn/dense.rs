//! Fully connected layers over flattened feature maps.

use crate::error::{Error, Result};
use crate::tensor::{matmul_a_bt_acc, matmul_acc, matmul_at_b_acc, Scalar, Tensor};

#[derive(Clone, Debug)]
pub struct DenseLayer<T: Scalar = f32> {
    /// `[out_features, in_features]`
    pub weights: Tensor<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn new(weights: Tensor<T>, bias: Vec<T>) -> Result<Self> {
        if weights.rank() != 2 {
            return Err(Error::Dimension("dense weights must be rank 2".into()));
        }
        if bias.len() != weights.dims()[0] {
            return Err(Error::ShapeMismatch {
                axis: 0,
                expected: weights.dims()[0],
                got: bias.len(),
                context: "dense bias".into(),
            });
        }
        Ok(DenseLayer { weights, bias })
    }

    pub fn out_features(&self) -> usize {
        self.weights.dims()[0]
    }

    pub fn in_features(&self) -> usize {
        self.weights.dims()[1]
    }

    /// `y[B,out] = x[B,in] W^T + b`
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let d = input.dims();
        if d.len() != 2 || d[1] != self.in_features() {
            return Err(Error::ShapeMismatch {
                axis: 1,
                expected: self.in_features(),
                got: *d.get(1).unwrap_or(&0),
                context: "dense input".into(),
            });
        }
        let (b, n_in, n_out) = (d[0], self.in_features(), self.out_features());
        let mut out = Tensor::zeros(&[b, n_out]);
        // x [b, in] * W^T with W stored [out, in]
        matmul_a_bt_acc(input.data(), self.weights.data(), b, n_in, n_out, out.data_mut());
        for bi in 0..b {
            let row = &mut out.data_mut()[bi * n_out..(bi + 1) * n_out];
            for (v, &bias) in row.iter_mut().zip(&self.bias) {
                *v = *v + bias;
            }
        }
        Ok(out)
    }

    /// Returns `(grad_input, grad_weights, grad_bias)`.
    pub fn backward(
        &self,
        input: &Tensor<T>,
        grad_out: &Tensor<T>,
    ) -> Result<(Tensor<T>, Tensor<T>, Vec<T>)> {
        let (b, n_in, n_out) = (input.dims()[0], self.in_features(), self.out_features());
        if grad_out.dims() != [b, n_out] {
            return Err(Error::ShapeMismatch {
                axis: 1,
                expected: n_out,
                got: *grad_out.dims().get(1).unwrap_or(&0),
                context: "dense grad_out".into(),
            });
        }
        let mut grad_input = Tensor::zeros(&[b, n_in]);
        // g [b, out] * W [out, in]
        matmul_acc(grad_out.data(), self.weights.data(), b, n_out, n_in, grad_input.data_mut());
        let mut grad_weights = Tensor::zeros(&[n_out, n_in]);
        // W grad: g^T [out, b] * x [b, in], with g stored [b, out]
        matmul_at_b_acc(grad_out.data(), input.data(), n_out, b, n_in, grad_weights.data_mut());
        let mut grad_bias = vec![T::zero(); n_out];
        for bi in 0..b {
            for (gb, &g) in grad_bias
                .iter_mut()
                .zip(&grad_out.data()[bi * n_out..(bi + 1) * n_out])
            {
                *gb = *gb + g;
            }
        }
        Ok((grad_input, grad_weights, grad_bias))
    }
}
