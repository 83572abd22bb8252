//! Minimal dense-tensor neural-network kernel: convolutions, transposed
//! convolutions, batch normalization, dense layers, activations and Adam.

pub mod adam;
pub mod batchnorm;
pub mod conv;
pub mod dense;

pub use adam::{adam_step, AdamState};
pub use batchnorm::{
    batch_norm, batch_norm_backward, batch_norm_forward, BatchNormState, BnCache, BnMode,
};
pub use conv::{conv2d, conv2d_backward, ConvLayer};
pub use dense::DenseLayer;

use crate::rng::RngStream;
use crate::tensor::{Scalar, Tensor};

pub const LEAKY_SLOPE: f64 = 0.2;

/// Leaky rectifier, negative slope 0.2.
pub fn leaky_relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let slope = T::from_f64(LEAKY_SLOPE);
    input.map(|v| if v >= T::zero() { v } else { v * slope })
}

/// Gradient of [`leaky_relu`] given the forward *input*.
pub fn leaky_relu_backward<T: Scalar>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let slope = T::from_f64(LEAKY_SLOPE);
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x >= T::zero() { g } else { g * slope })
        .collect();
    Tensor::from_vec(input.dims(), data).expect("same dims")
}

/// Uniform init in +-sqrt(1/fan_in).
pub fn init_uniform<T: Scalar>(dims: &[usize], fan_in: usize, rng: &mut RngStream) -> Tensor<T> {
    let bound = (1.0 / fan_in as f64).sqrt();
    let len: usize = dims.iter().product();
    let data = (0..len)
        .map(|_| T::from_f64(rng.uniform(-bound, bound)))
        .collect();
    Tensor::from_vec(dims, data).expect("positive dims")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    /// Naive quadruple-loop direct convolution, the reference the fast path
    /// is checked against.
    fn conv_reference(
        input: &Tensor<f32>,
        weights: &Tensor<f32>,
        bias: &[f32],
        stride: usize,
        pad: usize,
    ) -> Tensor<f32> {
        let [b, cin, h, w] = [input.dims()[0], input.dims()[1], input.dims()[2], input.dims()[3]];
        let [cout, _, k, _] = [
            weights.dims()[0],
            weights.dims()[1],
            weights.dims()[2],
            weights.dims()[3],
        ];
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (w + 2 * pad - k) / stride + 1;
        let mut out = Tensor::zeros(&[b, cout, oh, ow]);
        for bi in 0..b {
            for oc in 0..cout {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = bias[oc];
                        for ic in 0..cin {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * stride + ky) as isize - pad as isize;
                                    let ix = (ox * stride + kx) as isize - pad as isize;
                                    if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                                        acc += input.at(&[bi, ic, iy as usize, ix as usize])
                                            * weights.at(&[oc, ic, ky, kx]);
                                    }
                                }
                            }
                        }
                        out.set(&[bi, oc, oy, ox], acc);
                    }
                }
            }
        }
        out
    }

    fn random_tensor(dims: &[usize], rng: &mut RngStream) -> Tensor<f32> {
        let len: usize = dims.iter().product();
        let data = (0..len).map(|_| rng.uniform(-1.0, 1.0) as f32).collect();
        Tensor::from_vec(dims, data).unwrap()
    }

    #[test]
    fn identity_kernel() {
        let input = Tensor::filled(&[1, 1, 3, 3], 1.0f32);
        let w = Tensor::from_vec(&[1, 1, 1, 1], vec![1.0]).unwrap();
        let layer = ConvLayer::new(w, vec![0.0], 1, 0, false).unwrap();
        let out = conv2d(&input, &layer).unwrap();
        assert_eq!(out.dims(), &[1, 1, 3, 3]);
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn sum_kernel() {
        let input = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let w = Tensor::filled(&[1, 1, 2, 2], 1.0f32);
        let layer = ConvLayer::new(w, vec![0.0], 1, 0, false).unwrap();
        let out = conv2d(&input, &layer).unwrap();
        assert_eq!(out.dims(), &[1, 1, 1, 1]);
        assert!((out.data()[0] - 10.0).abs() < 1e-6);
    }

    #[test]
    fn matches_naive_reference() {
        let mut rng = RngStream::new(11);
        let input = random_tensor(&[1, 2, 8, 8], &mut rng);
        let w = random_tensor(&[4, 2, 4, 4], &mut rng);
        let bias: Vec<f32> = (0..4).map(|_| rng.uniform(-0.5, 0.5) as f32).collect();
        let layer = ConvLayer::new(w.clone(), bias.clone(), 2, 1, false).unwrap();
        let fast = conv2d(&input, &layer).unwrap();
        let slow = conv_reference(&input, &w, &bias, 2, 1);
        assert_eq!(fast.dims(), slow.dims());
        for (a, b) in fast.data().iter().zip(slow.data()) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn conv_shape_mismatch_names_axis() {
        let input = Tensor::zeros(&[1, 3, 8, 8]);
        let w = Tensor::zeros(&[4, 2, 3, 3]);
        let layer = ConvLayer::new(w, vec![0.0; 4], 1, 1, false).unwrap();
        match conv2d(&input, &layer) {
            Err(crate::error::Error::ShapeMismatch { axis: 1, expected: 2, got: 3, .. }) => {}
            other => panic!("expected channel mismatch, got {other:?}"),
        }
    }

    #[test]
    fn conv_is_linear() {
        let mut rng = RngStream::new(5);
        let x = random_tensor(&[1, 2, 6, 6], &mut rng);
        let y = random_tensor(&[1, 2, 6, 6], &mut rng);
        let w = random_tensor(&[3, 2, 3, 3], &mut rng);
        let layer = ConvLayer::new(w, vec![0.0; 3], 1, 1, false).unwrap();
        let (a, b) = (0.7f32, -1.3f32);
        let mixed_data: Vec<f32> = x
            .data()
            .iter()
            .zip(y.data())
            .map(|(&xv, &yv)| a * xv + b * yv)
            .collect();
        let mixed = Tensor::from_vec(x.dims(), mixed_data).unwrap();
        let lhs = conv2d(&mixed, &layer).unwrap();
        let cx = conv2d(&x, &layer).unwrap();
        let cy = conv2d(&y, &layer).unwrap();
        for ((l, &vx), &vy) in lhs.data().iter().zip(cx.data()).zip(cy.data()) {
            assert!((l - (a * vx + b * vy)).abs() < 1e-4);
        }
    }

    #[test]
    fn transposed_is_adjoint_of_direct() {
        let mut rng = RngStream::new(17);
        let w = random_tensor(&[3, 2, 4, 4], &mut rng);
        let direct = ConvLayer::new(w.clone(), vec![0.0; 3], 2, 1, false).unwrap();
        let adjoint = ConvLayer::new(w, vec![0.0; 2], 2, 1, true).unwrap();
        let x = random_tensor(&[1, 2, 8, 8], &mut rng);
        let y = random_tensor(&[1, 3, 4, 4], &mut rng);
        let cx = conv2d(&x, &direct).unwrap();
        let cty = conv2d(&y, &adjoint).unwrap();
        let lhs: f64 = cx
            .data()
            .iter()
            .zip(y.data())
            .map(|(&a, &b)| (a as f64) * (b as f64))
            .sum();
        let rhs: f64 = x
            .data()
            .iter()
            .zip(cty.data())
            .map(|(&a, &b)| (a as f64) * (b as f64))
            .sum();
        assert!((lhs - rhs).abs() < 1e-3, "{lhs} vs {rhs}");
    }

    #[test]
    fn backward_zero_grad_is_zero() {
        let mut rng = RngStream::new(2);
        let x = random_tensor(&[1, 2, 6, 6], &mut rng);
        let w = random_tensor(&[3, 2, 3, 3], &mut rng);
        let layer = ConvLayer::new(w, vec![0.0; 3], 1, 1, false).unwrap();
        let g = Tensor::zeros(&[1, 3, 6, 6]);
        let (gi, gw, gb) = conv2d_backward(&x, &layer, &g).unwrap();
        assert!(gi.data().iter().all(|&v| v == 0.0));
        assert!(gw.data().iter().all(|&v| v == 0.0));
        assert!(gb.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_kernel_grad_passthrough() {
        let x = Tensor::filled(&[1, 1, 3, 3], 1.0f32);
        let w = Tensor::from_vec(&[1, 1, 1, 1], vec![1.0]).unwrap();
        let layer = ConvLayer::new(w, vec![0.0], 1, 0, false).unwrap();
        let g = Tensor::filled(&[1, 1, 3, 3], 1.0f32);
        let (gi, _, _) = conv2d_backward(&x, &layer, &g).unwrap();
        assert!(gi.data().iter().all(|&v| (v - 1.0).abs() < 1e-6));
    }

    /// Central finite differences of sum(conv(x)) wrt every input, weight and
    /// bias entry, on the f64 path.
    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = RngStream::new(23);
        let w: Tensor<f64> = random_tensor(&[3, 2, 3, 3], &mut rng).cast();
        let bias: Vec<f64> = (0..3).map(|_| rng.uniform(-0.5, 0.5)).collect();
        for transposed in [false, true] {
            let bc = if transposed {
                vec![bias[0], bias[1]]
            } else {
                bias.clone()
            };
            let in_ch = if transposed { 3 } else { 2 };
            let x: Tensor<f64> = random_tensor(&[2, in_ch, 5, 5], &mut rng).cast();
            let layer = ConvLayer::new(w.clone(), bc, 2, 1, transposed).unwrap();
            let out = conv2d(&x, &layer).unwrap();
            // downstream grad: weight each output by a distinct value
            let g_data: Vec<f64> = (0..out.len()).map(|i| ((i % 7) as f64 - 3.0) * 0.25).collect();
            let g = Tensor::from_vec(out.dims(), g_data).unwrap();
            let loss = |layer: &ConvLayer<f64>, x: &Tensor<f64>| -> f64 {
                conv2d(x, layer)
                    .unwrap()
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&a, &b)| a * b)
                    .sum()
            };
            let (gi, gw, gb) = conv2d_backward(&x, &layer, &g).unwrap();
            let h = 1e-3;
            // sample a handful of coordinates from each gradient
            for idx in [0usize, 7, 23, 49] {
                let mut xp = x.clone();
                xp.data_mut()[idx] += h;
                let mut xm = x.clone();
                xm.data_mut()[idx] -= h;
                let num = (loss(&layer, &xp) - loss(&layer, &xm)) / (2.0 * h);
                let ana = gi.data()[idx];
                assert!(
                    (num - ana).abs() / num.abs().max(ana.abs()).max(1e-8) < 1e-5,
                    "input grad {idx}: {num} vs {ana} (transposed={transposed})"
                );
            }
            for idx in [0usize, 11, 31] {
                let mut lp = layer.clone();
                lp.weights.data_mut()[idx] += h;
                let mut lm = layer.clone();
                lm.weights.data_mut()[idx] -= h;
                let num = (loss(&lp, &x) - loss(&lm, &x)) / (2.0 * h);
                let ana = gw.data()[idx];
                assert!(
                    (num - ana).abs() / num.abs().max(ana.abs()).max(1e-8) < 1e-5,
                    "weight grad {idx}: {num} vs {ana} (transposed={transposed})"
                );
            }
            for idx in 0..layer.bias.len() {
                let mut lp = layer.clone();
                lp.bias[idx] += h;
                let mut lm = layer.clone();
                lm.bias[idx] -= h;
                let num = (loss(&lp, &x) - loss(&lm, &x)) / (2.0 * h);
                let ana = gb[idx];
                assert!(
                    (num - ana).abs() / num.abs().max(ana.abs()).max(1e-8) < 1e-5,
                    "bias grad {idx}: {num} vs {ana} (transposed={transposed})"
                );
            }
        }
    }

    #[test]
    fn batch_norm_standardizes() {
        let mut rng = RngStream::new(9);
        let x = random_tensor(&[4, 2, 5, 5], &mut rng);
        let mut st = BatchNormState::new(2);
        let out = batch_norm(&x, &mut st, true).unwrap();
        for ch in 0..2 {
            let mut vals = Vec::new();
            for bi in 0..4 {
                for i in 0..25 {
                    vals.push(out.data()[(bi * 2 + ch) * 25 + i] as f64);
                }
            }
            let mean: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
            let var: f64 =
                vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-4, "mean {mean}");
            assert!((var - 1.0).abs() < 1e-3, "var {var}");
        }
    }

    #[test]
    fn batch_norm_affine() {
        let mut rng = RngStream::new(10);
        let x = random_tensor(&[4, 1, 6, 6], &mut rng);
        let mut st = BatchNormState::new(1);
        st.gamma[0] = 2.0;
        st.beta[0] = 3.0;
        let out = batch_norm(&x, &mut st, true).unwrap();
        let mean = out.mean();
        let std = out.variance().sqrt();
        assert!((mean - 3.0).abs() < 1e-3, "mean {mean}");
        assert!((std - 2.0).abs() < 1e-3, "std {std}");
    }

    #[test]
    fn batch_norm_eval_identity() {
        let mut rng = RngStream::new(12);
        let x = random_tensor(&[2, 1, 4, 4], &mut rng);
        let mut st = BatchNormState::new(1);
        let out = batch_norm(&x, &mut st, false).unwrap();
        // running mean 0, var 1: output differs from input only by epsilon scaling
        for (a, b) in out.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn batch_norm_degenerate_batch() {
        let x = Tensor::<f32>::zeros(&[1, 1, 1, 1]);
        let mut st = BatchNormState::<f32>::new(1);
        assert!(matches!(
            batch_norm(&x, &mut st, true),
            Err(crate::error::Error::DegenerateBatch(1))
        ));
    }
}
