//! 2D convolution and its exact adjoint (transposed convolution).
//!
//! Both directions are lowered to im2col plus a small matrix multiply, which
//! is where nearly all training time goes on a single core.

use crate::error::{Error, Result};
use crate::tensor::{matmul_a_bt_acc, matmul_acc, matmul_at_b_acc, Scalar, Tensor};

/// A (possibly transposed) square-kernel convolution layer.
///
/// Weights are `[out_ch, in_ch, k, k]`. A direct layer maps `in_ch` input
/// channels to `out_ch`; a transposed layer is the adjoint map and takes
/// `out_ch` channels to `in_ch`. The bias length always matches the number
/// of *output* channels of the realized map.
#[derive(Clone, Debug)]
pub struct ConvLayer<T: Scalar = f32> {
    pub weights: Tensor<T>,
    pub bias: Vec<T>,
    pub stride: usize,
    pub pad: usize,
    pub transposed: bool,
}

impl<T: Scalar> ConvLayer<T> {
    pub fn new(
        weights: Tensor<T>,
        bias: Vec<T>,
        stride: usize,
        pad: usize,
        transposed: bool,
    ) -> Result<Self> {
        let d = weights.dims();
        if d.len() != 4 {
            return Err(Error::Dimension(format!(
                "conv weights must be rank 4, got {:?}",
                d
            )));
        }
        if d[2] != d[3] {
            return Err(Error::Dimension(format!(
                "kernel must be square, got {}x{}",
                d[2], d[3]
            )));
        }
        if stride == 0 {
            return Err(Error::Dimension("stride must be positive".into()));
        }
        let out_channels = if transposed { d[1] } else { d[0] };
        if bias.len() != out_channels {
            return Err(Error::ShapeMismatch {
                axis: 0,
                expected: out_channels,
                got: bias.len(),
                context: "conv bias".into(),
            });
        }
        Ok(ConvLayer {
            weights,
            bias,
            stride,
            pad,
            transposed,
        })
    }

    pub fn out_ch(&self) -> usize {
        self.weights.dims()[0]
    }

    pub fn in_ch(&self) -> usize {
        self.weights.dims()[1]
    }

    pub fn kernel(&self) -> usize {
        self.weights.dims()[2]
    }

    /// Channels the op consumes / produces.
    pub fn input_channels(&self) -> usize {
        if self.transposed {
            self.out_ch()
        } else {
            self.in_ch()
        }
    }

    pub fn output_channels(&self) -> usize {
        if self.transposed {
            self.in_ch()
        } else {
            self.out_ch()
        }
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<(usize, usize, usize, usize)> {
        let d = input.dims();
        if d.len() != 4 {
            return Err(Error::Dimension(format!(
                "conv input must be rank 4 [B,C,H,W], got {:?}",
                d
            )));
        }
        if d[1] != self.input_channels() {
            return Err(Error::ShapeMismatch {
                axis: 1,
                expected: self.input_channels(),
                got: d[1],
                context: "conv input channels".into(),
            });
        }
        Ok((d[0], d[1], d[2], d[3]))
    }

    /// Spatial output size for a given spatial input size.
    pub fn out_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let k = self.kernel();
        let (s, p) = (self.stride, self.pad);
        if self.transposed {
            let oh = (h - 1) * s + k;
            let ow = (w - 1) * s + k;
            if oh <= 2 * p || ow <= 2 * p {
                return Err(Error::Dimension(format!(
                    "transposed conv output {}x{} not positive after pad {}",
                    oh, ow, p
                )));
            }
            Ok((oh - 2 * p, ow - 2 * p))
        } else {
            if h + 2 * p < k || w + 2 * p < k {
                return Err(Error::Dimension(format!(
                    "conv input {}x{} smaller than kernel {} with pad {}",
                    h, w, k, p
                )));
            }
            Ok(((h + 2 * p - k) / s + 1, (w + 2 * p - k) / s + 1))
        }
    }
}

/// Gather patches of `input` (one image, `[C,H,W]`) into `col[C*k*k, oh*ow]`.
fn im2col<T: Scalar>(
    input: &[T],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    col: &mut [T],
) {
    debug_assert_eq!(col.len(), c * k * k * oh * ow);
    for v in col.iter_mut() {
        *v = T::zero();
    }
    let positions = oh * ow;
    for ch in 0..c {
        let plane = &input[ch * h * w..(ch + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[((ch * k + ky) * k + kx) * positions
                    ..((ch * k + ky) * k + kx + 1) * positions];
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src_row = &plane[iy as usize * w..(iy as usize + 1) * w];
                    let dst = &mut row[oy * ow..(oy + 1) * ow];
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            dst[ox] = src_row[ix as usize];
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-add the adjoint of [`im2col`]: `out[C,H,W] += fold(col)`.
fn col2im<T: Scalar>(
    col: &[T],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    out: &mut [T],
) {
    debug_assert_eq!(col.len(), c * k * k * oh * ow);
    debug_assert_eq!(out.len(), c * h * w);
    let positions = oh * ow;
    for ch in 0..c {
        let plane = &mut out[ch * h * w..(ch + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &col[((ch * k + ky) * k + kx) * positions
                    ..((ch * k + ky) * k + kx + 1) * positions];
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst_row = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    let src = &row[oy * ow..(oy + 1) * ow];
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            dst_row[ix as usize] = dst_row[ix as usize] + src[ox];
                        }
                    }
                }
            }
        }
    }
}

/// Forward pass: direct cross-correlation, or its adjoint when the layer is
/// transposed. Output is `[B, out_channels, H', W']`.
pub fn conv2d<T: Scalar>(input: &Tensor<T>, layer: &ConvLayer<T>) -> Result<Tensor<T>> {
    let (b, _c, h, w) = layer.check_input(input)?;
    let (oh, ow) = layer.out_size(h, w)?;
    let oc = layer.output_channels();
    let k = layer.kernel();
    let kk = layer.in_ch() * k * k;
    let mut out = Tensor::zeros(&[b, oc, oh, ow]);

    if layer.transposed {
        // y_b = col2im(W^T x_b) over the output grid
        let positions = h * w;
        let mut tmp = vec![T::zero(); kk * positions];
        for bi in 0..b {
            let x_mat = &input.data()[bi * layer.out_ch() * positions..];
            let x_mat = &x_mat[..layer.out_ch() * positions];
            for v in tmp.iter_mut() {
                *v = T::zero();
            }
            matmul_at_b_acc(layer.weights.data(), x_mat, kk, layer.out_ch(), positions, &mut tmp);
            let y = &mut out.data_mut()[bi * oc * oh * ow..(bi + 1) * oc * oh * ow];
            col2im(&tmp, oc, oh, ow, k, layer.stride, layer.pad, h, w, y);
            for ch in 0..oc {
                let bias = layer.bias[ch];
                for v in &mut y[ch * oh * ow..(ch + 1) * oh * ow] {
                    *v = *v + bias;
                }
            }
        }
    } else {
        let positions = oh * ow;
        let mut col = vec![T::zero(); kk * positions];
        for bi in 0..b {
            let x = &input.data()[bi * layer.in_ch() * h * w..(bi + 1) * layer.in_ch() * h * w];
            im2col(x, layer.in_ch(), h, w, k, layer.stride, layer.pad, oh, ow, &mut col);
            let y = &mut out.data_mut()[bi * oc * positions..(bi + 1) * oc * positions];
            matmul_acc(layer.weights.data(), &col, oc, kk, positions, y);
            for ch in 0..oc {
                let bias = layer.bias[ch];
                for v in &mut y[ch * positions..(ch + 1) * positions] {
                    *v = *v + bias;
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of [`conv2d`] with respect to input, weights and bias.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    layer: &ConvLayer<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Vec<T>)> {
    let (b, _c, h, w) = layer.check_input(input)?;
    let (oh, ow) = layer.out_size(h, w)?;
    let oc = layer.output_channels();
    let gd = grad_out.dims();
    let expected = [b, oc, oh, ow];
    if gd != expected {
        let axis = expected
            .iter()
            .zip(gd)
            .position(|(e, g)| e != g)
            .unwrap_or(0);
        return Err(Error::ShapeMismatch {
            axis,
            expected: expected[axis],
            got: *gd.get(axis).unwrap_or(&0),
            context: "conv grad_out".into(),
        });
    }

    let k = layer.kernel();
    let kk = layer.in_ch() * k * k;
    let mut grad_input = Tensor::zeros(input.dims());
    let mut grad_weights = Tensor::zeros(layer.weights.dims());
    let mut grad_bias = vec![T::zero(); layer.bias.len()];

    // bias gradient: sum of grad_out over batch and positions per channel
    for bi in 0..b {
        for ch in 0..oc {
            let base = (bi * oc + ch) * oh * ow;
            let mut acc = T::zero();
            for &g in &grad_out.data()[base..base + oh * ow] {
                acc = acc + g;
            }
            grad_bias[ch] = grad_bias[ch] + acc;
        }
    }

    if layer.transposed {
        // y = col2im(W^T x); grad_x = W * im2col(g); grad_W = x * im2col(g)^T
        let positions = h * w;
        let mut gcol = vec![T::zero(); kk * positions];
        for bi in 0..b {
            let g = &grad_out.data()[bi * oc * oh * ow..(bi + 1) * oc * oh * ow];
            im2col(g, oc, oh, ow, k, layer.stride, layer.pad, h, w, &mut gcol);
            let gx = &mut grad_input.data_mut()
                [bi * layer.out_ch() * positions..(bi + 1) * layer.out_ch() * positions];
            matmul_acc(layer.weights.data(), &gcol, layer.out_ch(), kk, positions, gx);
            let x = &input.data()[bi * layer.out_ch() * positions..(bi + 1) * layer.out_ch() * positions];
            matmul_a_bt_acc(x, &gcol, layer.out_ch(), positions, kk, grad_weights.data_mut());
        }
    } else {
        let positions = oh * ow;
        let mut col = vec![T::zero(); kk * positions];
        let mut tmp = vec![T::zero(); kk * positions];
        for bi in 0..b {
            let x = &input.data()[bi * layer.in_ch() * h * w..(bi + 1) * layer.in_ch() * h * w];
            im2col(x, layer.in_ch(), h, w, k, layer.stride, layer.pad, oh, ow, &mut col);
            let g = &grad_out.data()[bi * oc * positions..(bi + 1) * oc * positions];
            matmul_a_bt_acc(g, &col, oc, positions, kk, grad_weights.data_mut());
            for v in tmp.iter_mut() {
                *v = T::zero();
            }
            matmul_at_b_acc(layer.weights.data(), g, kk, oc, positions, &mut tmp);
            let gx = &mut grad_input.data_mut()
                [bi * layer.in_ch() * h * w..(bi + 1) * layer.in_ch() * h * w];
            col2im(&tmp, layer.in_ch(), h, w, k, layer.stride, layer.pad, oh, ow, gx);
        }
    }
    Ok((grad_input, grad_weights, grad_bias))
}
