//! cceVAE parameter container and the forward/backward passes.

use crate::error::{Error, Result};
use crate::nn::{
    batch_norm_backward, batch_norm_forward, conv2d, conv2d_backward, init_uniform, leaky_relu,
    BnMode,
    leaky_relu_backward, BatchNormState, BnCache, ConvLayer, DenseLayer,
};
use crate::rng::RngStream;
use crate::tensor::{Scalar, Tensor};

pub const LATENT_SIZE: usize = 256;
const CHANNELS: [usize; 3] = [64, 128, 256];
const LOGVAR_CLAMP: f64 = 10.0;

/// Downsampling residual block: 4x4 stride-2 conv + batch norm on the main
/// path, 1x1 stride-2 conv on the skip path, leaky rectifier after the sum.
#[derive(Clone, Debug)]
pub struct ResBlockDown<T: Scalar = f32> {
    pub conv: ConvLayer<T>,
    pub bn: BatchNormState<T>,
    pub skip: ConvLayer<T>,
}

/// Upsampling mirror of [`ResBlockDown`] built from transposed convolutions
/// (4x4 stride-2 main path, 2x2 stride-2 skip path).
#[derive(Clone, Debug)]
pub struct ResBlockUp<T: Scalar = f32> {
    pub conv: ConvLayer<T>,
    pub bn: BatchNormState<T>,
    pub skip: ConvLayer<T>,
}

pub(crate) struct BlockCache<T: Scalar> {
    input: Tensor<T>,
    bn: BnCache<T>,
    pre_act: Tensor<T>,
}

pub(crate) struct EncCache<T: Scalar> {
    blocks: Vec<BlockCache<T>>,
    flat: Tensor<T>,
    logvar_raw: Tensor<T>,
}

pub(crate) struct DecCache<T: Scalar> {
    z: Tensor<T>,
    fc_out: Tensor<T>,
    blocks: Vec<BlockCache<T>>,
    out_in: Tensor<T>,
}

/// All learnable parameters of the encoder, decoder and latent projections,
/// plus batch-norm running statistics.
#[derive(Clone, Debug)]
pub struct ModelParams<T: Scalar = f32> {
    pub enc: Vec<ResBlockDown<T>>,
    pub fc_mu: DenseLayer<T>,
    pub fc_logvar: DenseLayer<T>,
    pub fc_decode: DenseLayer<T>,
    pub dec: Vec<ResBlockUp<T>>,
    pub out_conv: ConvLayer<T>,
    pub input_side: usize,
}

fn conv_init<T: Scalar>(
    out_ch: usize,
    in_ch: usize,
    k: usize,
    stride: usize,
    pad: usize,
    transposed: bool,
    rng: &mut RngStream,
) -> ConvLayer<T> {
    let fan_in = if transposed { out_ch * k * k } else { in_ch * k * k };
    let weights = init_uniform(&[out_ch, in_ch, k, k], fan_in, rng);
    let bias_len = if transposed { in_ch } else { out_ch };
    ConvLayer::new(weights, vec![T::zero(); bias_len], stride, pad, transposed)
        .expect("valid conv construction")
}

fn dense_init<T: Scalar>(out_f: usize, in_f: usize, rng: &mut RngStream) -> DenseLayer<T> {
    let weights = init_uniform(&[out_f, in_f], in_f, rng);
    DenseLayer::new(weights, vec![T::zero(); out_f]).expect("valid dense construction")
}

impl<T: Scalar> ModelParams<T> {
    /// Fresh model for square inputs of side `input_side` (a power of two,
    /// at least 16).
    pub fn new(input_side: usize, rng: &mut RngStream) -> Result<Self> {
        if input_side < 16 || !input_side.is_power_of_two() {
            return Err(Error::Invalid(format!(
                "input_side must be a power of two >= 16, got {input_side}"
            )));
        }
        let mut enc = Vec::new();
        let mut in_ch = 1;
        for &out_ch in &CHANNELS {
            enc.push(ResBlockDown {
                conv: conv_init(out_ch, in_ch, 4, 2, 1, false, rng),
                bn: BatchNormState::new(out_ch),
                skip: conv_init(out_ch, in_ch, 1, 2, 0, false, rng),
            });
            in_ch = out_ch;
        }
        let flat = Self::flat_features(input_side);
        let fc_mu = dense_init(LATENT_SIZE, flat, rng);
        let fc_logvar = dense_init(LATENT_SIZE, flat, rng);
        let fc_decode = dense_init(flat, LATENT_SIZE, rng);
        let mut dec = Vec::new();
        for i in (1..CHANNELS.len()).rev() {
            // transposed layer [in, out, 4, 4] maps CHANNELS[i] -> CHANNELS[i-1]
            dec.push(ResBlockUp {
                conv: conv_init(CHANNELS[i], CHANNELS[i - 1], 4, 2, 1, true, rng),
                bn: BatchNormState::new(CHANNELS[i - 1]),
                skip: conv_init(CHANNELS[i], CHANNELS[i - 1], 2, 2, 0, true, rng),
            });
        }
        let out_conv = conv_init(CHANNELS[0], 1, 4, 2, 1, true, rng);
        Ok(ModelParams {
            enc,
            fc_mu,
            fc_logvar,
            fc_decode,
            dec,
            out_conv,
            input_side,
        })
    }

    pub fn bottleneck_side(input_side: usize) -> usize {
        input_side / 8
    }

    pub fn flat_features(input_side: usize) -> usize {
        let s = Self::bottleneck_side(input_side);
        CHANNELS[2] * s * s
    }

    /// Same shapes, all values zero. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut g = self.clone();
        g.visit_params_mut(&mut |slice| {
            for v in slice.iter_mut() {
                *v = T::zero();
            }
        });
        // running stats are not gradients; zero them too for cleanliness
        for b in g.enc.iter_mut() {
            b.bn.running_mean.iter_mut().for_each(|v| *v = T::zero());
            b.bn.running_var.iter_mut().for_each(|v| *v = T::zero());
        }
        for b in g.dec.iter_mut() {
            b.bn.running_mean.iter_mut().for_each(|v| *v = T::zero());
            b.bn.running_var.iter_mut().for_each(|v| *v = T::zero());
        }
        g
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let cast_conv = |c: &ConvLayer<T>| -> ConvLayer<U> {
            ConvLayer {
                weights: c.weights.cast(),
                bias: c.bias.iter().map(|&v| U::from_f64(v.into_f64())).collect(),
                stride: c.stride,
                pad: c.pad,
                transposed: c.transposed,
            }
        };
        let cast_bn = |b: &BatchNormState<T>| -> BatchNormState<U> {
            BatchNormState {
                gamma: b.gamma.iter().map(|&v| U::from_f64(v.into_f64())).collect(),
                beta: b.beta.iter().map(|&v| U::from_f64(v.into_f64())).collect(),
                running_mean: b
                    .running_mean
                    .iter()
                    .map(|&v| U::from_f64(v.into_f64()))
                    .collect(),
                running_var: b
                    .running_var
                    .iter()
                    .map(|&v| U::from_f64(v.into_f64()))
                    .collect(),
                momentum: U::from_f64(b.momentum.into_f64()),
                epsilon: U::from_f64(b.epsilon.into_f64()),
            }
        };
        let cast_dense = |d: &DenseLayer<T>| -> DenseLayer<U> {
            DenseLayer {
                weights: d.weights.cast(),
                bias: d.bias.iter().map(|&v| U::from_f64(v.into_f64())).collect(),
            }
        };
        ModelParams {
            enc: self
                .enc
                .iter()
                .map(|b| ResBlockDown {
                    conv: cast_conv(&b.conv),
                    bn: cast_bn(&b.bn),
                    skip: cast_conv(&b.skip),
                })
                .collect(),
            fc_mu: cast_dense(&self.fc_mu),
            fc_logvar: cast_dense(&self.fc_logvar),
            fc_decode: cast_dense(&self.fc_decode),
            dec: self
                .dec
                .iter()
                .map(|b| ResBlockUp {
                    conv: cast_conv(&b.conv),
                    bn: cast_bn(&b.bn),
                    skip: cast_conv(&b.skip),
                })
                .collect(),
            out_conv: cast_conv(&self.out_conv),
            input_side: self.input_side,
        }
    }

    /// Visit every learnable slice in a fixed order (conv weights and bias,
    /// batch-norm gamma and beta, skip weights and bias per block, then the
    /// dense layers, then the decoder mirror and output conv).
    pub fn visit_params_mut(&mut self, f: &mut impl FnMut(&mut [T])) {
        for b in self.enc.iter_mut() {
            f(b.conv.weights.data_mut());
            f(&mut b.conv.bias);
            f(&mut b.bn.gamma);
            f(&mut b.bn.beta);
            f(b.skip.weights.data_mut());
            f(&mut b.skip.bias);
        }
        f(self.fc_mu.weights.data_mut());
        f(&mut self.fc_mu.bias);
        f(self.fc_logvar.weights.data_mut());
        f(&mut self.fc_logvar.bias);
        f(self.fc_decode.weights.data_mut());
        f(&mut self.fc_decode.bias);
        for b in self.dec.iter_mut() {
            f(b.conv.weights.data_mut());
            f(&mut b.conv.bias);
            f(&mut b.bn.gamma);
            f(&mut b.bn.beta);
            f(b.skip.weights.data_mut());
            f(&mut b.skip.bias);
        }
        f(self.out_conv.weights.data_mut());
        f(&mut self.out_conv.bias);
    }

    /// Visit the non-learnable state (batch-norm running mean and variance
    /// per block) in a fixed order. Kept separate from `visit_params_mut` so
    /// the optimizer never touches it, but checkpoints must persist it for
    /// eval-mode batch norm to work after a reload.
    pub fn visit_state_mut(&mut self, f: &mut impl FnMut(&mut [T])) {
        for b in self.enc.iter_mut() {
            f(&mut b.bn.running_mean);
            f(&mut b.bn.running_var);
        }
        for b in self.dec.iter_mut() {
            f(&mut b.bn.running_mean);
            f(&mut b.bn.running_var);
        }
    }

    pub fn n_state(&self) -> usize {
        let mut n = 0;
        let mut copy = self.clone();
        copy.visit_state_mut(&mut |s| n += s.len());
        n
    }

    pub fn flatten_state(&self) -> Vec<T> {
        let mut out = Vec::new();
        let mut copy = self.clone();
        copy.visit_state_mut(&mut |s| out.extend_from_slice(s));
        out
    }

    pub fn load_state(&mut self, flat: &[T]) -> Result<()> {
        let mut offset = 0;
        let mut overrun = false;
        self.visit_state_mut(&mut |s| {
            if offset + s.len() > flat.len() {
                overrun = true;
                return;
            }
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        });
        if overrun || offset != flat.len() {
            return Err(Error::Dimension(format!(
                "flat state vector length {} does not match model ({} consumed)",
                flat.len(),
                offset
            )));
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        let mut n = 0;
        let mut copy = self.clone();
        copy.visit_params_mut(&mut |s| n += s.len());
        n
    }

    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::new();
        let mut copy = self.clone();
        copy.visit_params_mut(&mut |s| out.extend_from_slice(s));
        out
    }

    pub fn load_flat(&mut self, flat: &[T]) -> Result<()> {
        let mut offset = 0;
        let mut overrun = false;
        self.visit_params_mut(&mut |s| {
            if offset + s.len() > flat.len() {
                overrun = true;
                return;
            }
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        });
        if overrun || offset != flat.len() {
            return Err(Error::Dimension(format!(
                "flat parameter vector length {} does not match model ({} consumed)",
                flat.len(),
                offset
            )));
        }
        Ok(())
    }

    fn block_forward_down(
        block: &mut ResBlockDown<T>,
        x: &Tensor<T>,
        mode: BnMode,
    ) -> Result<(Tensor<T>, BlockCache<T>)> {
        let c = conv2d(x, &block.conv)?;
        let (bn_out, bn_cache) = batch_norm_forward(&c, &mut block.bn, mode)?;
        let sk = conv2d(x, &block.skip)?;
        let pre_data = bn_out
            .data()
            .iter()
            .zip(sk.data())
            .map(|(&a, &b)| a + b)
            .collect();
        let pre = Tensor::from_vec(bn_out.dims(), pre_data)?;
        let y = leaky_relu(&pre);
        Ok((
            y,
            BlockCache {
                input: x.clone(),
                bn: bn_cache,
                pre_act: pre,
            },
        ))
    }

    fn block_forward_up(
        block: &mut ResBlockUp<T>,
        x: &Tensor<T>,
        mode: BnMode,
    ) -> Result<(Tensor<T>, BlockCache<T>)> {
        let c = conv2d(x, &block.conv)?;
        let (bn_out, bn_cache) = batch_norm_forward(&c, &mut block.bn, mode)?;
        let sk = conv2d(x, &block.skip)?;
        let pre_data = bn_out
            .data()
            .iter()
            .zip(sk.data())
            .map(|(&a, &b)| a + b)
            .collect();
        let pre = Tensor::from_vec(bn_out.dims(), pre_data)?;
        let y = leaky_relu(&pre);
        Ok((
            y,
            BlockCache {
                input: x.clone(),
                bn: bn_cache,
                pre_act: pre,
            },
        ))
    }

    fn block_backward(
        conv: &ConvLayer<T>,
        bn: &BatchNormState<T>,
        skip: &ConvLayer<T>,
        cache: &BlockCache<T>,
        grad_y: &Tensor<T>,
        g_conv: &mut ConvLayer<T>,
        g_bn: &mut BatchNormState<T>,
        g_skip: &mut ConvLayer<T>,
    ) -> Result<Tensor<T>> {
        let g_pre = leaky_relu_backward(&cache.pre_act, grad_y);
        let (g_bn_in, g_gamma, g_beta) = batch_norm_backward(&g_pre, &cache.bn, bn)?;
        for (a, b) in g_bn.gamma.iter_mut().zip(&g_gamma) {
            *a = *a + *b;
        }
        for (a, b) in g_bn.beta.iter_mut().zip(&g_beta) {
            *a = *a + *b;
        }
        let (gx_main, gw, gb) = conv2d_backward(&cache.input, conv, &g_bn_in)?;
        for (a, b) in g_conv.weights.data_mut().iter_mut().zip(gw.data()) {
            *a = *a + *b;
        }
        for (a, b) in g_conv.bias.iter_mut().zip(&gb) {
            *a = *a + *b;
        }
        let (gx_skip, gws, gbs) = conv2d_backward(&cache.input, skip, &g_pre)?;
        for (a, b) in g_skip.weights.data_mut().iter_mut().zip(gws.data()) {
            *a = *a + *b;
        }
        for (a, b) in g_skip.bias.iter_mut().zip(&gbs) {
            *a = *a + *b;
        }
        let gx_data = gx_main
            .data()
            .iter()
            .zip(gx_skip.data())
            .map(|(&a, &b)| a + b)
            .collect();
        Tensor::from_vec(gx_main.dims(), gx_data)
    }

    pub(crate) fn encode_forward(
        &mut self,
        x: &Tensor<T>,
        mode: BnMode,
    ) -> Result<(Tensor<T>, Tensor<T>, EncCache<T>)> {
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.enc.len());
        for block in self.enc.iter_mut() {
            let (y, cache) = Self::block_forward_down(block, &h, mode)?;
            caches.push(cache);
            h = y;
        }
        let b = x.dims()[0];
        let flat = h.reshape(&[b, Self::flat_features(self.input_side)])?;
        let mu = self.fc_mu.forward(&flat)?;
        let logvar_raw = self.fc_logvar.forward(&flat)?;
        let clamp = T::from_f64(LOGVAR_CLAMP);
        let logvar = logvar_raw.map(|v| v.max(-clamp).min(clamp));
        Ok((
            mu,
            logvar,
            EncCache {
                blocks: caches,
                flat,
                logvar_raw,
            },
        ))
    }

    pub(crate) fn encode_backward(
        &self,
        grad_mu: &Tensor<T>,
        grad_logvar: &Tensor<T>,
        cache: &EncCache<T>,
        grads: &mut ModelParams<T>,
    ) -> Result<()> {
        // clamp gating: no gradient where the raw logvar was clipped
        let clamp = T::from_f64(LOGVAR_CLAMP);
        let g_lv_data = grad_logvar
            .data()
            .iter()
            .zip(cache.logvar_raw.data())
            .map(|(&g, &raw)| {
                if raw > clamp || raw < -clamp {
                    T::zero()
                } else {
                    g
                }
            })
            .collect();
        let g_lv = Tensor::from_vec(grad_logvar.dims(), g_lv_data)?;

        let (g_flat_mu, gw_mu, gb_mu) = self.fc_mu.backward(&cache.flat, grad_mu)?;
        for (a, b) in grads
            .fc_mu
            .weights
            .data_mut()
            .iter_mut()
            .zip(gw_mu.data())
        {
            *a = *a + *b;
        }
        for (a, b) in grads.fc_mu.bias.iter_mut().zip(&gb_mu) {
            *a = *a + *b;
        }
        let (g_flat_lv, gw_lv, gb_lv) = self.fc_logvar.backward(&cache.flat, &g_lv)?;
        for (a, b) in grads
            .fc_logvar
            .weights
            .data_mut()
            .iter_mut()
            .zip(gw_lv.data())
        {
            *a = *a + *b;
        }
        for (a, b) in grads.fc_logvar.bias.iter_mut().zip(&gb_lv) {
            *a = *a + *b;
        }

        let g_flat_data: Vec<T> = g_flat_mu
            .data()
            .iter()
            .zip(g_flat_lv.data())
            .map(|(&a, &b)| a + b)
            .collect();
        let b = grad_mu.dims()[0];
        let s = Self::bottleneck_side(self.input_side);
        let mut g_h = Tensor::from_vec(&[b, CHANNELS[2], s, s], g_flat_data)?;

        for (i, block) in self.enc.iter().enumerate().rev() {
            let gblock = &mut grads.enc[i];
            g_h = Self::block_backward(
                &block.conv,
                &block.bn,
                &block.skip,
                &cache.blocks[i],
                &g_h,
                &mut gblock.conv,
                &mut gblock.bn,
                &mut gblock.skip,
            )?;
        }
        Ok(())
    }

    pub(crate) fn decode_forward(
        &mut self,
        z: &Tensor<T>,
        mode: BnMode,
    ) -> Result<(Tensor<T>, DecCache<T>)> {
        let fc_out = self.fc_decode.forward(z)?;
        let act = leaky_relu(&fc_out);
        let b = z.dims()[0];
        let s = Self::bottleneck_side(self.input_side);
        let mut h = act.reshape(&[b, CHANNELS[2], s, s])?;
        let mut caches = Vec::with_capacity(self.dec.len());
        for block in self.dec.iter_mut() {
            let (y, cache) = Self::block_forward_up(block, &h, mode)?;
            caches.push(cache);
            h = y;
        }
        let out_in = h.clone();
        let xhat = conv2d(&h, &self.out_conv)?;
        Ok((
            xhat,
            DecCache {
                z: z.clone(),
                fc_out,
                blocks: caches,
                out_in,
            },
        ))
    }

    pub(crate) fn decode_backward(
        &self,
        grad_xhat: &Tensor<T>,
        cache: &DecCache<T>,
        grads: &mut ModelParams<T>,
    ) -> Result<Tensor<T>> {
        let (mut g_h, gw, gb) = conv2d_backward(&cache.out_in, &self.out_conv, grad_xhat)?;
        for (a, b) in grads
            .out_conv
            .weights
            .data_mut()
            .iter_mut()
            .zip(gw.data())
        {
            *a = *a + *b;
        }
        for (a, b) in grads.out_conv.bias.iter_mut().zip(&gb) {
            *a = *a + *b;
        }
        for (i, block) in self.dec.iter().enumerate().rev() {
            let gblock = &mut grads.dec[i];
            g_h = Self::block_backward(
                &block.conv,
                &block.bn,
                &block.skip,
                &cache.blocks[i],
                &g_h,
                &mut gblock.conv,
                &mut gblock.bn,
                &mut gblock.skip,
            )?;
        }
        let b = cache.z.dims()[0];
        let g_act = g_h.reshape(&[b, Self::flat_features(self.input_side)])?;
        let g_fc = leaky_relu_backward(&cache.fc_out, &g_act);
        let (g_z, gw_d, gb_d) = self.fc_decode.backward(&cache.z, &g_fc)?;
        for (a, b) in grads
            .fc_decode
            .weights
            .data_mut()
            .iter_mut()
            .zip(gw_d.data())
        {
            *a = *a + *b;
        }
        for (a, b) in grads.fc_decode.bias.iter_mut().zip(&gb_d) {
            *a = *a + *b;
        }
        Ok(g_z)
    }
}
