//! StRegA: segmentation-regularised unsupervised anomaly detection for
//! brain-like images.
//!
//! The pipeline trains a compact context-encoding variational autoencoder on
//! anomaly-free data only, then flags anomalies as regions the model fails to
//! reconstruct. Around the model sit tissue segmentation and normalization
//! (preprocessing), residual-to-mask conversion (postprocessing), synthetic
//! phantom and anomaly generation, and a quantitative evaluation harness.
//!
//! See the `examples/` directory for one runnable example per capability and
//! the `strega` binary for the end-to-end CLI.

pub mod cevae;
pub mod cli;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod io;
pub mod mask;
pub mod nn;
pub mod pipeline;
pub mod postprocess;
pub mod preprocess;
pub mod rng;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use mask::{BinMask, SegMask};
pub use rng::RngStream;
pub use tensor::{ImageTensor, Scalar, Tensor};
