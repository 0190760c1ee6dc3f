//! Compression toolkit for CNN automatic-modulation-classification models.
//!
//! The crate trains small convolutional classifiers on synthetic IQ frames
//! and compresses their first fully connected layer three ways:
//!
//! * [`nettrim`]: L1-minimal re-fitting of the layer under an output
//!   consistency constraint, solved with linearized ADMM.
//! * [`pq`]: product quantization of the weight matrix with per-subspace
//!   k-means codebooks.
//! * [`distill`]: temperature-softened knowledge distillation, plus the two
//!   combined pipelines (distill then prune, distill then quantize).
//!
//! Everything runs on a small reverse-mode tensor engine ([`tensor`]) in
//! 64-bit floats. Inner loops are data-parallel through [`par`] when the
//! `parallel` feature is enabled; results are bitwise identical either way.

pub mod cli;
pub mod datagen;
pub mod distill;
pub mod error;
pub mod nettrim;
pub mod par;
pub mod pq;
pub mod report;
pub mod rng;
pub mod tensor;
pub mod trainer;
pub mod zoo;

pub use error::{Error, Result};
