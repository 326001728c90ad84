//! A variational latent-variable classifier for implicit discourse relations.
//!
//! A latent vector `z` generates both the bag-of-words representations of
//! the two discourse arguments and the relation label. Two Gaussian
//! approximators are learned jointly with the generative networks: a
//! posterior that sees the label (used during training) and a prior that
//! does not (used for prediction). Training maximizes a reparameterized
//! variational lower bound with Adam, one one-vs-all relation task at a time.
//!
//! Modules, bottom up:
//!
//! - [`numerics`]: dense vectors and matrices, activations, seeded sampling
//! - [`model`]: parameters and forward passes
//! - [`objective`]: the bound and its hand-derived gradients
//! - [`optimizer`] (Adam)
//! - [`data`] and [`synth`]: corpora, vocabulary, encoding, balancing
//! - [`trainer`], [`eval`]: training loop, prediction and metrics
//! - [`checkpoint`]: lossless model files
//! - [`cli`]: the `varndrr` command-line tool

pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod objective;
pub mod optimizer;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
