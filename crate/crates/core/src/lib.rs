//! Convolutional sentence classification for modal sense classification and
//! lexical-sample word sense disambiguation.
//!
//! The crate is organized bottom-up:
//!
//! - [`numerics`]: matrices, softmax/cross-entropy, seeded randomness
//! - [`embeddings`]: word-vector tables and sentence matrices
//! - [`dataset`]: corpora, stratified folds, balancing, baselines
//! - [`cnn`] and [`mlp`]: the two neural classifiers with hand-derived gradients
//! - [`optim`]: Adam and the mini-batch training loop
//! - [`eval`]: accuracy, micro averages, mid-p McNemar
//! - [`introspect`]: feature-detector analysis of trained filters
//! - [`harness`]: experiment protocols, outputs and manifests
//!
//! See the `examples/` directory of this crate for one runnable program per
//! capability.

pub mod checkpoint;
pub mod cnn;
pub mod dataset;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod harness;
pub mod introspect;
pub mod mlp;
pub mod numerics;
pub mod optim;

pub use error::{Error, Result};
