//! Single-cell expression toolkit.
//!
//! - [`expr`]: count matrices, file formats, QC, normalization, HVG
//!   selection, vocabularies and splits.
//! - [`numkit`]: tensors, reverse-mode tape, MLPs, Adam and seeded RNG.
//! - [`cvae`]: conditional VAE with a ZINB decoder, training and sampling.
//! - [`classify`]: cell classifier, gradient saliency and Welch markers.
//! - [`metrics`]: PCA embedding, MMD, KNN label metrics and F1.
//! - [`templates`]: instruction-template filtering, deduplication and filling.
//! - [`synth`]: synthetic ZINB datasets with known parameters.
//! - [`cli`]: the `cellkit` command line.

pub mod classify;
pub mod cli;
pub mod cvae;
pub mod expr;
pub mod metrics;
pub mod numkit;
pub mod synth;
pub mod templates;
