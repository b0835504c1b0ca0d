//! Conditional VAE with a zero-inflated negative binomial decoder.
//!
//! The latent space is split into a Gaussian code `z_s` and a log-normal
//! library size `l`. The decoder maps `(z_s, c)` to gene proportions `rho`
//! (softmax) and zero-inflation probabilities `tau` (logistic) through a
//! shared trunk, rescales the library with `l' = f1(l, c)`, and reads the
//! inverse dispersion from a free per-gene vector.
//!
//! The condition vector `c` is a learned embedding of the discrete cell
//! attributes (cell type, species, tissue); [`Condition::Null`] maps to the
//! zero vector.

mod condition;
mod generate;
mod kl;
mod model;
mod train;
mod zinb;

use std::path::PathBuf;

use thiserror::Error;

use crate::expr::ExprError;
use crate::numkit::NumError;

pub use condition::{Condition, ConditionCategories, ConditionEncoder};
pub use generate::{generate, generate_from_params};
pub use kl::{kl_gaussian, kl_lognormal};
pub use model::{
    estimate_library_prior, CellInput, CvaeArch, CvaeModel, Decoded, ElboBatch, ElboTerms, LatentSample, LibraryPrior,
    Posterior,
};
pub use train::{train_cvae, CvaeConfig, TrainOutcome};
pub use zinb::{nb_log_pmf, sample_zinb_chain, zinb_log_pmf, zinb_log_prob, ZinbParams};

#[derive(Debug, Error)]
pub enum CvaeError {
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid count {value} for gene {gene}")]
    InvalidCount { gene: usize, value: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown {field} `{value}`")]
    UnknownCondition { field: &'static str, value: String },
    #[error("non-finite loss (reconstruction {recon}, KL z {kl_z}, KL library {kl_l})")]
    NonFinite { recon: f64, kl_z: f64, kl_l: f64 },
    #[error("training diverged in epoch {epoch}")]
    Diverged { epoch: usize, last_good: Box<CvaeModel> },
    #[error("training split is empty")]
    EmptyTrain,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint sidecar: {0}")]
    Json(#[from] serde_json::Error),
}
