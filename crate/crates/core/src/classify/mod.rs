//! Cell classifier over log1p-normalized expression, Vanilla-Gradient
//! saliency of its cross-entropy loss, and one-vs-rest Welch marker
//! ranking.

mod markers;
mod model;
mod saliency;

use std::path::PathBuf;

use thiserror::Error;

use crate::expr::ExprError;
use crate::numkit::NumError;

pub use markers::{
    rank_all_markers, rank_markers, welch_t, write_markers_tsv, MarkerRow, MarkerTable, WelchResult,
    DEFAULT_TOP_MARKERS,
};
pub use model::{train_classifier, Classifier, ClassifierConfig, ClassifierOutcome, Prediction};
pub use saliency::{
    aggregate_top_genes, dataset_saliency, saliency_scores, write_saliency_tsv, GeneSet, SaliencyResult,
    DEFAULT_TOP_GENES,
};

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("training labels contain a single class `{0}`; at least two are needed")]
    SingleClass(String),
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
