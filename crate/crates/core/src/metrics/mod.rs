//! Evaluation of generated cells and of classifier predictions.
//!
//! Generated and real cells are normalized, projected with a PCA fitted on
//! the real cells, and compared in the leading components: MMD with a
//! three-kernel Gaussian mixture, label consistency among neighbours
//! (sKNN and its real-vs-generated gap), and the accuracy of a KNN
//! classifier trained on real cells (pKNN). All neighbour searches are
//! exact, with ties broken by point index.

mod classification;
mod knn;
mod mmd;
mod pca;

use std::collections::BTreeMap;

use ndarray::s;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{normalize_log1p_lenient, ExprError, ExpressionMatrix};

pub use classification::{classification_metrics, ClassScore, ClassificationReport};
pub use knn::{delta_sknn, knn_classify, median_bandwidth, pknn, sknn, Embedding};
pub use mmd::{kernel_gammas, mixture_kernel, mmd};
pub use pca::{pca_fit, pca_transform, PcaModel};

/// Neighbourhood sizes reported for the KNN metrics.
pub const K_SWEEP: [usize; 4] = [5, 10, 25, 50];
/// Neighbours averaged per point for the MMD bandwidth.
pub const BANDWIDTH_NEIGHBORS: usize = 25;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("degenerate kernel bandwidth {0}")]
    DegenerateBandwidth(f64),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub k_list: Vec<usize>,
    pub target_sum: f64,
    /// Components of the PCA fit, capped by genes and cells.
    pub fit_components: usize,
    /// Leading components the metrics are computed in.
    pub embed_dims: usize,
    pub bandwidth_neighbors: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k_list: K_SWEEP.to_vec(),
            target_sum: crate::expr::DEFAULT_TARGET_SUM,
            fit_components: 50,
            embed_dims: 2,
            bandwidth_neighbors: BANDWIDTH_NEIGHBORS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionBlock {
    pub classes: Vec<String>,
    /// Rows are truth classes; the last column counts unanswered cases.
    pub matrix: Vec<Vec<usize>>,
}

/// Flat metric map (`mmd`, `sknn.K5`, `pknn.mean`, `f1.macro`, ...) plus
/// the embedding used and an optional confusion matrix.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embedding: Option<String>,
    #[serde(flatten)]
    pub values: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub confusion: Option<ConfusionBlock>,
}

impl EvalReport {
    pub fn get(&self, key: &str) -> Option<f64> {
        self.values.get(key).copied()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("finite values serialize") + "\n"
    }

    /// `metric,value` rows in key order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        for (k, v) in &self.values {
            out.push_str(&format!("{k},{v}\n"));
        }
        out
    }

    fn put(&mut self, key: impl Into<String>, v: f64) {
        self.values.insert(key.into(), v);
    }
}

/// Real and generated cells embedded in the leading components of a PCA
/// fitted on the real cells, with a description such as `pca50:2`.
pub fn embed_pair(
    real: &ExpressionMatrix,
    real_labels: &[String],
    gen: &ExpressionMatrix,
    gen_labels: &[String],
    cfg: &EvalConfig,
) -> Result<(Embedding, Embedding, String), MetricError> {
    if real.vocabulary().genes() != gen.vocabulary().genes() {
        return Err(MetricError::Shape("real and generated cells use different gene vocabularies".into()));
    }
    if real.n_cells() < 2 {
        return Err(MetricError::Argument("need at least two real cells".into()));
    }
    let xr = normalize_log1p_lenient(real, cfg.target_sum);
    let xg = normalize_log1p_lenient(gen, cfg.target_sum);
    let k = cfg.fit_components.min(real.n_genes()).min(real.n_cells() - 1);
    let model = pca_fit(xr.view(), k)?;
    let d = cfg.embed_dims.min(k);
    let er = pca_transform(&model, xr.view())?.slice(s![.., ..d]).to_owned();
    let eg = pca_transform(&model, xg.view())?.slice(s![.., ..d]).to_owned();
    Ok((
        Embedding::new(er, real_labels.to_vec())?,
        Embedding::new(eg, gen_labels.to_vec())?,
        format!("pca{k}:{d}"),
    ))
}

/// Metrics of already embedded point sets.
pub fn evaluate_embeddings(real: &Embedding, gen: &Embedding, cfg: &EvalConfig) -> Result<EvalReport, MetricError> {
    let mut r = EvalReport::default();
    let omega = median_bandwidth(real, cfg.bandwidth_neighbors)?;
    r.put("omega", omega);
    r.put("mmd", mmd(gen.points(), real.points(), omega)?);
    let (mut sg, mut sr, mut ds, mut pk) = (0.0, 0.0, 0.0, 0.0);
    for &k in &cfg.k_list {
        let g = sknn(gen, k)?;
        let rv = sknn(real, k)?;
        let p = pknn(real, gen, k)?;
        r.put(format!("sknn.K{k}"), g);
        r.put(format!("sknn_real.K{k}"), rv);
        r.put(format!("delta_sknn.K{k}"), (g - rv).abs());
        r.put(format!("pknn.K{k}"), p);
        sg += g;
        sr += rv;
        ds += (g - rv).abs();
        pk += p;
    }
    if !cfg.k_list.is_empty() {
        let n = cfg.k_list.len() as f64;
        r.put("sknn.mean", sg / n);
        r.put("sknn_real.mean", sr / n);
        r.put("delta_sknn.mean", ds / n);
        r.put("pknn.mean", pk / n);
    }
    Ok(r)
}

/// Full generation report: embedding, MMD and the KNN sweep.
pub fn evaluate_generation(
    real: &ExpressionMatrix,
    real_labels: &[String],
    gen: &ExpressionMatrix,
    gen_labels: &[String],
    cfg: &EvalConfig,
) -> Result<EvalReport, MetricError> {
    let (er, eg, desc) = embed_pair(real, real_labels, gen, gen_labels, cfg)?;
    let mut r = evaluate_embeddings(&er, &eg, cfg)?;
    r.embedding = Some(desc);
    Ok(r)
}

/// Classification block: `f1.weighted`, `f1.macro`, `accuracy.true`.
pub fn evaluate_predictions(pred: &[Option<String>], truth: &[String]) -> Result<EvalReport, MetricError> {
    let c = classification_metrics(pred, truth)?;
    let mut r = EvalReport::default();
    r.put("f1.weighted", c.weighted_f1);
    r.put("f1.macro", c.macro_f1);
    r.put("accuracy.true", c.true_accuracy);
    r.confusion = Some(ConfusionBlock { classes: c.classes, matrix: c.confusion });
    Ok(r)
}
