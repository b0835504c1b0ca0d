use log::{debug, info};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::ElboBatch;
use super::{
    estimate_library_prior, Condition, ConditionCategories, ConditionEncoder, CvaeArch, CvaeError, CvaeModel,
};
use crate::expr::{CellAnnotations, Dataset};
use crate::numkit::{Activation, Adam, NumError, RngStream, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvaeConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    /// KL weight reached after warm-up.
    pub alpha: f64,
    /// Fraction of all optimizer steps over which the KL weight ramps
    /// linearly from 0 to `alpha`.
    pub warmup_frac: f64,
    pub seed: u64,
    pub d_z: usize,
    pub d_c: usize,
    pub hidden: usize,
    /// Width of each attribute embedding before projection to `d_c`.
    pub embed_dim: usize,
    pub activation: Activation,
    pub target_sum: f64,
}

impl Default for CvaeConfig {
    fn default() -> Self {
        CvaeConfig {
            lr: 1e-3,
            epochs: 160,
            batch: 64,
            alpha: 1.0,
            warmup_frac: 0.1,
            seed: 0,
            d_z: 256,
            d_c: 256,
            hidden: 128,
            embed_dim: 32,
            activation: Activation::Softplus,
            target_sum: crate::expr::DEFAULT_TARGET_SUM,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Model with the lowest validation loss (the final model without a
    /// validation set).
    pub model: CvaeModel,
    /// Mean per-cell training loss of each epoch.
    pub history: Vec<f64>,
    /// Mean per-cell validation loss after each epoch.
    pub valid_history: Vec<f64>,
    /// 1-based epoch of the selected model; 0 for the initial one.
    pub best_epoch: usize,
}

fn merged_categories(a: &CellAnnotations, b: Option<&CellAnnotations>) -> ConditionCategories {
    let mut all = a.clone();
    if let Some(b) = b {
        all.labels.extend_from_slice(&b.labels);
        all.species.extend_from_slice(&b.species);
        all.tissue.extend_from_slice(&b.tissue);
    }
    ConditionCategories::from_annotations(&all)
}

struct CellRows {
    rows: Vec<Vec<f64>>,
    conditions: Vec<Condition>,
}

impl CellRows {
    fn of(d: &Dataset) -> Self {
        CellRows {
            rows: (0..d.n_cells())
                .map(|c| d.matrix.dense_row(c).into_iter().map(f64::from).collect())
                .collect(),
            conditions: (0..d.n_cells()).map(|c| Condition::of_cell(&d.annotations, c)).collect(),
        }
    }

    fn batch(&self, cells: &[usize], target_sum: f64) -> Result<ElboBatch, CvaeError> {
        let rows: Vec<Vec<f64>> = cells.iter().map(|&c| self.rows[c].clone()).collect();
        let conds = cells.iter().map(|&c| self.conditions[c].clone()).collect();
        ElboBatch::new(&rows, conds, target_sum)
    }
}

fn noise(rng: &mut RngStream, n: usize, d: usize) -> Tensor {
    Tensor::matrix(n, d, rng.normals(n * d)).expect("sized")
}

/// Mean per-cell loss over a dataset with noise drawn from a fixed stream.
fn evaluate(model: &CvaeModel, cells: &CellRows, batch: usize, seed: u64) -> Result<f64, CvaeError> {
    let mut rng = RngStream::substream(seed, 2);
    let idx: Vec<usize> = (0..cells.rows.len()).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(batch) {
        let b = cells.batch(chunk, model.arch.target_sum)?;
        let eps = noise(&mut rng, chunk.len(), model.arch.d_z + 1);
        total += model.elbo_with(&model.params, &b, model.alpha, &eps)?.loss;
    }
    Ok(total / cells.rows.len() as f64)
}

/// Trains with Adam on single-sample ELBO minibatches. Deterministic under
/// `cfg.seed`. A non-finite loss or gradient aborts with
/// [`CvaeError::Diverged`] carrying the model from the end of the last
/// completed epoch.
pub fn train_cvae(train: &Dataset, valid: Option<&Dataset>, cfg: &CvaeConfig) -> Result<TrainOutcome, CvaeError> {
    if train.n_cells() == 0 {
        return Err(CvaeError::EmptyTrain);
    }
    if cfg.batch == 0 || !(cfg.lr > 0.0) || !(cfg.alpha >= 0.0) || !(0.0..=1.0).contains(&cfg.warmup_frac) {
        return Err(CvaeError::InvalidArgument(
            "batch and learning rate must be positive, alpha non-negative, warm-up fraction in [0, 1]".into(),
        ));
    }
    let valid = valid.filter(|v| v.n_cells() > 0);
    let categories = merged_categories(&train.annotations, valid.map(|v| &v.annotations));
    let arch = CvaeArch {
        n_genes: train.matrix.n_genes(),
        d_z: cfg.d_z,
        hidden: cfg.hidden,
        activation: cfg.activation,
        condition: ConditionEncoder::new(categories, cfg.embed_dim, cfg.d_c)?,
        target_sum: cfg.target_sum,
    };
    let prior = estimate_library_prior(&train.matrix)?;
    let mut model = CvaeModel::new(arch, train.matrix.vocabulary().clone(), prior, cfg.seed)?;
    model.alpha = cfg.alpha;
    model.lr = cfg.lr;

    let train_rows = CellRows::of(train);
    let valid_rows = valid.map(CellRows::of);
    let n = train.n_cells();
    let steps_per_epoch = n.div_ceil(cfg.batch);
    let warmup = (cfg.warmup_frac * (steps_per_epoch * cfg.epochs) as f64).ceil() as usize;

    let mut rng = RngStream::substream(cfg.seed, 1);
    let mut adam = Adam::new(cfg.lr);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut valid_history = Vec::new();
    let mut best = None;
    if let Some(v) = &valid_rows {
        best = Some((evaluate(&model, v, cfg.batch, cfg.seed)?, 0, model.clone()));
    }
    let mut step = 0usize;
    for epoch in 1..=cfg.epochs {
        let last_good = model.clone();
        let diverged = |model: CvaeModel| CvaeError::Diverged { epoch, last_good: Box::new(model) };
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let alpha_t = if step < warmup { cfg.alpha * (step + 1) as f64 / warmup as f64 } else { cfg.alpha };
            let b = train_rows.batch(chunk, cfg.target_sum)?;
            let eps = noise(&mut rng, chunk.len(), cfg.d_z + 1);
            match model.elbo_loss(&b, alpha_t, &eps) {
                Ok(t) => total += t.loss,
                Err(CvaeError::NonFinite { .. }) => return Err(diverged(last_good)),
                Err(e) => return Err(e),
            }
            match adam.step(&mut model.params) {
                Ok(()) => {}
                Err(NumError::NonFiniteGradient { .. }) => return Err(diverged(last_good)),
                Err(e) => return Err(e.into()),
            }
            step += 1;
        }
        let mean = total / n as f64;
        history.push(mean);
        model.epochs = epoch;
        if let Some(v) = &valid_rows {
            let vl = evaluate(&model, v, cfg.batch, cfg.seed)?;
            valid_history.push(vl);
            debug!("epoch {epoch}: train {mean:.4}, valid {vl:.4}");
            if best.as_ref().is_none_or(|(b, _, _)| vl < *b) {
                best = Some((vl, epoch, model.clone()));
            }
        } else {
            debug!("epoch {epoch}: train {mean:.4}");
        }
    }
    let (mut model, best_epoch) = match best {
        Some((_, e, m)) => (m, e),
        None => (model, cfg.epochs),
    };
    model.epochs = cfg.epochs;
    model.params.zero_grad();
    info!("cvae trained for {} epochs, selected epoch {best_epoch}", cfg.epochs);
    Ok(TrainOutcome { model, history, valid_history, best_epoch })
}
