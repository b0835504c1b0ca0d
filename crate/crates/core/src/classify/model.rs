use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{debug, info, warn};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::ClassifyError;
use crate::expr::{normalize_log1p_lenient, Dataset, ExpressionMatrix, GeneVocabulary};
use crate::numkit::{read_checkpoint, write_checkpoint, Activation, Adam, MlpSpec, ParamStore, RngStream, Tape, Tensor};

const PREFIX: &str = "clf";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    /// Hidden layer widths; empty gives multinomial logistic regression.
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    pub activation: Activation,
    pub target_sum: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            hidden: vec![128],
            lr: 1e-3,
            epochs: 100,
            batch: 64,
            seed: 0,
            activation: Activation::Softplus,
            target_sum: crate::expr::DEFAULT_TARGET_SUM,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub label: String,
    pub index: usize,
    /// Softmax over classes, in class order.
    pub probs: Vec<f64>,
}

/// MLP from log1p-normalized expression to class logits.
#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    pub spec: MlpSpec,
    pub params: ParamStore,
    /// Sorted, unique.
    pub classes: Vec<String>,
    pub genes: Arc<GeneVocabulary>,
    pub target_sum: f64,
    pub seed: u64,
    pub epochs: usize,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    spec: MlpSpec,
    classes: Vec<String>,
    vocabulary_hash: String,
    genes: Vec<String>,
    target_sum: f64,
    seed: u64,
    epochs: usize,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// First index of the largest value.
fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().fold(0, |best, (i, &x)| if x > v[best] { i } else { best })
}

impl Classifier {
    pub fn new(
        genes: Arc<GeneVocabulary>,
        classes: Vec<String>,
        hidden: &[usize],
        activation: Activation,
        target_sum: f64,
        seed: u64,
    ) -> Result<Self, ClassifyError> {
        if classes.len() < 2 {
            return Err(ClassifyError::SingleClass(classes.first().cloned().unwrap_or_default()));
        }
        if classes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ClassifyError::Argument("class names must be sorted and unique".into()));
        }
        if !(target_sum > 0.0 && target_sum.is_finite()) {
            return Err(ClassifyError::Argument(format!("target sum {target_sum} must be positive")));
        }
        let mut widths = vec![genes.len()];
        widths.extend_from_slice(hidden);
        widths.push(classes.len());
        let spec = MlpSpec::uniform(widths, activation, Activation::Identity)?;
        let mut params = ParamStore::new();
        spec.init(&mut params, PREFIX, &mut RngStream::substream(seed, 0));
        Ok(Classifier { spec, params, classes, genes, target_sum, seed, epochs: 0 })
    }

    pub fn n_genes(&self) -> usize {
        self.genes.len()
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.classes.binary_search_by(|c| c.as_str().cmp(label)).ok()
    }

    /// Lenient log1p normalization of `m`, which must share the model's
    /// gene vocabulary.
    pub fn inputs(&self, m: &ExpressionMatrix) -> Result<Tensor, ClassifyError> {
        if m.vocabulary().genes() != self.genes.genes() {
            return Err(ClassifyError::Shape("matrix vocabulary differs from the classifier's".into()));
        }
        let x = normalize_log1p_lenient(m, self.target_sum);
        Ok(Tensor::matrix(x.nrows(), x.ncols(), x.into_raw_vec_and_offset().0)?)
    }

    fn check_row(&self, x: &[f64]) -> Result<(), ClassifyError> {
        if x.len() != self.n_genes() {
            return Err(ClassifyError::Shape(format!("input of length {}, expected {}", x.len(), self.n_genes())));
        }
        Ok(())
    }

    /// Logits of an `[n, genes]` batch under `params`.
    pub fn logits_with(&self, params: &ParamStore, x: &Tensor) -> Result<Tensor, ClassifyError> {
        Ok(self.spec.forward_plain(params, PREFIX, x)?)
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>, ClassifyError> {
        self.check_row(x)?;
        let t = Tensor::matrix(1, x.len(), x.to_vec())?;
        Ok(self.logits_with(&self.params, &t)?.into_data())
    }

    /// Argmax label of a normalized expression vector with its softmax
    /// probabilities. Equal logits resolve to the first class.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction, ClassifyError> {
        Ok(self.prediction(&self.logits(x)?))
    }

    pub fn prediction(&self, logits: &[f64]) -> Prediction {
        let probs = softmax(logits);
        let index = argmax(logits);
        Prediction { label: self.classes[index].clone(), index, probs }
    }

    pub fn predict_matrix(&self, m: &ExpressionMatrix) -> Result<Vec<Prediction>, ClassifyError> {
        let x = self.inputs(m)?;
        if x.shape()[0] == 0 {
            return Ok(Vec::new());
        }
        let logits = self.logits_with(&self.params, &x)?;
        let c = self.classes.len();
        Ok(logits.data().chunks(c).map(|l| self.prediction(l)).collect())
    }

    /// Mean cross-entropy of a batch under `params`.
    pub fn mean_loss_with(&self, params: &ParamStore, x: &Tensor, targets: &[usize]) -> Result<f64, ClassifyError> {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let logits = self.spec.forward(&mut tape, params, PREFIX, xv)?;
        let ce = tape.cross_entropy(logits, targets)?;
        Ok(tape.value(ce)?.data()[0] / targets.len() as f64)
    }

    /// Mean cross-entropy of a batch; parameter gradients are written into
    /// `self.params`.
    pub fn mean_loss_backward(&mut self, x: &Tensor, targets: &[usize]) -> Result<f64, ClassifyError> {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let logits = self.spec.forward(&mut tape, &self.params, PREFIX, xv)?;
        let ce = tape.cross_entropy(logits, targets)?;
        let loss = tape.scale(ce, 1.0 / targets.len() as f64)?;
        tape.backward_into(loss, &mut self.params)?;
        Ok(tape.value(loss)?.data()[0])
    }

    /// Gradient of the cross-entropy of `target` with respect to the
    /// normalized input `x`.
    pub fn vanilla_gradient(&self, x: &[f64], target: &str) -> Result<Vec<f64>, ClassifyError> {
        self.check_row(x)?;
        let t = self.class_index(target).ok_or_else(|| ClassifyError::UnknownClass(target.to_string()))?;
        let mut tape = Tape::new();
        let xv = tape.watch(Tensor::matrix(1, x.len(), x.to_vec())?);
        let logits = self.spec.forward(&mut tape, &self.params, PREFIX, xv)?;
        let ce = tape.cross_entropy(logits, &[t])?;
        let grads = tape.backward(ce)?;
        Ok(grads.wrt(xv).map(|g| g.data().to_vec()).unwrap_or_else(|| vec![0.0; x.len()]))
    }

    pub fn save(&self, path: &Path) -> Result<(), ClassifyError> {
        let file = fs::File::create(path).map_err(|source| ClassifyError::Io { path: path.to_path_buf(), source })?;
        write_checkpoint(&self.params, BufWriter::new(file))?;
        let side = Sidecar {
            spec: self.spec.clone(),
            classes: self.classes.clone(),
            vocabulary_hash: self.genes.digest(),
            genes: self.genes.genes().to_vec(),
            target_sum: self.target_sum,
            seed: self.seed,
            epochs: self.epochs,
        };
        let sp = sidecar_path(path);
        let text = serde_json::to_string_pretty(&side)? + "\n";
        fs::write(&sp, text).map_err(|source| ClassifyError::Io { path: sp, source })
    }

    pub fn load(path: &Path) -> Result<Self, ClassifyError> {
        let sp = sidecar_path(path);
        let text = fs::read_to_string(&sp).map_err(|source| ClassifyError::Io { path: sp.clone(), source })?;
        let side: Sidecar = serde_json::from_str(&text)?;
        let genes = Arc::new(GeneVocabulary::new(side.genes)?);
        if genes.digest() != side.vocabulary_hash {
            return Err(ClassifyError::Argument(format!("{}: vocabulary hash does not match", sp.display())));
        }
        let file = fs::File::open(path).map_err(|source| ClassifyError::Io { path: path.to_path_buf(), source })?;
        let params = read_checkpoint(BufReader::new(file))?;
        let widths = side.spec.widths();
        if widths.first() != Some(&genes.len()) || widths.last() != Some(&side.classes.len()) {
            return Err(ClassifyError::Shape("network widths disagree with genes or classes".into()));
        }
        let mut fresh = ParamStore::new();
        side.spec.init(&mut fresh, PREFIX, &mut RngStream::new(0));
        for (name, t) in fresh.iter() {
            match params.get(name) {
                Some(p) if p.shape() == t.shape() => {}
                _ => return Err(ClassifyError::Shape(format!("checkpoint parameter `{name}` missing or misshapen"))),
            }
        }
        Ok(Classifier {
            spec: side.spec,
            params,
            classes: side.classes,
            genes,
            target_sum: side.target_sum,
            seed: side.seed,
            epochs: side.epochs,
        })
    }
}

#[derive(Clone, Debug)]
pub struct ClassifierOutcome {
    pub model: Classifier,
    /// Mean training cross-entropy of each epoch.
    pub history: Vec<f64>,
    /// Mean validation cross-entropy after each epoch.
    pub valid_history: Vec<f64>,
    /// 1-based epoch of the selected model; 0 for the initial one.
    pub best_epoch: usize,
}

fn sorted_classes(labels: &[String]) -> Vec<String> {
    let mut c = labels.to_vec();
    c.sort();
    c.dedup();
    c
}

/// Rows of `d` whose label the model knows, with their class indices.
fn labelled_inputs(model: &Classifier, d: &Dataset) -> Result<(Tensor, Vec<usize>), ClassifyError> {
    let x = model.inputs(&d.matrix)?;
    let g = model.n_genes();
    let mut data = Vec::with_capacity(x.len());
    let mut targets = Vec::with_capacity(d.n_cells());
    let mut skipped = 0;
    for (c, label) in d.annotations.labels.iter().enumerate() {
        match model.class_index(label) {
            Some(t) => {
                data.extend_from_slice(x.row(c));
                targets.push(t);
            }
            None => skipped += 1,
        }
    }
    if skipped > 0 {
        warn!("{skipped} validation cells carry labels unseen in training and are ignored");
    }
    Ok((Tensor::matrix(targets.len(), g, data)?, targets))
}

fn batch_rows(x: &Tensor, rows: &[usize]) -> Tensor {
    let g = x.shape()[1];
    let mut data = Vec::with_capacity(rows.len() * g);
    for &r in rows {
        data.extend_from_slice(x.row(r));
    }
    Tensor::matrix(rows.len(), g, data).expect("sized")
}

/// Minibatch Adam on the mean cross-entropy, deterministic under
/// `cfg.seed`. With a validation set the epoch with the lowest validation
/// loss is returned, the untrained model included.
pub fn train_classifier(
    train: &Dataset,
    valid: Option<&Dataset>,
    cfg: &ClassifierConfig,
) -> Result<ClassifierOutcome, ClassifyError> {
    if cfg.batch == 0 || !(cfg.lr > 0.0) {
        return Err(ClassifyError::Argument("batch and learning rate must be positive".into()));
    }
    let classes = sorted_classes(&train.annotations.labels);
    if classes.is_empty() {
        return Err(ClassifyError::Argument("empty training set".into()));
    }
    let mut model = Classifier::new(
        train.matrix.vocabulary().clone(),
        classes,
        &cfg.hidden,
        cfg.activation,
        cfg.target_sum,
        cfg.seed,
    )?;
    let (x, targets) = labelled_inputs(&model, train)?;
    let valid = match valid {
        Some(v) => Some(labelled_inputs(&model, v)?).filter(|(_, t)| !t.is_empty()),
        None => None,
    };
    let n = targets.len();
    let mut rng = RngStream::substream(cfg.seed, 1);
    let mut adam = Adam::new(cfg.lr);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut valid_history = Vec::new();
    let mut best = match &valid {
        Some((vx, vt)) => Some((model.mean_loss_with(&model.params, vx, vt)?, 0, model.clone())),
        None => None,
    };
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let bx = batch_rows(&x, chunk);
            let bt: Vec<usize> = chunk.iter().map(|&i| targets[i]).collect();
            total += model.mean_loss_backward(&bx, &bt)? * chunk.len() as f64;
            adam.step(&mut model.params)?;
        }
        let mean = total / n as f64;
        history.push(mean);
        model.epochs = epoch;
        if let Some((vx, vt)) = &valid {
            let vl = model.mean_loss_with(&model.params, vx, vt)?;
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
    info!("classifier trained for {} epochs, selected epoch {best_epoch}", cfg.epochs);
    Ok(ClassifierOutcome { model, history, valid_history, best_epoch })
}
