use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::zinb::zinb_nll;
use super::{Condition, ConditionEncoder, CvaeError, ZinbParams};
use crate::expr::{normalize_counts_log1p, ExprError, ExpressionMatrix, GeneVocabulary};
use crate::numkit::{
    read_checkpoint, softplus, write_checkpoint, Activation, MlpSpec, NumError, ParamStore, RngStream, Tape, Tensor,
    Var,
};

/// Lower bound added to every softplus standard deviation.
const SIGMA_FLOOR: f64 = 1e-4;
/// Lower bound on the library prior variance inside the KL term; a
/// training set with identical library sizes has zero empirical variance.
const PRIOR_VAR_FLOOR: f64 = 1e-4;
const THETA_FLOOR: f64 = 1e-8;

const ENC_Z: &str = "enc_z";
const ENC_L: &str = "enc_l";
const DEC_F1: &str = "dec_f1";
const DEC_TRUNK: &str = "dec_trunk";
const DEC_RHO: &str = "dec_rho";
const DEC_TAU: &str = "dec_tau";
const DISPERSION: &str = "dispersion";

/// Network shape. Every MLP has one hidden layer of width `hidden`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvaeArch {
    pub n_genes: usize,
    pub d_z: usize,
    pub hidden: usize,
    pub activation: Activation,
    pub condition: ConditionEncoder,
    /// Per-cell total used to normalize encoder input.
    pub target_sum: f64,
}

impl CvaeArch {
    pub fn d_c(&self) -> usize {
        self.condition.d_c
    }

    fn mlp(&self, input: usize, output: usize) -> MlpSpec {
        MlpSpec::new(vec![input, self.hidden, output], vec![self.activation, Activation::Identity])
            .expect("positive widths")
    }

    fn enc_z(&self) -> MlpSpec {
        self.mlp(self.n_genes + self.d_c(), 2 * self.d_z)
    }

    fn enc_l(&self) -> MlpSpec {
        self.mlp(self.n_genes + self.d_c() + 1, 2)
    }

    fn dec_f1(&self) -> MlpSpec {
        MlpSpec::new(vec![1 + self.d_c(), 1], vec![Activation::Identity]).expect("positive widths")
    }

    fn dec_trunk(&self) -> MlpSpec {
        MlpSpec::new(vec![self.d_z + self.d_c(), self.hidden], vec![self.activation]).expect("positive widths")
    }

    fn dec_head(&self) -> MlpSpec {
        MlpSpec::new(vec![self.hidden, self.n_genes], vec![Activation::Identity]).expect("positive widths")
    }

    fn validate(&self) -> Result<(), CvaeError> {
        if self.n_genes == 0 || self.d_z == 0 || self.hidden == 0 {
            return Err(CvaeError::InvalidArgument("network widths must be positive".into()));
        }
        if !(self.target_sum > 0.0) {
            return Err(CvaeError::InvalidArgument("target sum must be positive".into()));
        }
        Ok(())
    }
}

/// Log-normal prior on the library size: `ln l ~ N(mean, var)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LibraryPrior {
    pub mean: f64,
    pub var: f64,
}

/// Mean and population variance of `ln(total count)` over all cells.
pub fn estimate_library_prior(m: &ExpressionMatrix) -> Result<LibraryPrior, CvaeError> {
    if m.n_cells() == 0 {
        return Err(CvaeError::EmptyTrain);
    }
    let mut logs = Vec::with_capacity(m.n_cells());
    for c in 0..m.n_cells() {
        let t = m.total(c);
        if t == 0 {
            return Err(ExprError::ZeroTotal { cell: c }.into());
        }
        logs.push((t as f64).ln());
    }
    let n = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / n;
    let var = logs.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / n;
    Ok(LibraryPrior { mean, var })
}

/// Encoder input for one cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellInput {
    /// `log1p` of the cell scaled to the target sum.
    pub normalized: Vec<f64>,
    /// `ln` of the observed total count (0 for an empty cell).
    pub log_total: f64,
}

impl CellInput {
    pub fn from_counts(counts: &[f64], target_sum: f64) -> Self {
        let total: f64 = counts.iter().sum();
        let normalized =
            normalize_counts_log1p(counts, target_sum).unwrap_or_else(|| vec![0.0; counts.len()]);
        CellInput { normalized, log_total: total.max(1.0).ln() }
    }
}

/// Diagonal Gaussian posterior over `z_s` and `ln l`.
#[derive(Clone, Debug, PartialEq)]
pub struct Posterior {
    pub mu_z: Vec<f64>,
    pub sigma_z: Vec<f64>,
    pub mu_l: f64,
    pub sigma_l: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatentSample {
    pub z: Vec<f64>,
    /// Library size on the count scale.
    pub library: f64,
}

impl Posterior {
    /// `z = mu_z + sigma_z * e[..d_z]`, `l = exp(mu_l + sigma_l * e[d_z])`.
    pub fn reparameterize(&self, noise: &[f64]) -> Result<LatentSample, CvaeError> {
        let d = self.mu_z.len();
        if noise.len() != d + 1 {
            return Err(CvaeError::Shape(format!("noise has {} entries, expected {}", noise.len(), d + 1)));
        }
        let z = (0..d).map(|i| self.mu_z[i] + self.sigma_z[i] * noise[i]).collect();
        Ok(LatentSample { z, library: (self.mu_l + self.sigma_l * noise[d]).exp() })
    }
}

/// Decoder output for one cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoded {
    /// Rescaled library `l' = f1(l, c)`.
    pub library: f64,
    /// Gene proportions on the simplex.
    pub rho: Vec<f64>,
    pub zinb: ZinbParams,
}

/// Loss breakdown of one minibatch, summed over cells.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElboTerms {
    /// Negative ZINB log-likelihood.
    pub recon: f64,
    pub kl_z: f64,
    pub kl_l: f64,
    /// `recon + alpha * (kl_z + kl_l)`.
    pub loss: f64,
}

/// Counts, encoder inputs and conditions of a minibatch.
#[derive(Clone, Debug)]
pub struct ElboBatch {
    counts: Vec<f64>,
    inputs: Tensor,
    log_total: Tensor,
    conditions: Vec<Condition>,
}

impl ElboBatch {
    pub fn new(rows: &[Vec<f64>], conditions: Vec<Condition>, target_sum: f64) -> Result<Self, CvaeError> {
        if rows.is_empty() || rows.len() != conditions.len() {
            return Err(CvaeError::Shape(format!(
                "{} count rows for {} conditions",
                rows.len(),
                conditions.len()
            )));
        }
        let g = rows[0].len();
        let mut counts = Vec::with_capacity(rows.len() * g);
        let mut inputs = Vec::with_capacity(rows.len() * g);
        let mut log_total = Vec::with_capacity(rows.len());
        for row in rows {
            if row.len() != g {
                return Err(CvaeError::Shape("count rows differ in length".into()));
            }
            if let Some((gene, &value)) = row.iter().enumerate().find(|(_, v)| !(v.fract() == 0.0 && **v >= 0.0)) {
                return Err(CvaeError::InvalidCount { gene, value });
            }
            let input = CellInput::from_counts(row, target_sum);
            counts.extend_from_slice(row);
            inputs.extend(input.normalized);
            log_total.push(input.log_total);
        }
        Ok(ElboBatch {
            counts,
            inputs: Tensor::matrix(rows.len(), g, inputs)?,
            log_total: Tensor::matrix(rows.len(), 1, log_total)?,
            conditions,
        })
    }

    /// Cells `cells` of a matrix, conditioned on their annotations.
    pub fn from_matrix(
        m: &ExpressionMatrix,
        cells: &[usize],
        conditions: Vec<Condition>,
        target_sum: f64,
    ) -> Result<Self, CvaeError> {
        let rows: Vec<Vec<f64>> = cells
            .iter()
            .map(|&c| m.dense_row(c).into_iter().map(f64::from).collect())
            .collect();
        Self::new(&rows, conditions, target_sum)
    }

    pub fn len(&self) -> usize {
        self.conditions.len()
    }

    /// Normalized encoder input, `[n, G]`.
    pub fn inputs(&self) -> &Tensor {
        &self.inputs
    }

    pub fn is_empty(&self) -> bool {
        self.conditions.is_empty()
    }
}

struct Encoded {
    mu_z: Var,
    sigma_z: Var,
    mu_l: Var,
    sigma_l: Var,
}

struct DecodedVars {
    log_library: Var,
    log_rho: Var,
    logit: Var,
    theta: Var,
}

/// Trained or freshly initialized conditional VAE.
#[derive(Clone, Debug, PartialEq)]
pub struct CvaeModel {
    pub arch: CvaeArch,
    pub params: ParamStore,
    pub prior: LibraryPrior,
    pub genes: Arc<GeneVocabulary>,
    /// KL weight after warm-up.
    pub alpha: f64,
    pub seed: u64,
    pub epochs: usize,
    pub lr: f64,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    d_z: usize,
    d_c: usize,
    vocabulary_hash: String,
    library_mu: f64,
    library_var: f64,
    alpha: f64,
    seed: u64,
    epochs: usize,
    lr: f64,
    arch: CvaeArch,
    genes: Vec<String>,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

impl CvaeModel {
    /// Initializes all parameters from `seed`. `dec_f1` starts at zero so
    /// that `l' = l`.
    pub fn new(
        arch: CvaeArch,
        genes: Arc<GeneVocabulary>,
        prior: LibraryPrior,
        seed: u64,
    ) -> Result<Self, CvaeError> {
        arch.validate()?;
        if genes.len() != arch.n_genes {
            return Err(CvaeError::Shape(format!(
                "{} genes for a {}-gene architecture",
                genes.len(),
                arch.n_genes
            )));
        }
        let mut rng = RngStream::new(seed);
        let mut params = ParamStore::new();
        arch.condition.init(&mut params, &mut rng);
        arch.enc_z().init(&mut params, ENC_Z, &mut rng);
        arch.enc_l().init(&mut params, ENC_L, &mut rng);
        // start the library posterior at the prior
        let sd = prior.var.max(PRIOR_VAR_FLOOR).sqrt() - SIGMA_FLOOR;
        let inv_softplus = sd + (-(-sd).exp_m1()).ln();
        params.insert(MlpSpec::bias_name(ENC_L, 1), Tensor::vector(vec![prior.mean, inv_softplus]));
        let f1 = arch.dec_f1();
        f1.init(&mut params, DEC_F1, &mut rng);
        params.insert(MlpSpec::weight_name(DEC_F1, 0), Tensor::zeros(&[1 + arch.d_c(), 1]));
        arch.dec_trunk().init(&mut params, DEC_TRUNK, &mut rng);
        arch.dec_head().init(&mut params, DEC_RHO, &mut rng);
        arch.dec_head().init(&mut params, DEC_TAU, &mut rng);
        params.insert(MlpSpec::bias_name(DEC_TAU, 0), Tensor::filled(&[arch.n_genes], -2.0));
        params.insert(DISPERSION, Tensor::zeros(&[arch.n_genes]));
        Ok(CvaeModel { arch, params, prior, genes, alpha: 1.0, seed, epochs: 0, lr: 0.0 })
    }

    fn encode_vars(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
        log_total: Var,
        c: Var,
    ) -> Result<Encoded, CvaeError> {
        let d_z = self.arch.d_z;
        let xc = tape.concat_cols(x, c)?;
        let hz = self.arch.enc_z().forward(tape, store, ENC_Z, xc)?;
        let mu_z = tape.slice_cols(hz, 0, d_z)?;
        let raw = tape.slice_cols(hz, d_z, 2 * d_z)?;
        let sigma_z = tape.softplus(raw)?;
        let sigma_z = tape.shift(sigma_z, SIGMA_FLOOR)?;
        let xcl = tape.concat_cols(xc, log_total)?;
        let hl = self.arch.enc_l().forward(tape, store, ENC_L, xcl)?;
        let mu_l = tape.slice_cols(hl, 0, 1)?;
        let raw = tape.slice_cols(hl, 1, 2)?;
        let sigma_l = tape.softplus(raw)?;
        let sigma_l = tape.shift(sigma_l, SIGMA_FLOOR)?;
        Ok(Encoded { mu_z, sigma_z, mu_l, sigma_l })
    }

    fn decode_vars(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        z: Var,
        log_l: Var,
        c: Var,
    ) -> Result<DecodedVars, CvaeError> {
        let f1_in = tape.concat_cols(log_l, c)?;
        let adj = self.arch.dec_f1().forward(tape, store, DEC_F1, f1_in)?;
        let log_library = tape.add(log_l, adj)?;
        let zc = tape.concat_cols(z, c)?;
        let trunk = self.arch.dec_trunk().forward(tape, store, DEC_TRUNK, zc)?;
        let rho_logits = self.arch.dec_head().forward(tape, store, DEC_RHO, trunk)?;
        let log_rho = tape.log_softmax_rows(rho_logits)?;
        let logit = self.arch.dec_head().forward(tape, store, DEC_TAU, trunk)?;
        let g = tape.param(store, DISPERSION)?;
        let theta = tape.softplus(g)?;
        let theta = tape.shift(theta, THETA_FLOOR)?;
        Ok(DecodedVars { log_library, log_rho, logit, theta })
    }

    fn check_genes(&self, n: usize) -> Result<(), CvaeError> {
        if n != self.arch.n_genes {
            return Err(CvaeError::Shape(format!("{n} genes, model has {}", self.arch.n_genes)));
        }
        Ok(())
    }

    /// Posterior of one cell.
    pub fn encode(&self, input: &CellInput, cond: &Condition) -> Result<Posterior, CvaeError> {
        self.check_genes(input.normalized.len())?;
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::matrix(1, self.arch.n_genes, input.normalized.clone())?);
        let lt = tape.constant(Tensor::matrix(1, 1, vec![input.log_total])?);
        let c = self.arch.condition.encode(&mut tape, &self.params, std::slice::from_ref(cond))?;
        let e = self.encode_vars(&mut tape, &self.params, x, lt, c)?;
        Ok(Posterior {
            mu_z: tape.value(e.mu_z)?.data().to_vec(),
            sigma_z: tape.value(e.sigma_z)?.data().to_vec(),
            mu_l: tape.value(e.mu_l)?.data()[0],
            sigma_l: tape.value(e.sigma_l)?.data()[0],
        })
    }

    /// ZINB parameters of one cell at a latent point.
    pub fn decode(&self, latent: &LatentSample, cond: &Condition) -> Result<Decoded, CvaeError> {
        if latent.z.len() != self.arch.d_z {
            return Err(CvaeError::Shape(format!("latent has {} entries, expected {}", latent.z.len(), self.arch.d_z)));
        }
        if !(latent.library > 0.0) {
            return Err(CvaeError::InvalidArgument(format!("library size {} must be positive", latent.library)));
        }
        let mut tape = Tape::new();
        let z = tape.constant(Tensor::matrix(1, self.arch.d_z, latent.z.clone())?);
        let ll = tape.constant(Tensor::matrix(1, 1, vec![latent.library.ln()])?);
        let c = self.arch.condition.encode(&mut tape, &self.params, std::slice::from_ref(cond))?;
        let d = self.decode_vars(&mut tape, &self.params, z, ll, c)?;
        let library = tape.value(d.log_library)?.data()[0].exp();
        let rho: Vec<f64> = tape.value(d.log_rho)?.data().iter().map(|v| v.exp()).collect();
        let mu = rho.iter().map(|r| library * r).collect();
        let theta = tape.value(d.theta)?.data().to_vec();
        let pi = tape.value(d.logit)?.data().iter().map(|&l| crate::numkit::sigmoid(l)).collect();
        Ok(Decoded { library, rho, zinb: ZinbParams { mu, theta, pi } })
    }

    /// Records the minibatch loss, scaled by `1 / n`, under `store`.
    fn elbo_on_tape(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        batch: &ElboBatch,
        x: Var,
        alpha: f64,
        noise: &Tensor,
    ) -> Result<(Var, ElboTerms), CvaeError> {
        let n = batch.len();
        let d_z = self.arch.d_z;
        self.check_genes(batch.inputs.shape()[1])?;
        if noise.shape() != [n, d_z + 1] {
            return Err(CvaeError::Shape(format!("noise {:?}, expected [{n}, {}]", noise.shape(), d_z + 1)));
        }
        let c = self.arch.condition.encode(tape, store, &batch.conditions)?;
        let lt = tape.constant(batch.log_total.clone());
        let e = self.encode_vars(tape, store, x, lt, c)?;

        let noise = tape.constant(noise.clone());
        let eps_z = tape.slice_cols(noise, 0, d_z)?;
        let eps_l = tape.slice_cols(noise, d_z, d_z + 1)?;
        let z = tape.mul(e.sigma_z, eps_z)?;
        let z = tape.add(e.mu_z, z)?;
        let log_l = tape.mul(e.sigma_l, eps_l)?;
        let log_l = tape.add(e.mu_l, log_l)?;

        let d = self.decode_vars(tape, store, z, log_l, c)?;
        let log_mu = tape.add_col(d.log_rho, d.log_library)?;
        let recon = zinb_nll(tape, log_mu, d.theta, d.logit, &batch.counts)?;

        // KL(N(mu, s^2) || N(0, 1)) = 0.5 * sum(s^2 + mu^2 - 1 - ln s^2)
        let var_z = tape.square(e.sigma_z)?;
        let mu2 = tape.square(e.mu_z)?;
        let log_var = tape.ln(var_z)?;
        let t = tape.add(var_z, mu2)?;
        let t = tape.sub(t, log_var)?;
        let t = tape.shift(t, -1.0)?;
        let t = tape.sum(t)?;
        let kl_z = tape.scale(t, 0.5)?;

        let pv = self.prior.var.max(PRIOR_VAR_FLOOR);
        let var_l = tape.square(e.sigma_l)?;
        let ratio = tape.scale(var_l, 1.0 / pv)?;
        let log_ratio = tape.ln(ratio)?;
        let diff = tape.shift(e.mu_l, -self.prior.mean)?;
        let diff2 = tape.square(diff)?;
        let diff2 = tape.scale(diff2, 1.0 / pv)?;
        let t = tape.sub(ratio, log_ratio)?;
        let t = tape.add(t, diff2)?;
        let t = tape.shift(t, -1.0)?;
        let t = tape.sum(t)?;
        let kl_l = tape.scale(t, 0.5)?;

        let kl = tape.add(kl_z, kl_l)?;
        let kl = tape.scale(kl, alpha)?;
        let total = tape.add(recon, kl)?;
        let mean = tape.scale(total, 1.0 / n as f64)?;

        let item = |tape: &Tape, v: Var| -> Result<f64, NumError> { Ok(tape.value(v)?.data()[0]) };
        let terms = ElboTerms {
            recon: item(tape, recon)?,
            kl_z: item(tape, kl_z)?,
            kl_l: item(tape, kl_l)?,
            loss: item(tape, total)?,
        };
        if !terms.loss.is_finite() {
            return Err(CvaeError::NonFinite { recon: terms.recon, kl_z: terms.kl_z, kl_l: terms.kl_l });
        }
        Ok((mean, terms))
    }

    /// Loss terms under an arbitrary parameter set with this architecture.
    pub fn elbo_with(
        &self,
        store: &ParamStore,
        batch: &ElboBatch,
        alpha: f64,
        noise: &Tensor,
    ) -> Result<ElboTerms, CvaeError> {
        let mut tape = Tape::new();
        let x = tape.constant(batch.inputs.clone());
        Ok(self.elbo_on_tape(&mut tape, store, batch, x, alpha, noise)?.1)
    }

    /// Single-sample loss of a minibatch; fills the parameter gradients of
    /// the per-cell mean loss.
    pub fn elbo_loss(&mut self, batch: &ElboBatch, alpha: f64, noise: &Tensor) -> Result<ElboTerms, CvaeError> {
        let mut tape = Tape::new();
        let x = tape.constant(batch.inputs.clone());
        let (mean, terms) = self.elbo_on_tape(&mut tape, &self.params, batch, x, alpha, noise)?;
        tape.backward_into(mean, &mut self.params)?;
        Ok(terms)
    }

    /// Gradient of the per-cell mean loss with respect to the normalized
    /// encoder input.
    pub fn elbo_input_gradient(&self, batch: &ElboBatch, alpha: f64, noise: &Tensor) -> Result<Tensor, CvaeError> {
        let mut tape = Tape::new();
        let x = tape.watch(batch.inputs.clone());
        let (mean, _) = self.elbo_on_tape(&mut tape, &self.params, batch, x, alpha, noise)?;
        let grads = tape.backward(mean)?;
        Ok(grads.wrt(x).cloned().unwrap_or_else(|| Tensor::zeros(batch.inputs.shape())))
    }

    /// Per-cell mean loss of a batch with encoder input replaced by `inputs`.
    pub fn elbo_with_inputs(
        &self,
        batch: &ElboBatch,
        inputs: &Tensor,
        alpha: f64,
        noise: &Tensor,
    ) -> Result<f64, CvaeError> {
        let mut tape = Tape::new();
        let x = tape.constant(inputs.clone());
        let (mean, _) = self.elbo_on_tape(&mut tape, &self.params, batch, x, alpha, noise)?;
        Ok(tape.value(mean)?.data()[0])
    }

    /// Writes the `CFP1` parameter file at `path` and a JSON sidecar at
    /// `<path>.json`.
    pub fn save(&self, path: &Path) -> Result<(), CvaeError> {
        let io = |source| CvaeError::Io { path: path.to_path_buf(), source };
        let file = fs::File::create(path).map_err(io)?;
        write_checkpoint(&self.params, BufWriter::new(file))?;
        let side = Sidecar {
            d_z: self.arch.d_z,
            d_c: self.arch.d_c(),
            vocabulary_hash: self.genes.digest(),
            library_mu: self.prior.mean,
            library_var: self.prior.var,
            alpha: self.alpha,
            seed: self.seed,
            epochs: self.epochs,
            lr: self.lr,
            arch: self.arch.clone(),
            genes: self.genes.genes().to_vec(),
        };
        let sp = sidecar_path(path);
        let text = serde_json::to_string_pretty(&side)?;
        fs::write(&sp, text + "\n").map_err(|source| CvaeError::Io { path: sp, source })?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CvaeError> {
        let sp = sidecar_path(path);
        let text = fs::read_to_string(&sp).map_err(|source| CvaeError::Io { path: sp.clone(), source })?;
        let side: Sidecar = serde_json::from_str(&text)?;
        let genes = Arc::new(GeneVocabulary::new(side.genes)?);
        if genes.digest() != side.vocabulary_hash {
            return Err(CvaeError::InvalidArgument(format!(
                "{}: vocabulary hash does not match the gene list",
                sp.display()
            )));
        }
        let file = fs::File::open(path).map_err(|source| CvaeError::Io { path: path.to_path_buf(), source })?;
        let params = read_checkpoint(BufReader::new(file))?;
        let model = CvaeModel {
            arch: side.arch,
            params,
            prior: LibraryPrior { mean: side.library_mu, var: side.library_var },
            genes,
            alpha: side.alpha,
            seed: side.seed,
            epochs: side.epochs,
            lr: side.lr,
        };
        let fresh = CvaeModel::new(model.arch.clone(), model.genes.clone(), model.prior, 0)?;
        for (name, t) in fresh.params.iter() {
            match model.params.get(name) {
                Some(p) if p.shape() == t.shape() => {}
                _ => {
                    return Err(CvaeError::Shape(format!("checkpoint parameter `{name}` missing or misshapen")))
                }
            }
        }
        Ok(model)
    }

    /// Inverse dispersion per gene.
    pub fn theta(&self) -> Vec<f64> {
        self.params.get(DISPERSION).unwrap().data().iter().map(|&g| softplus(g) + THETA_FLOOR).collect()
    }
}
