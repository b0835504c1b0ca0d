//! The `cellkit` command line: argument definitions, exit codes, run
//! manifests and the subcommand implementations.
//!
//! Exit codes: 0 success, 1 invalid input or arguments, 2 I/O failure,
//! 3 numerical failure. Every invocation that gets past argument parsing
//! writes one JSON run manifest; on failure the outputs it created are
//! removed first.

mod commands;
mod manifest;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::classify::ClassifyError;
use crate::cvae::CvaeError;
use crate::expr::ExprError;
use crate::metrics::MetricError;
use crate::numkit::NumError;
use crate::templates::TemplateError;

pub use manifest::{digests, FileDigest, Outputs, RunManifest, MANIFEST_NAME};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub(crate) fn io(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
        move |e| CliError::Io(format!("{}: {e}", path.display()))
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> CliError {
        CliError::Validation(msg.into())
    }
}

impl From<ExprError> for CliError {
    fn from(e: ExprError) -> Self {
        match e {
            ExprError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<NumError> for CliError {
    fn from(e: NumError) -> Self {
        match e {
            NumError::Io(_) => CliError::Io(e.to_string()),
            NumError::NonFiniteGradient { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<CvaeError> for CliError {
    fn from(e: CvaeError) -> Self {
        match e {
            CvaeError::Num(n) => n.into(),
            CvaeError::Expr(x) => x.into(),
            CvaeError::Io { .. } => CliError::Io(e.to_string()),
            CvaeError::NonFinite { .. } | CvaeError::Diverged { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<ClassifyError> for CliError {
    fn from(e: ClassifyError) -> Self {
        match e {
            ClassifyError::Num(n) => n.into(),
            ClassifyError::Expr(x) => x.into(),
            ClassifyError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        match e {
            MetricError::Expr(x) => x.into(),
            MetricError::DegenerateBandwidth(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<TemplateError> for CliError {
    fn from(e: TemplateError) -> Self {
        match e {
            TemplateError::Expr(x) => x.into(),
            TemplateError::Io { .. } | TemplateError::Source(_) => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

#[derive(Debug, Parser, Serialize)]
#[command(name = "cellkit", version, about = "Single-cell expression toolkit")]
pub struct Cli {
    /// Where to write the run manifest (default: next to the output).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(untagged)]
pub enum Command {
    /// Load counts and annotations, run QC and HVG selection, split, and
    /// write a dataset directory.
    Ingest(IngestArgs),
    /// Merge the gene lists of several datasets into one sorted vocabulary.
    Vocab(VocabArgs),
    /// Train the conditional VAE on the train split of a dataset.
    TrainCvae(TrainCvaeArgs),
    /// Sample cells from a trained conditional VAE.
    Generate(GenerateArgs),
    /// Train the cell classifier.
    TrainClf(TrainClfArgs),
    /// Write classifier predictions for a dataset.
    Predict(PredictArgs),
    /// Score generated cells or predictions against a real dataset.
    Evaluate(EvaluateArgs),
    /// One-vs-rest Welch marker genes per label.
    Markers(MarkersArgs),
    /// Gradient saliency of a classifier, aggregated per class.
    Saliency(SaliencyArgs),
    /// Build a deduplicated instruction-response template set.
    Templates(TemplatesArgs),
}

fn parse_ratios(s: &str) -> Result<(f64, f64, f64), String> {
    let v: Vec<f64> = s.split(',').map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    match v[..] {
        [a, b, c] => Ok((a, b, c)),
        _ => Err(format!("expected three comma-separated ratios, got `{s}`")),
    }
}

/// `all`, `train`, `valid` or `test`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitSel {
    All,
    Train,
    Valid,
    Test,
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    /// Count matrix (cells as rows).
    #[arg(long)]
    pub input: PathBuf,
    /// `mtx`, `csv` or `native`; guessed from the extension when absent.
    #[arg(long)]
    pub format: Option<String>,
    /// CSV with `cell_id,label,species,tissue`, aligned by cell id.
    #[arg(long)]
    pub annotations: PathBuf,
    /// Output dataset directory.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Two-column gene rename table applied before QC.
    #[arg(long)]
    pub ortholog_map: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub min_genes: usize,
    #[arg(long, default_value_t = 8)]
    pub min_cells: usize,
    #[arg(long, value_delimiter = ',', default_value = "MT-,mt-")]
    pub mito_prefix: Vec<String>,
    #[arg(long, default_value_t = 0.2)]
    pub max_mito_fraction: f64,
    /// Absolute total-count ceiling; overrides --max-total-percentile.
    #[arg(long)]
    pub max_total_counts: Option<u64>,
    #[arg(long, default_value_t = 99.5)]
    pub max_total_percentile: f64,
    /// Drop labels with fewer cells than this after QC.
    #[arg(long)]
    pub min_cells_per_label: Option<usize>,
    /// Highly variable genes kept; clamped to the gene count.
    #[arg(long, default_value_t = 3600)]
    pub hvg: usize,
    /// Gene list to re-express the data over, one identifier per line.
    #[arg(long)]
    pub vocabulary: Option<PathBuf>,
    #[arg(long, value_parser = parse_ratios, default_value = "0.8,0.1,0.1")]
    pub split: (f64, f64, f64),
    #[arg(long, default_value_t = crate::expr::DEFAULT_TARGET_SUM)]
    pub target_sum: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct VocabArgs {
    /// Dataset directories or gene-list files.
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainCvaeArgs {
    /// Dataset directory; trains on `train`, selects on `valid`.
    #[arg(long)]
    pub input: PathBuf,
    /// Checkpoint path; a `.json` sidecar is written beside it.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 160)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 256)]
    pub latent_dim: usize,
    #[arg(long, default_value_t = 256)]
    pub cond_dim: usize,
    #[arg(long, default_value_t = 128)]
    pub hidden: usize,
    #[arg(long, default_value_t = 32)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = crate::expr::DEFAULT_TARGET_SUM)]
    pub target_sum: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Conditions, one per line: `cell_type[<TAB>species<TAB>tissue]`.
    #[arg(long, conflicts_with = "input")]
    pub labels: Option<PathBuf>,
    /// Dataset whose cells' conditions are reproduced, in cell order.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SplitSel::All)]
    pub split: SplitSel,
    /// Species for label lines that give only a cell type.
    #[arg(long)]
    pub species: Option<String>,
    /// Tissue for label lines that give only a cell type.
    #[arg(long)]
    pub tissue: Option<String>,
    /// Output dataset directory.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainClfArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    /// Hidden widths, comma-separated; empty for a linear model.
    #[arg(long, value_delimiter = ',', default_value = "128")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = crate::expr::DEFAULT_TARGET_SUM)]
    pub target_sum: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitSel::Test)]
    pub split: SplitSel,
    /// TSV of `cell_id, predicted, probability`.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    /// Real dataset directory.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitSel::All)]
    pub split: SplitSel,
    /// Generated dataset directory, matched in size to the real cells.
    #[arg(long, required_unless_present = "predictions", conflicts_with = "predictions")]
    pub generated: Option<PathBuf>,
    /// TSV of `cell_id, predicted`; an empty prediction is unanswered.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "5,10,25,50")]
    pub k_list: Vec<usize>,
    #[arg(long, default_value_t = crate::expr::DEFAULT_TARGET_SUM)]
    pub target_sum: f64,
    /// `json` or `csv`.
    #[arg(long, default_value = "json")]
    pub format: String,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct MarkersArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitSel::All)]
    pub split: SplitSel,
    /// Only this label; all labels when absent.
    #[arg(long)]
    pub class: Option<String>,
    #[arg(long, default_value_t = crate::classify::DEFAULT_TOP_MARKERS)]
    pub top_k: usize,
    #[arg(long, default_value_t = crate::expr::DEFAULT_TARGET_SUM)]
    pub target_sum: f64,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SaliencyArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitSel::All)]
    pub split: SplitSel,
    /// Genes eligible for scores, one per line; all genes when absent.
    #[arg(long)]
    pub gene_set: Option<PathBuf>,
    #[arg(long, default_value_t = crate::classify::DEFAULT_TOP_GENES)]
    pub top_n: usize,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TemplatesArgs {
    /// Canned candidate corpus (JSON lines).
    #[arg(long, required_unless_present = "endpoint", conflicts_with = "endpoint")]
    pub input: Option<PathBuf>,
    /// URL of an external template generator.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Environment variable holding the generator's bearer token.
    #[arg(long, default_value = "CELLKIT_TEMPLATE_TOKEN")]
    pub token_env: String,
    #[arg(long, default_value_t = 60)]
    pub timeout: u64,
    /// JSON-lines log of generator requests and replies.
    #[arg(long)]
    pub request_log: Option<PathBuf>,
    /// `CTA`, `DSP` or `CPCG`.
    #[arg(long)]
    pub task: String,
    #[arg(long)]
    pub count: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = crate::templates::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value_t = crate::templates::DEFAULT_MAX_WORDS)]
    pub max_words: usize,
    #[arg(long, default_value_t = crate::templates::DEFAULT_MAX_REWRITES)]
    pub max_rewrites: usize,
    #[arg(long)]
    pub personalities: Option<PathBuf>,
    #[arg(long)]
    pub motivations: Option<PathBuf>,
    #[arg(long)]
    pub proficiencies: Option<PathBuf>,
    #[arg(long, value_parser = parse_ratios, default_value = "0.8,0.1,0.1")]
    pub split: (f64, f64, f64),
    /// Output JSON lines.
    #[arg(long)]
    pub output: PathBuf,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Vocab(_) => "vocab",
            Command::TrainCvae(_) => "train-cvae",
            Command::Generate(_) => "generate",
            Command::TrainClf(_) => "train-clf",
            Command::Predict(_) => "predict",
            Command::Evaluate(_) => "evaluate",
            Command::Markers(_) => "markers",
            Command::Saliency(_) => "saliency",
            Command::Templates(_) => "templates",
        }
    }

    fn seed(&self) -> Option<u64> {
        match self {
            Command::Ingest(a) => Some(a.seed),
            Command::TrainCvae(a) => Some(a.seed),
            Command::Generate(a) => Some(a.seed),
            Command::TrainClf(a) => Some(a.seed),
            Command::Templates(a) => Some(a.seed),
            _ => None,
        }
    }

    fn output(&self) -> &Path {
        match self {
            Command::Ingest(a) => &a.output,
            Command::Vocab(a) => &a.output,
            Command::TrainCvae(a) => &a.output,
            Command::Generate(a) => &a.output,
            Command::TrainClf(a) => &a.output,
            Command::Predict(a) => &a.output,
            Command::Evaluate(a) => &a.output,
            Command::Markers(a) => &a.output,
            Command::Saliency(a) => &a.output,
            Command::Templates(a) => &a.output,
        }
    }

    fn inputs(&self) -> Vec<&Path> {
        let mut v: Vec<&Path> = Vec::new();
        match self {
            Command::Ingest(a) => {
                v.extend([a.input.as_path(), a.annotations.as_path()]);
                v.extend(a.ortholog_map.as_deref());
                v.extend(a.vocabulary.as_deref());
            }
            Command::Vocab(a) => v.extend(a.input.iter().map(PathBuf::as_path)),
            Command::TrainCvae(a) => v.push(&a.input),
            Command::Generate(a) => {
                v.push(&a.model);
                v.extend(a.labels.as_deref());
                v.extend(a.input.as_deref());
            }
            Command::TrainClf(a) => v.push(&a.input),
            Command::Predict(a) => v.extend([a.model.as_path(), a.input.as_path()]),
            Command::Evaluate(a) => {
                v.push(&a.input);
                v.extend(a.generated.as_deref());
                v.extend(a.predictions.as_deref());
            }
            Command::Markers(a) => v.push(&a.input),
            Command::Saliency(a) => {
                v.extend([a.model.as_path(), a.input.as_path()]);
                v.extend(a.gene_set.as_deref());
            }
            Command::Templates(a) => {
                v.extend(a.input.as_deref());
                v.extend(a.personalities.as_deref());
                v.extend(a.motivations.as_deref());
                v.extend(a.proficiencies.as_deref());
            }
        }
        v
    }

    /// Directory outputs hold their manifest; file outputs get a sibling.
    fn default_manifest(&self) -> PathBuf {
        let out = self.output();
        match self {
            Command::Ingest(_) | Command::Generate(_) => out.join(MANIFEST_NAME),
            _ => {
                let mut s = out.as_os_str().to_owned();
                s.push(".manifest.json");
                PathBuf::from(s)
            }
        }
    }
}

/// Runs a parsed command line and returns the exit code.
pub fn run(cli: Cli) -> i32 {
    let start = Instant::now();
    let manifest_path = cli.manifest.clone().unwrap_or_else(|| cli.command.default_manifest());
    let mut outputs = Outputs::default();
    let input_digests: Result<Vec<FileDigest>, CliError> =
        cli.command.inputs().into_iter().map(digests).collect::<Result<Vec<_>, _>>().map(|v| v.concat());
    let result = input_digests.and_then(|d| commands::dispatch(&cli.command, &mut outputs).map(|s| (d, s)));
    let (inputs, summary, error) = match result {
        Ok((d, s)) => (d, s, None),
        Err(e) => {
            outputs.remove_created();
            (Vec::new(), serde_json::Value::Null, Some(e))
        }
    };
    let mut produced = Vec::new();
    if error.is_none() {
        for p in outputs.written() {
            match digests(p) {
                Ok(d) => produced.extend(d),
                Err(e) => log::warn!("{e}"),
            }
        }
    }
    let code = error.as_ref().map_or(0, CliError::exit_code);
    if let Some(e) = &error {
        eprintln!("error: {e}");
    }
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: cli.command.name().to_string(),
        args: serde_json::to_value(&cli.command).unwrap_or(serde_json::Value::Null),
        seed: cli.command.seed(),
        inputs,
        outputs: produced,
        status: if error.is_none() { "ok" } else { "error" },
        exit_code: code,
        error: error.as_ref().map(ToString::to_string),
        summary,
        duration_secs: start.elapsed().as_secs_f64(),
    };
    if let Err(e) = manifest.write(&manifest_path) {
        eprintln!("error: cannot write run manifest: {e}");
        return if code == 0 { e.exit_code() } else { code };
    }
    code
}

/// Parses `args` (program name first) and runs. Usage errors exit with 1,
/// `--help` and `--version` with 0.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                1
            } else {
                0
            }
        }
    }
}
