use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use log::{info, warn};
use serde_json::{json, Value};

use super::{
    CliError, Command, EvaluateArgs, GenerateArgs, IngestArgs, MarkersArgs, Outputs, PredictArgs, SaliencyArgs,
    SplitSel, TemplatesArgs, TrainClfArgs, TrainCvaeArgs, VocabArgs,
};
use crate::classify::{
    dataset_saliency, rank_all_markers, rank_markers, train_classifier, write_markers_tsv, write_saliency_tsv,
    Classifier, ClassifierConfig, GeneSet,
};
use crate::cvae::{generate, train_cvae, Condition, CvaeConfig, CvaeModel};
use crate::expr::{
    apply_ortholog_map, build_vocabulary, cells_with_common_labels, load_matrix, qc_filter, read_annotations,
    read_native, read_ortholog_table, reindex_to_vocabulary, select_hvg, split_dataset, total_count_percentile,
    CellAnnotations, Dataset, ExprError, ExpressionMatrix, GeneVocabulary, MatrixFormat, QcThresholds, Split,
};
use crate::metrics::{evaluate_generation, evaluate_predictions, EvalConfig};
use crate::templates::{
    dedup_pipeline, read_templates, split_templates, write_jsonl, CannedSource, DedupConfig, HttpSource,
    HttpSourceConfig, Task, TemplateSource, TraitKind, TraitPools,
};

pub(super) fn dispatch(cmd: &Command, out: &mut Outputs) -> Result<Value, CliError> {
    match cmd {
        Command::Ingest(a) => ingest(a, out),
        Command::Vocab(a) => vocab(a, out),
        Command::TrainCvae(a) => train_cvae_cmd(a, out),
        Command::Generate(a) => generate_cmd(a, out),
        Command::TrainClf(a) => train_clf(a, out),
        Command::Predict(a) => predict(a, out),
        Command::Evaluate(a) => evaluate(a, out),
        Command::Markers(a) => markers(a, out),
        Command::Saliency(a) => saliency(a, out),
        Command::Templates(a) => templates(a, out),
    }
}

fn with_path(path: &Path, e: ExprError) -> CliError {
    match e {
        ExprError::Io(io) => CliError::Io(format!("{}: {io}", path.display())),
        other => CliError::from(other),
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(CliError::io(path))
}

fn create(path: &Path, out: &mut Outputs) -> Result<BufWriter<fs::File>, CliError> {
    out.claim(path)?;
    fs::File::create(path).map(BufWriter::new).map_err(CliError::io(path))
}

fn write_text(path: &Path, text: &str, out: &mut Outputs) -> Result<(), CliError> {
    out.claim(path)?;
    fs::write(path, text).map_err(CliError::io(path))
}

fn sidecar(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

fn load_dataset(dir: &Path) -> Result<Dataset, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Io(format!("{}: not a dataset directory", dir.display())));
    }
    Dataset::read_dir(dir).map_err(|e| with_path(dir, e))
}

fn select(d: Dataset, sel: SplitSel) -> Result<Dataset, CliError> {
    let d = match sel {
        SplitSel::All => d,
        SplitSel::Train => d.subset(Split::Train),
        SplitSel::Valid => d.subset(Split::Valid),
        SplitSel::Test => d.subset(Split::Test),
    };
    if d.n_cells() == 0 {
        return Err(CliError::invalid(format!("the {sel:?} selection holds no cells").to_lowercase()));
    }
    Ok(d)
}

/// Re-expresses `d` over `genes` when the vocabularies differ.
fn conform(d: Dataset, genes: &Arc<GeneVocabulary>) -> Result<Dataset, CliError> {
    if d.matrix.vocabulary().genes() == genes.genes() {
        return Ok(d);
    }
    let (m, dropped) = reindex_to_vocabulary(&d.matrix, genes)?;
    warn!("dataset re-expressed over the model's {} genes ({dropped} dropped)", genes.len());
    Ok(Dataset { matrix: m, ..d })
}

fn split_counts_json(split: &[Split]) -> Value {
    let n = |s: Split| split.iter().filter(|&&x| x == s).count();
    json!({"train": n(Split::Train), "valid": n(Split::Valid), "test": n(Split::Test)})
}

/// Orders annotation rows to match the matrix cell identifiers, or checks
/// the row counts when the matrix carries none.
fn align_annotations(m: &ExpressionMatrix, ann: CellAnnotations) -> Result<CellAnnotations, CliError> {
    match m.cell_ids() {
        Some(ids) => {
            let pos: HashMap<&str, usize> =
                ann.cell_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
            if pos.len() != ann.len() {
                return Err(CliError::invalid("duplicate cell_id in annotations"));
            }
            let order = ids
                .iter()
                .map(|id| pos.get(id.as_str()).copied().ok_or_else(|| CliError::invalid(format!("cell `{id}` has no annotation"))))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(ann.select(&order))
        }
        None if ann.len() == m.n_cells() => Ok(ann),
        None => Err(CliError::invalid(format!("{} annotation rows for {} cells", ann.len(), m.n_cells()))),
    }
}

fn ingest(a: &IngestArgs, out: &mut Outputs) -> Result<Value, CliError> {
    let format = match &a.format {
        Some(f) => f.parse::<MatrixFormat>()?,
        None => MatrixFormat::from_path(&a.input)
            .ok_or_else(|| CliError::invalid(format!("cannot infer the format of {}; pass --format", a.input.display())))?,
    };
    if !a.input.exists() {
        return Err(CliError::Io(format!("{}: no such file", a.input.display())));
    }
    let mut m = load_matrix(&a.input, format).map_err(|e| with_path(&a.input, e))?;
    let ann_file = fs::File::open(&a.annotations).map_err(CliError::io(&a.annotations))?;
    let (ann, _) = read_annotations(ann_file).map_err(|e| with_path(&a.annotations, e))?;
    let mut ann = align_annotations(&m, ann)?;
    let (input_cells, input_genes) = (m.n_cells(), m.n_genes());

    let mut ortholog_warnings = Vec::new();
    if let Some(p) = &a.ortholog_map {
        let table = read_ortholog_table(&read_text(p)?)?;
        let (mapped, w) = apply_ortholog_map(&m, &table)?;
        for msg in &w {
            warn!("{msg}");
        }
        ortholog_warnings = w;
        m = mapped;
    }

    let max_total = match a.max_total_counts {
        Some(v) => v,
        None => total_count_percentile(&m, a.max_total_percentile)?,
    };
    let thresholds = QcThresholds {
        min_genes_per_cell: a.min_genes,
        min_cells_per_gene: a.min_cells,
        mito_prefixes: a.mito_prefix.clone(),
        max_mito_fraction: a.max_mito_fraction,
        max_total_counts: Some(max_total),
    };
    let (mut m2, report) = qc_filter(&m, &thresholds)?;
    ann = ann.select(&report.kept_cells);

    let mut removed_rare_labels = 0;
    if let Some(min) = a.min_cells_per_label {
        let keep = cells_with_common_labels(&ann.labels, min);
        removed_rare_labels = ann.len() - keep.len();
        m2 = m2.select_cells(&keep);
        ann = ann.select(&keep);
    }
    if m2.n_cells() == 0 {
        return Err(CliError::invalid("no cells left after filtering"));
    }

    let (features, hvg_requested, genes_outside_vocabulary) = match &a.vocabulary {
        Some(p) => {
            let genes: Vec<String> = read_text(p)?.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect();
            let vocab = Arc::new(GeneVocabulary::new(genes)?);
            let (r, dropped) = reindex_to_vocabulary(&m2, &vocab)?;
            (r, None, Some(dropped))
        }
        None => {
            let n = if a.hvg > m2.n_genes() {
                warn!("--hvg {} exceeds the {} genes left after QC; keeping all", a.hvg, m2.n_genes());
                m2.n_genes()
            } else {
                a.hvg
            };
            let genes = select_hvg(&m2, n)?;
            (m2.select_genes(&genes), Some(n), None)
        }
    };
    let nonzero: Vec<usize> = (0..features.n_cells()).filter(|&c| features.total(c) > 0).collect();
    let removed_zero = features.n_cells() - nonzero.len();
    if removed_zero > 0 {
        warn!("{removed_zero} cells have no counts in the selected genes and are dropped");
    }
    let features = features.select_cells(&nonzero);
    let ann = ann.select(&nonzero);

    let d = split_dataset(features, ann, a.split, a.seed)?;
    out.claim(&a.output)?;
    d.write_dir(&a.output).map_err(|e| with_path(&a.output, e))?;
    let summary = json!({
        "input_cells": input_cells,
        "input_genes": input_genes,
        "qc": report,
        "max_total_counts": max_total,
        "cells_removed_rare_labels": removed_rare_labels,
        "hvg": hvg_requested,
        "genes_outside_vocabulary": genes_outside_vocabulary,
        "cells_removed_zero_after_selection": removed_zero,
        "ortholog_warnings": ortholog_warnings,
        "cells": d.n_cells(),
        "genes": d.matrix.n_genes(),
        "split": split_counts_json(&d.split),
    });
    let text = serde_json::to_string_pretty(&summary).expect("report serializes") + "\n";
    write_text(&a.output.join("qc_report.json"), &text, out)?;
    info!("ingested {} cells over {} genes", d.n_cells(), d.matrix.n_genes());
    Ok(summary)
}

fn vocab(a: &VocabArgs, out: &mut Outputs) -> Result<Value, CliError> {
    let mut sets = Vec::with_capacity(a.input.len());
    for p in &a.input {
        let genes: Vec<String> = if p.is_dir() {
            let path = p.join("matrix.cfx");
            let f = fs::File::open(&path).map_err(CliError::io(&path))?;
            read_native(f).map_err(|e| with_path(&path, e))?.vocabulary().genes().to_vec()
        } else {
            read_text(p)?.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect()
        };
        sets.push(genes);
    }
    let v = build_vocabulary(&sets)?;
    let mut text = v.genes().join("\n");
    text.push('\n');
    write_text(&a.output, &text, out)?;
    Ok(json!({"genes": v.len(), "digest": v.digest()}))
}

fn train_cvae_cmd(a: &TrainCvaeArgs, out: &mut Outputs) -> Result<Value, CliError> {
    let d = load_dataset(&a.input)?;
    let train = d.subset(Split::Train);
    let valid = d.subset(Split::Valid);
    let cfg = CvaeConfig {
        lr: a.lr,
        epochs: a.epochs,
        batch: a.batch,
        alpha: a.alpha,
        seed: a.seed,
        d_z: a.latent_dim,
        d_c: a.cond_dim,
        hidden: a.hidden,
        embed_dim: a.embed_dim,
        target_sum: a.target_sum,
        ..CvaeConfig::default()
    };
    let outcome = train_cvae(&train, (valid.n_cells() > 0).then_some(&valid), &cfg)?;
    out.claim(&a.output)?;
    out.claim(&sidecar(&a.output))?;
    outcome.model.save(&a.output)?;
    Ok(json!({
        "train_cells": train.n_cells(),
        "valid_cells": valid.n_cells(),
        "best_epoch": outcome.best_epoch,
        "final_train_loss": outcome.history.last(),
        "best_valid_loss": outcome.valid_history.get(outcome.best_epoch),
    }))
}

/// One condition per non-empty line: `cell_type[\tspecies\ttissue]`.
fn read_conditions(text: &str, model: &CvaeModel, a: &GenerateArgs) -> Result<Vec<Condition>, CliError> {
    let cats = &model.arch.condition.categories;
    let fallback = |flag: &Option<String>, known: &[String], what: &str| -> Result<String, CliError> {
        match (flag, known) {
            (Some(v), _) => Ok(v.clone()),
            (None, [only]) => Ok(only.clone()),
            _ => Err(CliError::invalid(format!("label lines without a {what} need --{what}"))),
        }
    };
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').map(str::trim).collect();
        let c = match f[..] {
            [t] => Condition::new(t, fallback(&a.species, &cats.species, "species")?, fallback(&a.tissue, &cats.tissues, "tissue")?),
            [t, s, ti] => Condition::new(t, s, ti),
            _ => return Err(CliError::invalid(format!("labels line {}: expected 1 or 3 tab-separated fields", i + 1))),
        };
        out.push(c);
    }
    Ok(out)
}

fn generate_cmd(a: &GenerateArgs, out: &mut Outputs) -> Result<Value, CliError> {
    let model = CvaeModel::load(&a.model)?;
    let conditions = match (&a.labels, &a.input) {
        (Some(p), _) => read_conditions(&read_text(p)?, &model, a)?,
        (None, Some(dir)) => {
            let d = select(load_dataset(dir)?, a.split)?;
            (0..d.n_cells()).map(|c| Condition::of_cell(&d.annotations, c)).collect()
        }
        (None, None) => return Err(CliError::invalid("pass --labels or --input")),
    };
    if conditions.is_empty() {
        return Err(CliError::invalid("no conditions to generate"));
    }
    let m = generate(&model, &conditions, a.seed)?;
    let mut ann = CellAnnotations::from_labels(conditions.iter().map(|c| c.label().to_string()).collect());
    ann.cell_ids = m.cell_ids().map(<[String]>::to_vec).unwrap_or_else(|| ann.cell_ids.clone());
    for (i, c) in conditions.iter().enumerate() {
        if let Condition::Attributes { species, tissue, .. } = c {
            ann.species[i] = species.clone();
            ann.tissue[i] = tissue.clone();
        }
    }
    let n = m.n_cells();
    let d = Dataset::new(m, ann, vec![Split::Test; n])?;
    out.claim(&a.output)?;
    d.write_dir(&a.output).map_err(|e| with_path(&a.output, e))?;
    Ok(json!({"cells": n, "genes": d.matrix.n_genes()}))
}

fn train_clf(a: &TrainClfArgs, out: &mut Outputs) -> Result<Value, CliError> {
    let d = load_dataset(&a.input)?;
    let train = d.subset(Split::Train);
    let valid = d.subset(Split::Valid);
    let cfg = ClassifierConfig {
        hidden: a.hidden.clone(),
        lr: a.lr,
        epochs: a.epochs,
        batch: a.batch,
        seed: a.seed,
        target_sum: a.target_sum,
        ..ClassifierConfig::default()
    };
    let outcome = train_classifier(&train, (valid.n_cells() > 0).then_some(&valid), &cfg)?;
    out.claim(&a.output)?;
    out.claim(&sidecar(&a.output))?;
    outcome.model.save(&a.output)?;
    Ok(json!({
        "train_cells": train.n_cells(),
        "valid_cells": valid.n_cells(),
        "classes": outcome.model.classes,
        "best_epoch": outcome.best_epoch,
        "final_train_loss": outcome.history.last(),
    }))
}

fn predict(a: &PredictArgs, out: &mut Outputs) -> Result<Value, CliError> {
    let model = Classifier::load(&a.model)?;
    let d = conform(select(load_dataset(&a.input)?, a.split)?, &model.genes)?;
    let preds = model.predict_matrix(&d.matrix)?;
    let mut w = create(&a.output, out)?;
    let io = CliError::io(&a.output);
    writeln!(w, "cell_id\tpredicted\tprobability").map_err(&io)?;
    for (id, p) in d.annotations.cell_ids.iter().zip(&preds) {
        writeln!(w, "{id}\t{}\t{}", p.label, p.probs[p.index]).map_err(&io)?;
    }
    w.flush().map_err(&io)?;
    let correct = preds.iter().zip(&d.annotations.labels).filter(|(p, t)| &p.label == *t).count();
    Ok(json!({"cells": preds.len(), "accuracy": correct as f64 / preds.len() as f64}))
}

/// Reads `cell_id<TAB>predicted[...]`; an empty prediction is unanswered.
fn read_predictions(path: &Path) -> Result<HashMap<String, Option<String>>, CliError> {
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().map(|(_, l)| l.split('\t').map(str::trim).collect()).unwrap_or_default();
    let col = |name: &str| header.iter().position(|h| *h == name);
    let (id_col, pred_col) = col("cell_id")
        .zip(col("predicted"))
        .ok_or_else(|| CliError::invalid(format!("{}: header needs cell_id and predicted columns", path.display())))?;
    let mut map = HashMap::new();
    for (i, line) in lines {
        let f: Vec<&str> = line.split('\t').collect();
        let id = f.get(id_col).map(|s| s.trim()).unwrap_or("");
        if id.is_empty() {
            return Err(CliError::invalid(format!("{} line {}: missing cell_id", path.display(), i + 1)));
        }
        let pred = f.get(pred_col).map(|s| s.trim()).filter(|s| !s.is_empty()).map(String::from);
        if map.insert(id.to_string(), pred).is_some() {
            return Err(CliError::invalid(format!("{} line {}: duplicate cell `{id}`", path.display(), i + 1)));
        }
    }
    Ok(map)
}

fn evaluate(a: &EvaluateArgs, out: &mut Outputs) -> Result<Value, CliError> {
    let real = select(load_dataset(&a.input)?, a.split)?;
    let report = match (&a.generated, &a.predictions) {
        (Some(g), _) => {
            let gen = load_dataset(g)?;
            let cfg = EvalConfig { k_list: a.k_list.clone(), target_sum: a.target_sum, ..EvalConfig::default() };
            evaluate_generation(&real.matrix, &real.annotations.labels, &gen.matrix, &gen.annotations.labels, &cfg)?
        }
        (None, Some(p)) => {
            let mut preds = read_predictions(p)?;
            let mut missing = 0;
            let pred: Vec<Option<String>> = real
                .annotations
                .cell_ids
                .iter()
                .map(|id| {
                    preds.remove(id).unwrap_or_else(|| {
                        missing += 1;
                        None
                    })
                })
                .collect();
            if let Some(extra) = preds.keys().next() {
                return Err(CliError::invalid(format!("prediction for unknown cell `{extra}`")));
            }
            if missing > 0 {
                warn!("{missing} cells have no prediction and count as unanswered");
            }
            evaluate_predictions(&pred, &real.annotations.labels)?
        }
        (None, None) => return Err(CliError::invalid("pass --generated or --predictions")),
    };
    let text = match a.format.as_str() {
        "json" => report.to_json(),
        "csv" => report.to_csv(),
        other => return Err(CliError::invalid(format!("unknown report format `{other}`"))),
    };
    write_text(&a.output, &text, out)?;
    Ok(serde_json::to_value(&report.values).expect("finite metrics"))
}

fn markers(a: &MarkersArgs, out: &mut Outputs) -> Result<Value, CliError> {
    let d = select(load_dataset(&a.input)?, a.split)?;
    let tables = match &a.class {
        Some(c) => vec![rank_markers(&d, c, a.top_k, a.target_sum)?],
        None => rank_all_markers(&d, a.top_k, a.target_sum)?,
    };
    let mut w = create(&a.output, out)?;
    write_markers_tsv(&tables, &mut w).and_then(|_| w.flush()).map_err(CliError::io(&a.output))?;
    let top: BTreeMap<&str, Vec<&str>> =
        tables.iter().map(|t| (t.class.as_str(), t.rows.iter().map(|r| r.gene.as_str()).collect())).collect();
    Ok(json!({"classes": tables.len(), "top": top}))
}

fn saliency(a: &SaliencyArgs, out: &mut Outputs) -> Result<Value, CliError> {
    let model = Classifier::load(&a.model)?;
    let d = conform(select(load_dataset(&a.input)?, a.split)?, &model.genes)?;
    let set = match &a.gene_set {
        Some(p) => {
            let (set, missing) = GeneSet::parse(&read_text(p)?, &model.genes);
            if !missing.is_empty() {
                warn!("{} gene-set entries are not in the model vocabulary", missing.len());
            }
            set
        }
        None => GeneSet::all(model.n_genes()),
    };
    let r = dataset_saliency(&model, &d, &set, a.top_n)?;
    let mut w = create(&a.output, out)?;
    write_saliency_tsv(&r, &model.genes, &mut w).and_then(|_| w.flush()).map_err(CliError::io(&a.output))?;
    Ok(json!({"cells": d.n_cells(), "classes": r.classes}))
}

fn templates(a: &TemplatesArgs, out: &mut Outputs) -> Result<Value, CliError> {
    let task: Task = a.task.parse()?;
    let mut pools = TraitPools::default();
    if let Some(p) = &a.personalities {
        pools = pools.with_lines(TraitKind::Personality, None, &read_text(p)?);
    }
    if let Some(p) = &a.motivations {
        pools = pools.with_lines(TraitKind::Motivation, Some(task), &read_text(p)?);
    }
    if let Some(p) = &a.proficiencies {
        pools = pools.with_lines(TraitKind::Proficiency, None, &read_text(p)?);
    }
    let cfg = DedupConfig {
        threshold: a.threshold,
        max_rewrites: a.max_rewrites,
        max_words: a.max_words,
        seed: a.seed,
        pools,
    };
    let mut source: Box<dyn TemplateSource> = match (&a.input, &a.endpoint) {
        (Some(p), _) => Box::new(CannedSource::new(read_templates(p)?)),
        (None, Some(url)) => {
            if let Some(log) = &a.request_log {
                out.claim(log)?;
            }
            Box::new(HttpSource::new(HttpSourceConfig {
                endpoint: url.clone(),
                token_env: std::env::var_os(&a.token_env).map(|_| a.token_env.clone()),
                timeout_secs: a.timeout,
                log_path: a.request_log.clone(),
            })?)
        }
        (None, None) => return Err(CliError::invalid("pass --input or --endpoint")),
    };
    let mut outcome = dedup_pipeline(source.as_mut(), task, a.count, &cfg)?;
    if outcome.records.len() >= 3 {
        split_templates(&mut outcome.records, a.split, a.seed)?;
    } else {
        warn!("fewer than three templates accepted; leaving them unsplit");
    }
    let mut w = create(&a.output, out)?;
    write_jsonl(&outcome.records, &mut w).and_then(|_| w.flush()).map_err(CliError::io(&a.output))?;
    Ok(json!({"task": task, "accepted": outcome.records.len(), "stats": outcome.stats}))
}
