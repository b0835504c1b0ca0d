//! Fixtures and independent oracles shared by the integration tests and the
//! acceptance run. Every check returns a one-line summary or the reason it
//! failed.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use cellkit::classify::{
    aggregate_top_genes, rank_all_markers, rank_markers, saliency_scores, Classifier, GeneSet,
};
use cellkit::cvae::{
    kl_gaussian, kl_lognormal, sample_zinb_chain, zinb_log_pmf, Condition, ConditionCategories, ConditionEncoder,
    CvaeArch, CvaeError, CvaeModel, ElboBatch, LibraryPrior,
};
use cellkit::expr::{
    normalize_log1p, qc_filter, split_assignments, CellAnnotations, Dataset, ExpressionMatrix, GeneVocabulary,
    QcThresholds, Split, DEFAULT_TARGET_SUM,
};
use cellkit::metrics::{delta_sknn, median_bandwidth, mmd, pknn, sknn, Embedding};
use cellkit::numkit::gradcheck::{check_params, numeric_gradient, relative_error};
use cellkit::numkit::{Activation, MlpSpec, NumError, RngStream, Tensor};
use cellkit::templates::{Task, TemplateRecord};
use ndarray::Array2;
use statrs::distribution::{Continuous, ContinuousCDF, LogNormal, Normal, StudentsT};

pub type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

pub fn vocab(n: usize) -> Arc<GeneVocabulary> {
    Arc::new(GeneVocabulary::new((0..n).map(|i| format!("g{i:02}")).collect()).unwrap())
}

pub fn classes(k: usize) -> Vec<String> {
    (0..k).map(|c| format!("c{c}")).collect()
}

pub fn dataset(rows: &[Vec<u32>], labels: Vec<String>, split: Vec<Split>) -> Dataset {
    let m = ExpressionMatrix::from_dense(vocab(rows[0].len()), rows).unwrap();
    Dataset::new(m, CellAnnotations::from_labels(labels), split).unwrap()
}

fn as_num(e: CvaeError) -> NumError {
    match e {
        CvaeError::Num(n) => n,
        other => NumError::State(other.to_string()),
    }
}

// ---- CVAE gradients ----

/// A tiny CVAE with small random weights and a three-cell batch, one of
/// them with the null condition.
pub fn cvae_instance(seed: u64, activation: Activation) -> (CvaeModel, ElboBatch, Tensor) {
    let mut rng = RngStream::new(seed);
    let n_genes = 3 + rng.below(4);
    let cats = ConditionCategories {
        cell_types: vec!["t0".into(), "t1".into(), "t2".into()],
        species: vec!["human".into(), "mouse".into()],
        tissues: vec!["blood".into()],
    };
    let arch = CvaeArch {
        n_genes,
        d_z: 2 + rng.below(2),
        hidden: 3 + rng.below(3),
        activation,
        condition: ConditionEncoder::new(cats, 2, 3).unwrap(),
        target_sum: 1e4,
    };
    let genes = Arc::new(GeneVocabulary::new((0..n_genes).map(|i| format!("g{i}")).collect()).unwrap());
    let prior = LibraryPrior { mean: 2.0 + rng.uniform(), var: 0.2 + rng.uniform() };
    let mut model = CvaeModel::new(arch, genes, prior, seed).unwrap();
    let names: Vec<String> = model.params.names().map(str::to_string).collect();
    for name in names {
        for v in model.params.get_mut(&name).unwrap().data_mut() {
            *v = 1e-3 * rng.normal();
        }
    }
    let n = 3;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n_genes).map(|_| if rng.bernoulli(0.3) { 0.0 } else { rng.below(6) as f64 }).collect())
        .collect();
    let conds = (0..n)
        .map(|i| if i == 2 { Condition::Null } else { Condition::new(format!("t{}", rng.below(3)), "mouse", "blood") })
        .collect();
    let batch = ElboBatch::new(&rows, conds, 1e4).unwrap();
    let d = model.arch.d_z + 1;
    let noise = Tensor::matrix(n, d, rng.normals(n * d)).unwrap();
    (model, batch, noise)
}

/// Parameter and input gradients of the mean ELBO loss against central
/// differences.
pub fn cvae_gradient_check(seed: u64, tol: f64) -> Check {
    let act = [Activation::Softplus, Activation::Identity][(seed % 2) as usize];
    let (mut model, batch, noise) = cvae_instance(seed, act);
    let alpha = 0.3 + 0.7 * RngStream::new(seed ^ 0xa1fa).uniform();
    model.elbo_loss(&batch, alpha, &noise).map_err(|e| e.to_string())?;
    let n = batch.len() as f64;
    let report = check_params(&model.params, 1e-5, |p| {
        model.elbo_with(p, &batch, alpha, &noise).map(|t| t.loss / n).map_err(as_num)
    })
    .map_err(|e| e.to_string())?;
    ensure!(report.passes(tol), "CVAE seed {seed}: {report:?}");

    let analytic = model.elbo_input_gradient(&batch, alpha, &noise).map_err(|e| e.to_string())?;
    let numeric = numeric_gradient(batch.inputs(), 1e-5, |x| {
        model.elbo_with_inputs(&batch, x, alpha, &noise).map_err(as_num)
    })
    .map_err(|e| e.to_string())?;
    let worst = analytic.data().iter().zip(numeric.data()).map(|(a, b)| relative_error(*a, *b)).fold(0.0, f64::max);
    ensure!(worst < tol, "CVAE seed {seed}: input gradient relative error {worst:.2e}");
    Ok(format!("max rel err {:.1e}", report.max_rel_error.max(worst)))
}

// ---- classifier ----

pub fn random_classifier(seed: u64) -> (Classifier, Tensor, Vec<usize>) {
    let mut rng = RngStream::new(seed);
    let genes = 3 + rng.below(5);
    let k = 2 + rng.below(3);
    let hidden: Vec<usize> = (0..rng.below(3)).map(|_| 2 + rng.below(4)).collect();
    let act = [Activation::Softplus, Activation::Identity][rng.below(2)];
    let mut m = Classifier::new(vocab(genes), classes(k), &hidden, act, 1e4, seed).unwrap();
    for name in m.params.names().map(str::to_string).collect::<Vec<_>>() {
        for v in m.params.get_mut(&name).unwrap().data_mut() {
            *v = rng.normal();
        }
    }
    let n = 2 + rng.below(4);
    let x = Tensor::matrix(n, genes, (0..n * genes).map(|_| 3.0 * rng.uniform()).collect()).unwrap();
    let t = (0..n).map(|_| rng.below(k)).collect();
    (m, x, t)
}

/// Parameter gradients of the mean cross-entropy and the input gradient
/// used for saliency, against central differences.
pub fn classifier_gradient_check(seed: u64, tol: f64) -> Check {
    let (mut m, x, t) = random_classifier(seed);
    let state = |e: cellkit::classify::ClassifyError| NumError::State(e.to_string());
    m.mean_loss_backward(&x, &t).map_err(|e| e.to_string())?;
    let report =
        check_params(&m.params, 1e-5, |p| m.mean_loss_with(p, &x, &t).map_err(state)).map_err(|e| e.to_string())?;
    ensure!(report.passes(tol), "classifier seed {seed}: {report:?}");

    let row = x.row(0).to_vec();
    let analytic = m.vanilla_gradient(&row, &m.classes[t[0]]).map_err(|e| e.to_string())?;
    let numeric = numeric_gradient(&Tensor::matrix(1, row.len(), row.clone()).unwrap(), 1e-5, |xi| {
        m.mean_loss_with(&m.params, xi, &t[..1]).map_err(state)
    })
    .map_err(|e| e.to_string())?;
    let worst = analytic.iter().zip(numeric.data()).map(|(a, b)| relative_error(*a, *b)).fold(0.0, f64::max);
    ensure!(worst < tol, "classifier seed {seed}: input gradient relative error {worst:.2e}");
    Ok(format!("max rel err {:.1e}", report.max_rel_error.max(worst)))
}

/// Three classes, each owning a block of four genes that carries most of its
/// counts over a weak uniform background. Every fifth cell is test.
pub fn separable(n: usize, seed: u64) -> Dataset {
    let mut rng = RngStream::new(seed);
    let genes = 12;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let c = i % 3;
        rows.push(
            (0..genes)
                .map(|g| if g / 4 == c { 20 + rng.below(30) as u32 } else { rng.below(3) as u32 })
                .collect(),
        );
        labels.push(format!("c{c}"));
    }
    let split = (0..n).map(|i| if i % 5 == 4 { Split::Test } else { Split::Train }).collect();
    dataset(&rows, labels, split)
}

/// Linear classifier whose class `c` weight on gene `c` is at least ten
/// times every other weight.
pub fn planted(seed: u64, genes: usize, k: usize) -> Classifier {
    let mut rng = RngStream::new(seed);
    let mut m = Classifier::new(vocab(genes), classes(k), &[], Activation::Identity, 1e4, seed).unwrap();
    let w = m.params.get_mut(&MlpSpec::weight_name("clf", 0)).unwrap();
    for g in 0..genes {
        for c in 0..k {
            w.data_mut()[g * k + c] = if g == c { 1.0 } else { 0.1 * rng.uniform() };
        }
    }
    m
}

pub fn planted_ranks_first(seed: u64) -> Check {
    let (genes, k) = (20, 4);
    let m = planted(seed, genes, k);
    let mut rng = RngStream::new(100 + seed);
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for cell in 0..40 {
        let class = cell % k;
        let x: Vec<f64> = (0..genes).map(|_| 0.5 + 4.0 * rng.uniform()).collect();
        let g = m.vanilla_gradient(&x, &m.classes[class]).map_err(|e| e.to_string())?;
        scores.push(saliency_scores(&g, &x, &GeneSet::all(genes)).map_err(|e| e.to_string())?);
        labels.push(m.classes[class].clone());
    }
    let r = aggregate_top_genes(&scores, &labels, &m.classes, 3).map_err(|e| e.to_string())?;
    for (c, top) in r.top.iter().enumerate() {
        ensure!(top[0].0 == c, "seed {seed}, class {c}: top genes {top:?}");
    }
    Ok(format!("seed {seed} ok"))
}

/// Saliency mask soundness on one random input: a positive score needs a
/// negative gradient, positive expression and gene-set membership.
pub fn mask_holds(rng: &mut RngStream, n: usize) -> Check {
    let g: Vec<f64> = (0..n).map(|_| 4.0 * rng.uniform() - 2.0).collect();
    let s: Vec<f64> = (0..n).map(|_| if rng.bernoulli(0.3) { 0.0 } else { 5.0 * rng.uniform() }).collect();
    let members: Vec<bool> = (0..n).map(|_| rng.bernoulli(0.5)).collect();
    let idx: Vec<usize> = (0..n).filter(|&i| members[i]).collect();
    let set = GeneSet::from_indices(n, &idx).map_err(|e| e.to_string())?;
    let sc = saliency_scores(&g, &s, &set).map_err(|e| e.to_string())?;
    for i in 0..n {
        ensure!((0.0..=1.0).contains(&sc[i]), "score {} outside [0, 1]", sc[i]);
        ensure!(sc[i] == 0.0 || (members[i] && g[i] < 0.0 && s[i] > 0.0), "gene {i} scored {}", sc[i]);
    }
    Ok(String::new())
}

// ---- Welch markers ----

/// Direct two-sample Welch formula with the two-sided p from the Student t
/// survival function.
pub fn oracle_welch(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let var = |x: &[f64], m: f64| x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64;
    let (ma, mb) = (mean(a), mean(b));
    let (sa, sb) = (var(a, ma) / a.len() as f64, var(b, mb) / b.len() as f64);
    let t = (ma - mb) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa.powi(2) / (a.len() - 1) as f64 + sb.powi(2) / (b.len() - 1) as f64);
    let p = 2.0 * StudentsT::new(0.0, 1.0, df).unwrap().sf(t.abs());
    (t, df, p)
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs().max(1.0)
}

/// 60 cells, 20 genes, three classes with class-specific boosts on the first
/// nine genes; every one-vs-rest ranking is recomputed gene by gene.
pub fn markers_match_recomputation() -> Check {
    let mut rng = RngStream::new(21);
    let (n, genes) = (60, 20);
    let labels: Vec<String> = (0..n).map(|i| format!("c{}", i % 3)).collect();
    let rows: Vec<Vec<u32>> = (0..n)
        .map(|i| {
            (0..genes)
                .map(|g| {
                    let boost = if g % 3 == i % 3 && g < 9 { 6 } else { 1 };
                    (rng.below(5) * boost) as u32 + u32::from(g == 19)
                })
                .collect()
        })
        .collect();
    let d = dataset(&rows, labels.clone(), vec![Split::Train; n]);
    let logn: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let tot: u32 = r.iter().sum();
            r.iter().map(|&c| (1.0 + c as f64 * 1e4 / tot as f64).ln()).collect()
        })
        .collect();
    let all = rank_all_markers(&d, genes, 1e4).map_err(|e| e.to_string())?;
    for class in ["c0", "c1", "c2"] {
        let mut expected: Vec<(usize, f64, f64, f64)> = (0..genes)
            .map(|g| {
                let a: Vec<f64> = (0..n).filter(|&i| labels[i] == class).map(|i| logn[i][g]).collect();
                let b: Vec<f64> = (0..n).filter(|&i| labels[i] != class).map(|i| logn[i][g]).collect();
                let (t, df, p) = oracle_welch(&a, &b);
                (g, t, df, p)
            })
            .collect();
        expected.sort_by(|x, y| {
            x.3.partial_cmp(&y.3).unwrap().then(y.1.abs().partial_cmp(&x.1.abs()).unwrap()).then(x.0.cmp(&y.0))
        });
        let table = rank_markers(&d, class, genes, 1e4).map_err(|e| e.to_string())?;
        ensure!(Some(&table) == all.iter().find(|t| t.class == class), "rank_all_markers disagrees for {class}");
        let got: Vec<usize> = table.rows.iter().map(|r| r.gene_index).collect();
        let want: Vec<usize> = expected.iter().map(|e| e.0).collect();
        ensure!(got == want, "class {class}: order {got:?}, expected {want:?}");
        for (row, e) in table.rows.iter().zip(&expected) {
            ensure!(
                close(row.t, e.1, 1e-12) && close(row.df, e.2, 1e-12) && (row.p - e.3).abs() <= 1e-12 * e.3,
                "class {class}, gene {}: ({}, {}, {}) vs ({}, {}, {})",
                e.0,
                row.t,
                row.df,
                row.p,
                e.1,
                e.2,
                e.3
            );
        }
    }
    Ok("3 classes x 20 genes".into())
}

// ---- embedding metrics ----

pub fn random_embedding(rng: &mut RngStream, n: usize, dim: usize, classes: usize) -> Embedding {
    let pts = Array2::from_shape_fn((n, dim), |_| 3.0 * rng.normal());
    let labels = (0..n).map(|_| format!("c{}", rng.below(classes))).collect();
    Embedding::new(pts, labels).unwrap()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn rows(e: &Embedding) -> Vec<Vec<f64>> {
    e.points().rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Every other point sorted by (distance, index), full sort.
fn ranked(pts: &[Vec<f64>], q: &[f64], skip: Option<usize>) -> Vec<(f64, usize)> {
    let mut v: Vec<(f64, usize)> =
        (0..pts.len()).filter(|&j| Some(j) != skip).map(|j| (dist(&pts[j], q), j)).collect();
    v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    v
}

pub fn brute_bandwidth(e: &Embedding, nb: usize) -> f64 {
    let pts = rows(e);
    let mut m: Vec<f64> = (0..pts.len())
        .map(|i| ranked(&pts, &pts[i], Some(i)).iter().take(nb).map(|x| x.0).sum::<f64>() / nb as f64)
        .collect();
    m.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = m.len();
    if n % 2 == 1 {
        m[n / 2]
    } else {
        (m[n / 2 - 1] + m[n / 2]) / 2.0
    }
}

pub fn brute_sknn(e: &Embedding, k: usize) -> f64 {
    let pts = rows(e);
    let lab = e.labels();
    let mut s = 0.0;
    for i in 0..pts.len() {
        let same = ranked(&pts, &pts[i], Some(i)).iter().take(k).filter(|x| lab[x.1] == lab[i]).count();
        s += same as f64 / k as f64;
    }
    s / pts.len() as f64
}

pub fn brute_pknn(real: &Embedding, gen: &Embedding, k: usize) -> f64 {
    let rp = rows(real);
    let gp = rows(gen);
    let mut hits = 0;
    for (i, q) in gp.iter().enumerate() {
        let nn = ranked(&rp, q, None);
        let mut tally: Vec<(String, usize, f64)> = Vec::new();
        for &(d, j) in nn.iter().take(k) {
            let l = &real.labels()[j];
            match tally.iter_mut().find(|t| &t.0 == l) {
                Some(t) => {
                    t.1 += 1;
                    t.2 += d;
                }
                None => tally.push((l.clone(), 1, d)),
            }
        }
        // Most votes, then smallest summed distance, then smallest label.
        tally.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.partial_cmp(&b.2).unwrap()).then(a.0.cmp(&b.0)));
        if tally[0].0 == gen.labels()[i] {
            hits += 1;
        }
    }
    hits as f64 / gp.len() as f64
}

pub fn brute_mmd(x: &Embedding, y: &Embedding, omega: f64) -> f64 {
    let (xp, yp) = (rows(x), rows(y));
    let k = |a: &[f64], b: &[f64]| {
        let d2 = dist(a, b).powi(2);
        (0..3).map(|i| (-d2 / (2f64.powi(i - 1) * omega * omega)).exp()).sum::<f64>()
    };
    let mean = |a: &[Vec<f64>], b: &[Vec<f64>]| {
        a.iter().map(|p| b.iter().map(|q| k(p, q)).sum::<f64>()).sum::<f64>() / (a.len() * b.len()) as f64
    };
    (mean(&xp, &xp) - 2.0 * mean(&xp, &yp) + mean(&yp, &yp)).max(0.0).sqrt()
}

/// One random real/generated pair of `n` points checked metric by metric.
pub fn metrics_match_brute_force(case: u64, n: usize, ks: &[usize]) -> Check {
    let mut rng = RngStream::new(1000 + case);
    let dim = 1 + rng.below(3);
    let classes = 2 + rng.below(3);
    let real = random_embedding(&mut rng, n, dim, classes);
    let gen = random_embedding(&mut rng, n, dim, 3);
    let err = |e: cellkit::metrics::MetricError| e.to_string();
    let omega = median_bandwidth(&real, 25).map_err(err)?;
    let want = brute_bandwidth(&real, 25);
    ensure!((omega - want).abs() < 1e-9, "case {case}: bandwidth {omega} vs {want}");
    let (m, want) = (mmd(gen.points(), real.points(), omega).map_err(err)?, brute_mmd(&gen, &real, omega));
    ensure!((m - want).abs() < 1e-9, "case {case}: MMD {m} vs {want}");
    let self_mmd = mmd(real.points(), real.points(), omega).map_err(err)?;
    ensure!(self_mmd <= 1e-9, "case {case}: MMD(X, X) = {self_mmd}");
    for &k in ks {
        let (s, want) = (sknn(&gen, k).map_err(err)?, brute_sknn(&gen, k));
        ensure!((s - want).abs() < 1e-9, "case {case} K {k}: sKNN {s} vs {want}");
        let (p, want) = (pknn(&real, &gen, k).map_err(err)?, brute_pknn(&real, &gen, k));
        ensure!((p - want).abs() < 1e-9, "case {case} K {k}: pKNN {p} vs {want}");
        let d = delta_sknn(&real, &gen, k).map_err(err)?;
        let want = (brute_sknn(&gen, k) - brute_sknn(&real, k)).abs();
        ensure!((d - want).abs() < 1e-9, "case {case} K {k}: delta sKNN {d} vs {want}");
    }
    Ok(format!("n {n}"))
}

// ---- preprocessing ----

/// Dense fixed-point QC on a plain `Vec<Vec<u32>>`, written without reference
/// to the sparse implementation.
pub fn oracle_qc(rows: &[Vec<u32>], names: &[String], t: &QcThresholds) -> (Vec<usize>, Vec<usize>) {
    let mut cells: Vec<usize> = (0..rows.len()).collect();
    let mut genes: Vec<usize> = (0..names.len()).collect();
    let mito = |g: usize| t.mito_prefixes.iter().any(|p| names[g].starts_with(p.as_str()));
    loop {
        let before = (cells.len(), genes.len());
        cells.retain(|&c| {
            let expressed = genes.iter().filter(|&&g| rows[c][g] > 0).count();
            let total: u64 = genes.iter().map(|&g| rows[c][g] as u64).sum();
            let mt: u64 = genes.iter().filter(|&&g| mito(g)).map(|&g| rows[c][g] as u64).sum();
            let frac = if total > 0 { mt as f64 / total as f64 } else { 0.0 };
            expressed >= t.min_genes_per_cell
                && frac <= t.max_mito_fraction
                && t.max_total_counts.map_or(true, |m| total <= m)
        });
        genes.retain(|&g| cells.iter().filter(|&&c| rows[c][g] > 0).count() >= t.min_cells_per_gene);
        if (cells.len(), genes.len()) == before {
            return (cells, genes);
        }
    }
}

/// Default thresholds on a crafted 32 x 300 matrix whose removals are known
/// by construction.
pub fn crafted_qc_check() -> Check {
    // 32 cells x 300 genes. Cells 0..28 express genes 0..250. Cell 28 has
    // 199 genes, cell 29 exactly 200, cell 30 is 30% mitochondrial, cell 31
    // exactly 20%. Genes 250..262 appear in 1..13 of the first cells.
    let n_genes = 300;
    let mut names: Vec<String> = (0..n_genes).map(|g| format!("G{g}")).collect();
    names[0] = "MT-CO1".into();
    let mut rows = vec![vec![0u32; n_genes]; 32];
    for row in rows.iter_mut().take(28) {
        for v in row.iter_mut().take(250) {
            *v = 1;
        }
        row[0] = 0;
        row[1] = 5;
    }
    for g in 1..200 {
        rows[28][g] = 1;
    }
    for g in 1..201 {
        rows[29][g] = 1;
    }
    for (c, mito) in [(30usize, 90u32), (31, 60)] {
        // 90/300 = 0.3 and 60/300 = 0.2; only the strict excess is removed.
        let others = if c == 30 { 210 } else { 240 };
        rows[c][0] = mito;
        for g in 1..=others {
            rows[c][g] = 1;
        }
    }
    for (i, g) in (250..263).enumerate() {
        for row in rows.iter_mut().take(i + 1) {
            row[g] = 2;
        }
    }
    let t = QcThresholds::default();
    let m = ExpressionMatrix::from_dense(Arc::new(GeneVocabulary::new(names.clone()).unwrap()), &rows).unwrap();
    let (out, report) = qc_filter(&m, &t).map_err(|e| e.to_string())?;

    let removed_cells: BTreeSet<usize> = (0..32).filter(|c| !report.kept_cells.contains(c)).collect();
    ensure!(removed_cells == BTreeSet::from([28, 30]), "removed cells {removed_cells:?}");
    ensure!(
        (report.cells_removed_low_genes, report.cells_removed_aberrant) == (1, 1),
        "removal counts {report:?}"
    );
    // Genes 250..257 are in fewer than 8 cells, 263..300 in none; the
    // mitochondrial gene survives through cells 30 and 31 only, so it goes too.
    let mut expected_removed: BTreeSet<usize> = (250..257).chain(263..300).collect();
    expected_removed.insert(0);
    let removed_genes: BTreeSet<usize> = (0..n_genes).filter(|g| !report.kept_genes.contains(g)).collect();
    ensure!(removed_genes == expected_removed, "removed genes {removed_genes:?}");
    ensure!(report.genes_removed == expected_removed.len(), "gene count {}", report.genes_removed);
    ensure!((out.n_cells(), out.n_genes()) == (30, n_genes - expected_removed.len()), "output shape");
    ensure!(
        oracle_qc(&rows, &names, &t) == (report.kept_cells.clone(), report.kept_genes.clone()),
        "fixed-point oracle disagrees"
    );
    Ok(format!("2 of 32 cells and {} of {n_genes} genes removed", expected_removed.len()))
}


/// Random counts: every normalized row sums to 1e4 before log1p and each
/// entry equals the direct formula.
pub fn normalization_check() -> Check {
    let mut rng = RngStream::new(3);
    let rows: Vec<Vec<u32>> = (0..50)
        .map(|_| (0..80).map(|_| if rng.uniform() < 0.3 { rng.below(500) as u32 } else { 0 }).collect())
        .collect();
    let m = ExpressionMatrix::from_dense(vocab(80), &rows).unwrap();
    let x = normalize_log1p(&m, DEFAULT_TARGET_SUM).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for (c, row) in x.rows().into_iter().enumerate() {
        let total: u32 = rows[c].iter().sum();
        if total == 0 {
            continue;
        }
        let s: f64 = row.iter().map(|v| v.exp_m1()).sum();
        worst = worst.max((s - 1e4).abs());
        ensure!((s - 1e4).abs() < 1e-9, "cell {c} sums to {s}");
        for (g, v) in row.iter().enumerate() {
            let want = (rows[c][g] as f64 * 1e4 / total as f64).ln_1p();
            ensure!((v - want).abs() < 1e-12, "cell {c} gene {g}: {v} vs {want}");
        }
    }
    Ok(format!("max row-sum error {worst:.1e}"))
}

/// 8:1:1 assignment is a partition with `floor(n/10)` valid and test cells.
pub fn split_check() -> Check {
    for n in [10usize, 11, 99, 1000, 1237] {
        let tags = split_assignments(n, (0.8, 0.1, 0.1), 42).map_err(|e| e.to_string())?;
        let count = |s: Split| tags.iter().filter(|&&t| t == s).count();
        let expect = n / 10;
        ensure!(tags.len() == n, "n {n}: {} tags", tags.len());
        ensure!(
            (count(Split::Train), count(Split::Valid), count(Split::Test)) == (n - 2 * expect, expect, expect),
            "n {n}: counts ({}, {}, {})",
            count(Split::Train),
            count(Split::Valid),
            count(Split::Test)
        );
    }
    Ok("n in {10, 11, 99, 1000, 1237}".into())
}

// ---- templates ----

/// Independent ROUGE-L: lowercase, drop ASCII punctuation, LCS F1.
pub fn oracle_rouge(a: &str, b: &str) -> f64 {
    let toks = |s: &str| -> Vec<String> {
        s.to_lowercase()
            .chars()
            .filter(|c| !c.is_ascii_punctuation())
            .collect::<String>()
            .split_whitespace()
            .map(String::from)
            .collect()
    };
    let (x, y) = (toks(a), toks(b));
    if x.is_empty() || y.is_empty() {
        return 0.0;
    }
    let mut dp = vec![vec![0usize; y.len() + 1]; x.len() + 1];
    for i in 1..=x.len() {
        for j in 1..=y.len() {
            dp[i][j] = if x[i - 1] == y[j - 1] { dp[i - 1][j - 1] + 1 } else { dp[i - 1][j].max(dp[i][j - 1]) };
        }
    }
    let l = dp[x.len()][y.len()] as f64;
    if l == 0.0 {
        return 0.0;
    }
    let (p, r) = (l / y.len() as f64, l / x.len() as f64);
    2.0 * p * r / (p + r)
}

pub const WORDS: [&str; 24] = [
    "please", "identify", "the", "cell", "type", "of", "this", "profile", "sample", "could", "you", "tell", "me",
    "which", "population", "belongs", "quickly", "carefully", "expression", "data", "here", "is", "what", "kind",
];

/// Candidate instructions over a small word pool; about 30% are one-word
/// edits of an earlier candidate.
pub fn corpus(n: usize, seed: u64) -> Vec<TemplateRecord> {
    let mut rng = RngStream::new(seed);
    let mut out: Vec<TemplateRecord> = Vec::with_capacity(n);
    for i in 0..n {
        let instruction = if i > 0 && rng.bernoulli(0.3) {
            // Near copy of an earlier candidate with one word swapped.
            let prev = &out[rng.below(i)].instruction;
            let mut w: Vec<String> = prev.split(' ').map(String::from).collect();
            let j = rng.below(w.len());
            if w[j] != "{input}" {
                w[j] = WORDS[rng.below(WORDS.len())].to_string();
            }
            w.join(" ")
        } else {
            let len = 4 + rng.below(12);
            let mut w: Vec<String> = (0..len).map(|_| WORDS[rng.below(WORDS.len())].to_string()).collect();
            w.insert(rng.below(len), "{input}".into());
            w.join(" ")
        };
        out.push(TemplateRecord {
            task: Task::Cta,
            instruction,
            response: "The answer is {output}".into(),
            traits: None,
            has_options: false,
            split: None,
        });
    }
    out
}

// ---- ZINB and KL Monte Carlo ----

/// Compares the analytic ZINB pmf on `y = 0..=20` with the frequencies of
/// `sims` draws of the Gamma-Poisson-Bernoulli chain. Returns the largest
/// deviation in binomial standard errors.
pub fn zinb_chain_deviation(mu: f64, theta: f64, pi: f64, sims: u64, seed: u64) -> Result<f64, String> {
    let mut rng = RngStream::new(seed);
    let mut hist = [0u64; 21];
    for _ in 0..sims {
        let y = sample_zinb_chain(&mut rng, 1.0, mu, theta, pi) as usize;
        if y <= 20 {
            hist[y] += 1;
        }
    }
    let mut worst: f64 = 0.0;
    for (y, &h) in hist.iter().enumerate() {
        let p = zinb_log_pmf(y as u64, mu, theta, pi).exp();
        let freq = h as f64 / sims as f64;
        let se = (p * (1.0 - p) / sims as f64).sqrt();
        let z = if se > 0.0 {
            (freq - p).abs() / se
        } else if freq == p {
            0.0
        } else {
            f64::INFINITY
        };
        worst = worst.max(z);
    }
    Ok(worst)
}

/// The 27-point grid: every combination of three means, inverse
/// dispersions and zero-inflation rates.
pub fn zinb_grid() -> Vec<(f64, f64, f64)> {
    let mut g = Vec::new();
    for mu in [0.5, 3.0, 10.0] {
        for theta in [0.5, 2.0, 20.0] {
            for pi in [0.0, 0.3, 0.7] {
                g.push((mu, theta, pi));
            }
        }
    }
    g
}

/// Closed-form Gaussian and log-normal KL of case `case` against
/// `samples`-draw Monte Carlo estimates of `E_q[ln q - ln p]`, using
/// independent density implementations. Returns the worse relative error.
///
/// Means differ by at least 1 per coordinate with variances in [0.2, 2],
/// so every KL is at least 0.25 and a relative tolerance is meaningful.
pub fn kl_monte_carlo(case: u64, samples: usize) -> Result<f64, String> {
    let mut rng = RngStream::new(500 + case);
    let d = 1 + rng.below(6);
    let m1: Vec<f64> = (0..d).map(|_| 4.0 * rng.uniform() - 2.0).collect();
    let m2: Vec<f64> = m1
        .iter()
        .map(|m| {
            let gap = 1.0 + 1.5 * rng.uniform();
            if rng.bernoulli(0.5) { m + gap } else { m - gap }
        })
        .collect();
    let v1: Vec<f64> = (0..d).map(|_| 0.2 + 1.8 * rng.uniform()).collect();
    let v2: Vec<f64> = (0..d).map(|_| 0.2 + 1.8 * rng.uniform()).collect();
    let exact = kl_gaussian(&m1, &v1, &m2, &v2).map_err(|e| e.to_string())?;
    let q: Vec<Normal> = (0..d).map(|i| Normal::new(m1[i], v1[i].sqrt()).unwrap()).collect();
    let p: Vec<Normal> = (0..d).map(|i| Normal::new(m2[i], v2[i].sqrt()).unwrap()).collect();
    let mut acc = 0.0;
    for _ in 0..samples {
        for i in 0..d {
            let x = m1[i] + v1[i].sqrt() * rng.normal();
            acc += q[i].ln_pdf(x) - p[i].ln_pdf(x);
        }
    }
    let mc = acc / samples as f64;
    let rel_g = (mc - exact).abs() / exact;

    // Log-normal on the first coordinate, sampled and scored in the
    // positive domain.
    let exact_ln = kl_lognormal(m1[0], v1[0], m2[0], v2[0]).map_err(|e| e.to_string())?;
    let lq = LogNormal::new(m1[0], v1[0].sqrt()).unwrap();
    let lp = LogNormal::new(m2[0], v2[0].sqrt()).unwrap();
    let mut acc = 0.0;
    for _ in 0..samples {
        let x = (m1[0] + v1[0].sqrt() * rng.normal()).exp();
        acc += lq.ln_pdf(x) - lp.ln_pdf(x);
    }
    let mc_ln = acc / samples as f64;
    let rel_l = (mc_ln - exact_ln).abs() / exact_ln;
    Ok(rel_g.max(rel_l))
}
