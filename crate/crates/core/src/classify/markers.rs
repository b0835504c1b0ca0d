use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::ClassifyError;
use crate::expr::{normalize_log1p_lenient, Dataset};

/// Markers reported per class.
pub const DEFAULT_TOP_MARKERS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    /// Two-sided.
    pub p: f64,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Welch's unequal-variance t-test of `mean(a) - mean(b)`.
///
/// When both samples have zero variance the statistic is undefined: equal
/// means give `t = 0, p = 1`, different means `t = ±inf, p = 0`, and `df`
/// falls back to `|a| + |b| - 2`.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<WelchResult, ClassifyError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(ClassifyError::Argument(format!(
            "Welch test needs two values per group, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (qa, qb) = (va / na, vb / nb);
    let se2 = qa + qb;
    if !(se2 > 0.0) {
        let df = na + nb - 2.0;
        return Ok(if ma == mb {
            WelchResult { t: 0.0, df, p: 1.0 }
        } else {
            WelchResult { t: if ma > mb { f64::INFINITY } else { f64::NEG_INFINITY }, df, p: 0.0 }
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| ClassifyError::Argument(e.to_string()))?;
    let p = (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0);
    Ok(WelchResult { t, df, p })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkerRow {
    pub gene_index: usize,
    pub gene: String,
    pub t: f64,
    pub df: f64,
    pub p: f64,
    /// Mean log1p-normalized expression over in-class cells.
    pub mean_in: f64,
    /// Fraction of in-class cells with a nonzero count.
    pub fraction_in: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkerTable {
    pub class: String,
    /// By ascending p, then descending |t|, then gene index.
    pub rows: Vec<MarkerRow>,
}

/// One-vs-rest Welch test of every gene for `class`, keeping the `top_k`
/// best-ranked genes.
pub fn rank_markers(d: &Dataset, class: &str, top_k: usize, target_sum: f64) -> Result<MarkerTable, ClassifyError> {
    let x = normalize_log1p_lenient(&d.matrix, target_sum);
    rank_normalized(d, &x, class, top_k)
}

fn rank_normalized(
    d: &Dataset,
    x: &ndarray::Array2<f64>,
    class: &str,
    top_k: usize,
) -> Result<MarkerTable, ClassifyError> {
    let labels = &d.annotations.labels;
    let inside: Vec<usize> = (0..labels.len()).filter(|&c| labels[c] == class).collect();
    if inside.is_empty() {
        return Err(ClassifyError::UnknownClass(class.to_string()));
    }
    let outside: Vec<usize> = (0..labels.len()).filter(|&c| labels[c] != class).collect();
    let vocab = d.matrix.vocabulary();
    let mut rows = Vec::with_capacity(d.matrix.n_genes());
    for gene in 0..d.matrix.n_genes() {
        let a: Vec<f64> = inside.iter().map(|&c| x[[c, gene]]).collect();
        let b: Vec<f64> = outside.iter().map(|&c| x[[c, gene]]).collect();
        let w = welch_t(&a, &b)?;
        let expressed = inside.iter().filter(|&&c| d.matrix.get(c, gene) > 0).count();
        rows.push(MarkerRow {
            gene_index: gene,
            gene: vocab.name(gene).to_string(),
            t: w.t,
            df: w.df,
            p: w.p,
            mean_in: a.iter().sum::<f64>() / a.len() as f64,
            fraction_in: expressed as f64 / inside.len() as f64,
        });
    }
    rows.sort_by(|a, b| {
        a.p.total_cmp(&b.p).then(b.t.abs().total_cmp(&a.t.abs())).then(a.gene_index.cmp(&b.gene_index))
    });
    rows.truncate(top_k);
    Ok(MarkerTable { class: class.to_string(), rows })
}

/// Marker tables for every label of `d`, in label order.
pub fn rank_all_markers(d: &Dataset, top_k: usize, target_sum: f64) -> Result<Vec<MarkerTable>, ClassifyError> {
    let x = normalize_log1p_lenient(&d.matrix, target_sum);
    let mut classes = d.annotations.labels.clone();
    classes.sort();
    classes.dedup();
    classes.iter().map(|c| rank_normalized(d, &x, c, top_k)).collect()
}

/// `class, rank, gene, t, df, p, mean, fraction` rows.
pub fn write_markers_tsv<W: Write>(tables: &[MarkerTable], mut w: W) -> std::io::Result<()> {
    writeln!(w, "class\trank\tgene\tt\tdf\tp\tmean\tfraction")?;
    for tab in tables {
        for (rank, r) in tab.rows.iter().enumerate() {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                tab.class,
                rank + 1,
                r.gene,
                r.t,
                r.df,
                r.p,
                r.mean_in,
                r.fraction_in
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples() {
        let w = welch_t(&[1.0, 2.0, 4.0], &[1.0, 2.0, 4.0]).unwrap();
        assert_eq!((w.t, w.p), (0.0, 1.0));
    }

    #[test]
    fn hand_evaluated_statistic() {
        // a: mean 2, var 1; b: mean 3.5, var 3.5
        let w = welch_t(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let se2: f64 = 1.0 / 3.0 + 3.5 / 6.0;
        assert!((w.t - (-1.5 / se2.sqrt())).abs() < 1e-14);
        let df = se2 * se2 / ((1.0f64 / 3.0).powi(2) / 2.0 + (3.5f64 / 6.0).powi(2) / 5.0);
        assert!((w.df - df).abs() < 1e-12);
        let s = welch_t(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.t, -w.t);
        assert_eq!(s.p, w.p);
    }

    #[test]
    fn zero_variance_conventions() {
        let w = welch_t(&[2.0, 2.0], &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!((w.t, w.p), (f64::INFINITY, 0.0));
        let w = welch_t(&[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!((w.t, w.p), (0.0, 1.0));
        assert!(welch_t(&[1.0], &[1.0, 2.0]).is_err());
    }
}
