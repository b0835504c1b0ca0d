use std::collections::BTreeMap;
use std::io::Write;

use log::warn;
use serde::{Deserialize, Serialize};

use super::{Classifier, ClassifyError};
use crate::expr::{Dataset, GeneVocabulary};

/// Genes reported per class.
pub const DEFAULT_TOP_GENES: usize = 10;

/// Genes eligible for a nonzero saliency score.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneSet {
    members: Vec<bool>,
}

impl GeneSet {
    pub fn all(n_genes: usize) -> Self {
        GeneSet { members: vec![true; n_genes] }
    }

    pub fn from_indices(n_genes: usize, indices: &[usize]) -> Result<Self, ClassifyError> {
        let mut members = vec![false; n_genes];
        for &i in indices {
            *members
                .get_mut(i)
                .ok_or_else(|| ClassifyError::Argument(format!("gene index {i} out of range for {n_genes} genes")))? =
                true;
        }
        Ok(GeneSet { members })
    }

    /// One identifier per line; blank lines and `#` comments are skipped.
    /// Returns the set and the identifiers missing from `vocab`.
    pub fn parse(text: &str, vocab: &GeneVocabulary) -> (Self, Vec<String>) {
        let mut members = vec![false; vocab.len()];
        let mut missing = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            match vocab.position(line) {
                Some(i) => members[i] = true,
                None => missing.push(line.to_string()),
            }
        }
        (GeneSet { members }, missing)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.members.get(i).copied().unwrap_or(false)
    }
}

/// Masked negative gradient, min-max scaled to `[0, 1]`.
///
/// Gene `i` keeps `-g[i]` only if it is in `set`, `g[i] < 0` and
/// `s[i] > 0`; every other gene gets 0. When the masked vector is constant
/// the result is all zeros.
pub fn saliency_scores(g: &[f64], s: &[f64], set: &GeneSet) -> Result<Vec<f64>, ClassifyError> {
    if g.len() != s.len() || g.len() != set.len() {
        return Err(ClassifyError::Shape(format!(
            "gradient {}, expression {}, gene set {}",
            g.len(),
            s.len(),
            set.len()
        )));
    }
    let o: Vec<f64> = (0..g.len())
        .map(|i| if set.contains(i) && g[i] < 0.0 && s[i] > 0.0 { -g[i] } else { 0.0 })
        .collect();
    let lo = o.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = o.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if o.is_empty() || hi <= lo {
        return Ok(vec![0.0; o.len()]);
    }
    Ok(o.iter().map(|v| (v - lo) / (hi - lo)).collect())
}

/// Class-mean saliency with the top genes of each class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaliencyResult {
    pub classes: Vec<String>,
    /// `scores[k][i]`: mean normalized score of gene `i` over cells of
    /// `classes[k]`.
    pub scores: Vec<Vec<f64>>,
    /// `(gene index, score)` by descending score, ties by gene index.
    pub top: Vec<Vec<(usize, f64)>>,
}

/// Averages per-cell scores within each class and keeps the `n` best genes.
/// Classes in `classes` without any cell are dropped with a warning.
pub fn aggregate_top_genes(
    per_cell: &[Vec<f64>],
    cell_classes: &[String],
    classes: &[String],
    n: usize,
) -> Result<SaliencyResult, ClassifyError> {
    if per_cell.len() != cell_classes.len() {
        return Err(ClassifyError::Shape(format!("{} score rows, {} classes", per_cell.len(), cell_classes.len())));
    }
    let width = per_cell.first().map_or(0, Vec::len);
    if per_cell.iter().any(|r| r.len() != width) {
        return Err(ClassifyError::Shape("score rows differ in length".into()));
    }
    let mut groups: BTreeMap<&str, (usize, Vec<f64>)> = BTreeMap::new();
    for (row, class) in per_cell.iter().zip(cell_classes) {
        if !classes.contains(class) {
            return Err(ClassifyError::UnknownClass(class.clone()));
        }
        let e = groups.entry(class.as_str()).or_insert_with(|| (0, vec![0.0; width]));
        e.0 += 1;
        for (a, v) in e.1.iter_mut().zip(row) {
            *a += v;
        }
    }
    let mut out = SaliencyResult { classes: Vec::new(), scores: Vec::new(), top: Vec::new() };
    for class in classes {
        let Some((count, sums)) = groups.remove(class.as_str()) else {
            warn!("class `{class}` has no cells; omitted from saliency");
            continue;
        };
        let mean: Vec<f64> = sums.into_iter().map(|v| v / count as f64).collect();
        let mut order: Vec<usize> = (0..width).collect();
        order.sort_by(|&a, &b| mean[b].total_cmp(&mean[a]).then(a.cmp(&b)));
        out.top.push(order.into_iter().take(n).map(|i| (i, mean[i])).collect());
        out.classes.push(class.clone());
        out.scores.push(mean);
    }
    Ok(out)
}

/// Saliency of every cell of `d` with respect to its own label, aggregated
/// per class. Cells with labels the classifier lacks are skipped.
pub fn dataset_saliency(
    model: &Classifier,
    d: &Dataset,
    set: &GeneSet,
    n: usize,
) -> Result<SaliencyResult, ClassifyError> {
    let x = model.inputs(&d.matrix)?;
    let mut rows = Vec::with_capacity(d.n_cells());
    let mut labels = Vec::with_capacity(d.n_cells());
    let mut skipped = 0;
    for (c, label) in d.annotations.labels.iter().enumerate() {
        if model.class_index(label).is_none() {
            skipped += 1;
            continue;
        }
        let s = x.row(c);
        let g = model.vanilla_gradient(s, label)?;
        rows.push(saliency_scores(&g, s, set)?);
        labels.push(label.clone());
    }
    if skipped > 0 {
        warn!("{skipped} cells carry labels unknown to the classifier and are skipped");
    }
    aggregate_top_genes(&rows, &labels, &model.classes, n)
}

/// `class, rank, gene, score` rows of the top lists.
pub fn write_saliency_tsv<W: Write>(r: &SaliencyResult, genes: &GeneVocabulary, mut w: W) -> std::io::Result<()> {
    writeln!(w, "class\trank\tgene\tscore")?;
    for (class, top) in r.classes.iter().zip(&r.top) {
        for (rank, &(i, score)) in top.iter().enumerate() {
            writeln!(w, "{class}\t{}\t{}\t{score}", rank + 1, genes.name(i))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_built_five_genes() {
        let g = [-0.4, -0.1, 0.3, -0.2, -0.9];
        let s = [1.0, 2.0, 1.0, 0.0, 3.0];
        let set = GeneSet::from_indices(5, &[0, 1, 2, 3]).unwrap();
        // masked: 0.4, 0.1, 0, 0, 0 (gene 3 unexpressed, gene 4 outside)
        let o = saliency_scores(&g, &s, &set).unwrap();
        let expected = [1.0, 0.25, 0.0, 0.0, 0.0];
        for (a, b) in o.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn positive_gradients_give_zeros() {
        let o = saliency_scores(&[0.1, 0.2], &[1.0, 1.0], &GeneSet::all(2)).unwrap();
        assert_eq!(o, vec![0.0, 0.0]);
    }

    #[test]
    fn class_means_and_ordering() {
        let rows = vec![vec![0.2, 1.0, 0.5], vec![0.4, 0.0, 0.5], vec![0.9, 0.1, 0.9]];
        let labels: Vec<String> = ["a", "a", "b"].iter().map(|s| s.to_string()).collect();
        let classes: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let r = aggregate_top_genes(&rows, &labels, &classes, 2).unwrap();
        assert_eq!(r.classes, vec!["a", "b"]);
        assert!((r.scores[0][0] - 0.3).abs() < 1e-15);
        assert_eq!(r.top[0].iter().map(|t| t.0).collect::<Vec<_>>(), vec![1, 2]);
        // tie between genes 0 and 2 goes to the smaller index
        assert_eq!(r.top[1].iter().map(|t| t.0).collect::<Vec<_>>(), vec![0, 2]);
    }
}
