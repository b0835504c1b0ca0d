use serde::{Deserialize, Serialize};

use super::{ExprError, ExpressionMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QcThresholds {
    pub min_genes_per_cell: usize,
    pub min_cells_per_gene: usize,
    pub mito_prefixes: Vec<String>,
    pub max_mito_fraction: f64,
    /// Cells with a strictly larger total count are removed.
    pub max_total_counts: Option<u64>,
}

impl Default for QcThresholds {
    fn default() -> Self {
        QcThresholds {
            min_genes_per_cell: 200,
            min_cells_per_gene: 8,
            mito_prefixes: vec!["MT-".into(), "mt-".into()],
            max_mito_fraction: 0.2,
            max_total_counts: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QcReport {
    pub cells_removed_low_genes: usize,
    pub cells_removed_aberrant: usize,
    pub genes_removed: usize,
    pub thresholds: QcThresholds,
    /// Surviving cells and genes as indices into the input matrix.
    #[serde(skip)]
    pub kept_cells: Vec<usize>,
    #[serde(skip)]
    pub kept_genes: Vec<usize>,
}

/// Nearest-rank percentile of per-cell total counts (`pct` in `(0, 100]`).
pub fn total_count_percentile(m: &ExpressionMatrix, pct: f64) -> Result<u64, ExprError> {
    if !(pct > 0.0 && pct <= 100.0) {
        return Err(ExprError::Argument(format!("percentile {pct} outside (0, 100]")));
    }
    if m.n_cells() == 0 {
        return Err(ExprError::Argument("percentile of an empty matrix".into()));
    }
    let mut totals: Vec<u64> = (0..m.n_cells()).map(|c| m.total(c)).collect();
    totals.sort_unstable();
    let rank = ((pct / 100.0) * totals.len() as f64).ceil().max(1.0) as usize;
    Ok(totals[rank.min(totals.len()) - 1])
}

/// Removes low-quality and aberrant cells, then rarely expressed genes.
///
/// The two passes repeat until neither removes anything, so the result
/// satisfies every threshold simultaneously and a second call is a no-op.
pub fn qc_filter(
    m: &ExpressionMatrix,
    t: &QcThresholds,
) -> Result<(ExpressionMatrix, QcReport), ExprError> {
    if !(0.0..=1.0).contains(&t.max_mito_fraction) {
        return Err(ExprError::Argument(format!(
            "max_mito_fraction {} outside [0, 1]",
            t.max_mito_fraction
        )));
    }
    let is_mito: Vec<bool> = m
        .vocabulary()
        .genes()
        .iter()
        .map(|g| t.mito_prefixes.iter().any(|p| !p.is_empty() && g.starts_with(p.as_str())))
        .collect();

    let mut report = QcReport {
        cells_removed_low_genes: 0,
        cells_removed_aberrant: 0,
        genes_removed: 0,
        thresholds: t.clone(),
        kept_cells: Vec::new(),
        kept_genes: Vec::new(),
    };
    let mut cells: Vec<usize> = (0..m.n_cells()).collect();
    let mut gene_alive = vec![true; m.n_genes()];

    loop {
        let mut changed = false;
        let mut next = Vec::with_capacity(cells.len());
        for &c in &cells {
            let (idx, val) = m.row(c);
            let (mut expressed, mut total, mut mito) = (0usize, 0u64, 0u64);
            for (&g, &v) in idx.iter().zip(val) {
                if gene_alive[g as usize] {
                    expressed += 1;
                    total += v as u64;
                    if is_mito[g as usize] {
                        mito += v as u64;
                    }
                }
            }
            let mito_frac = if total > 0 { mito as f64 / total as f64 } else { 0.0 };
            if expressed < t.min_genes_per_cell {
                report.cells_removed_low_genes += 1;
                changed = true;
            } else if mito_frac > t.max_mito_fraction || t.max_total_counts.is_some_and(|mx| total > mx) {
                report.cells_removed_aberrant += 1;
                changed = true;
            } else {
                next.push(c);
            }
        }
        cells = next;

        let mut n_cells = vec![0usize; m.n_genes()];
        for &c in &cells {
            for &g in m.row(c).0 {
                n_cells[g as usize] += 1;
            }
        }
        for (g, alive) in gene_alive.iter_mut().enumerate() {
            if *alive && n_cells[g] < t.min_cells_per_gene {
                *alive = false;
                report.genes_removed += 1;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    report.kept_cells = cells;
    report.kept_genes = (0..m.n_genes()).filter(|&g| gene_alive[g]).collect();
    if report.kept_cells.is_empty() {
        return Err(ExprError::EmptyResult {
            report: Box::new(report),
        });
    }
    let out = m.select_cells(&report.kept_cells).select_genes(&report.kept_genes);
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::expr::GeneVocabulary;

    fn vocab(names: &[&str]) -> Arc<GeneVocabulary> {
        Arc::new(GeneVocabulary::new(names.iter().map(|s| s.to_string()).collect()).unwrap())
    }

    fn loose() -> QcThresholds {
        QcThresholds {
            min_genes_per_cell: 1,
            min_cells_per_gene: 1,
            ..QcThresholds::default()
        }
    }

    #[test]
    fn clean_matrix_unchanged() {
        let m = ExpressionMatrix::from_dense(vocab(&["A", "B"]), &[vec![1, 2], vec![3, 1]]).unwrap();
        let (out, rep) = qc_filter(&m, &loose()).unwrap();
        assert_eq!(out, m);
        assert_eq!(
            (rep.cells_removed_low_genes, rep.cells_removed_aberrant, rep.genes_removed),
            (0, 0, 0)
        );
    }

    #[test]
    fn mito_and_total_count_rules() {
        let m = ExpressionMatrix::from_dense(
            vocab(&["MT-CO1", "A", "B"]),
            &[vec![5, 5, 5], vec![1, 9, 10], vec![0, 50, 60]],
        )
        .unwrap();
        let t = QcThresholds {
            max_total_counts: Some(100),
            ..loose()
        };
        let (out, rep) = qc_filter(&m, &t).unwrap();
        assert_eq!(rep.kept_cells, vec![1]);
        assert_eq!(rep.cells_removed_aberrant, 2);
        assert_eq!(out.n_cells(), 1);
    }

    #[test]
    fn everything_removed_is_an_error_with_report() {
        let m = ExpressionMatrix::from_dense(vocab(&["A"]), &[vec![1]]).unwrap();
        match qc_filter(&m, &QcThresholds::default()) {
            Err(ExprError::EmptyResult { report }) => assert_eq!(report.cells_removed_low_genes, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nearest_rank_percentile() {
        let rows: Vec<Vec<u32>> = (1..=10).map(|v| vec![v]).collect();
        let m = ExpressionMatrix::from_dense(vocab(&["A"]), &rows).unwrap();
        assert_eq!(total_count_percentile(&m, 99.5).unwrap(), 10);
        assert_eq!(total_count_percentile(&m, 50.0).unwrap(), 5);
        assert!(total_count_percentile(&m, 0.0).is_err());
    }
}
