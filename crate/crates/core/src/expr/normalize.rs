use ndarray::Array2;

use super::{ExprError, ExpressionMatrix};

/// Default per-cell target sum before `log1p`.
pub const DEFAULT_TARGET_SUM: f64 = 10_000.0;

/// Scales every cell to `target_sum` total counts, then applies `ln(1 + x)`.
pub fn normalize_log1p(m: &ExpressionMatrix, target_sum: f64) -> Result<Array2<f64>, ExprError> {
    if !(target_sum > 0.0 && target_sum.is_finite()) {
        return Err(ExprError::Argument(format!("target sum {target_sum} must be positive")));
    }
    let mut out = Array2::zeros((m.n_cells(), m.n_genes()));
    for c in 0..m.n_cells() {
        let total = m.total(c);
        if total == 0 {
            return Err(ExprError::ZeroTotal { cell: c });
        }
        let scale = target_sum / total as f64;
        let (idx, val) = m.row(c);
        for (&g, &v) in idx.iter().zip(val) {
            out[[c, g as usize]] = (v as f64 * scale).ln_1p();
        }
    }
    Ok(out)
}

/// Like [`normalize_log1p`], but an all-zero cell maps to the zero vector.
pub fn normalize_log1p_lenient(m: &ExpressionMatrix, target_sum: f64) -> Array2<f64> {
    let mut out = Array2::zeros((m.n_cells(), m.n_genes()));
    for c in 0..m.n_cells() {
        let total = m.total(c);
        if total == 0 {
            continue;
        }
        let scale = target_sum / total as f64;
        let (idx, val) = m.row(c);
        for (&g, &v) in idx.iter().zip(val) {
            out[[c, g as usize]] = (v as f64 * scale).ln_1p();
        }
    }
    out
}

/// Normalizes one dense count vector the same way as [`normalize_log1p`].
pub fn normalize_counts_log1p(counts: &[f64], target_sum: f64) -> Option<Vec<f64>> {
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let scale = target_sum / total;
    Some(counts.iter().map(|&v| (v * scale).ln_1p()).collect())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::expr::GeneVocabulary;

    fn vocab(n: usize) -> Arc<GeneVocabulary> {
        Arc::new(GeneVocabulary::new((0..n).map(|i| format!("g{i}")).collect()).unwrap())
    }

    #[test]
    fn direct_arithmetic() {
        let m = ExpressionMatrix::from_dense(vocab(3), &[vec![2, 3, 5]]).unwrap();
        let out = normalize_log1p(&m, 10_000.0).unwrap();
        let expected = [2001f64.ln(), 3001f64.ln(), 5001f64.ln()];
        for (a, b) in out.row(0).iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_scaling() {
        let m = ExpressionMatrix::from_dense(vocab(2), &[vec![0, 10_000]]).unwrap();
        let out = normalize_log1p(&m, 10_000.0).unwrap();
        assert_eq!(out[[0, 1]], 10_000f64.ln_1p());
        assert_eq!(out[[0, 0]], 0.0);
    }

    #[test]
    fn zero_cell_named() {
        let m = ExpressionMatrix::from_dense(vocab(2), &[vec![1, 1], vec![0, 0]]).unwrap();
        assert!(matches!(normalize_log1p(&m, 1e4), Err(ExprError::ZeroTotal { cell: 1 })));
    }
}
