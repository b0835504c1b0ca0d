use super::{normalize_log1p, ExprError, ExpressionMatrix, DEFAULT_TARGET_SUM};

/// Number of equal-frequency mean bins used to normalize dispersions.
pub const HVG_BINS: usize = 20;

/// Per-gene normalized dispersion.
///
/// On log1p-normalized expression, each gene's dispersion is its sample
/// variance over its mean. Genes with positive mean are ranked by mean
/// (ties by index) and cut into [`HVG_BINS`] equal-frequency bins; the
/// dispersion is z-scored within its bin (sample standard deviation).
/// Bins with fewer than two genes or zero spread score 0. Genes with zero
/// mean score `-inf`.
pub fn hvg_scores(m: &ExpressionMatrix) -> Result<Vec<f64>, ExprError> {
    let x = normalize_log1p(m, DEFAULT_TARGET_SUM)?;
    let n = m.n_cells() as f64;
    let g = m.n_genes();
    let mut means = vec![0.0; g];
    let mut disp = vec![f64::NAN; g];
    for j in 0..g {
        let col = x.column(j);
        let mean = col.sum() / n;
        means[j] = mean;
        if mean > 0.0 {
            let var = if m.n_cells() > 1 {
                col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            disp[j] = var / mean;
        }
    }

    let mut order: Vec<usize> = (0..g).filter(|&j| means[j] > 0.0).collect();
    order.sort_by(|&a, &b| means[a].total_cmp(&means[b]).then(a.cmp(&b)));
    let mut scores = vec![f64::NEG_INFINITY; g];
    let n_pos = order.len();
    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); HVG_BINS];
    for (rank, &j) in order.iter().enumerate() {
        bins[rank * HVG_BINS / n_pos.max(1)].push(j);
    }
    for bin in bins.iter().filter(|b| !b.is_empty()) {
        let k = bin.len() as f64;
        let mu = bin.iter().map(|&j| disp[j]).sum::<f64>() / k;
        let sd = if bin.len() > 1 {
            (bin.iter().map(|&j| (disp[j] - mu).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
        } else {
            0.0
        };
        for &j in bin {
            scores[j] = if sd > 0.0 { (disp[j] - mu) / sd } else { 0.0 };
        }
    }
    Ok(scores)
}

/// The `n_top` genes with the highest normalized dispersion, best first;
/// ties go to the lower index.
pub fn select_hvg(m: &ExpressionMatrix, n_top: usize) -> Result<Vec<usize>, ExprError> {
    if n_top > m.n_genes() {
        return Err(ExprError::Argument(format!(
            "requested {n_top} variable genes from {} genes",
            m.n_genes()
        )));
    }
    let scores = hvg_scores(m)?;
    let mut order: Vec<usize> = (0..m.n_genes()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(n_top);
    Ok(order)
}
