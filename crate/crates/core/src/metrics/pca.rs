use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::MetricError;

/// Principal axes of a normalized expression matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    /// `k` orthonormal rows of length `n_features`.
    pub components: Vec<Vec<f64>>,
    pub means: Vec<f64>,
    /// Sample-covariance eigenvalue of each component, non-increasing.
    pub explained_variance: Vec<f64>,
    /// Trace of the sample covariance.
    pub total_variance: f64,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        self.explained_variance
            .iter()
            .map(|v| if self.total_variance > 0.0 { v / self.total_variance } else { 0.0 })
            .collect()
    }
}

/// Fits `k` components from the eigendecomposition of the sample
/// covariance (divisor `n - 1`). Each component is signed so that its
/// largest-magnitude loading (first on ties) is positive.
pub fn pca_fit(x: ArrayView2<f64>, k: usize) -> Result<PcaModel, MetricError> {
    let (n, p) = x.dim();
    if k == 0 || k >= n {
        return Err(MetricError::Argument(format!("need 0 < k < n_cells, got k = {k} with {n} cells")));
    }
    if k > p {
        return Err(MetricError::Argument(format!("k = {k} exceeds {p} features")));
    }
    let means: Vec<f64> = (0..p).map(|j| x.column(j).sum() / n as f64).collect();
    let centered = DMatrix::from_fn(n, p, |i, j| x[[i, j]] - means[j]);
    let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
    let total_variance = cov.trace();
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut components = Vec::with_capacity(k);
    let mut explained_variance = Vec::with_capacity(k);
    for &c in order.iter().take(k) {
        let mut v: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
        let lead = v
            .iter()
            .enumerate()
            .fold(0, |best, (i, x)| if x.abs() > v[best].abs() { i } else { best });
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
        explained_variance.push(eig.eigenvalues[c].max(0.0));
    }
    Ok(PcaModel { components, means, explained_variance, total_variance })
}

/// `(x - means) * components^T`.
pub fn pca_transform(m: &PcaModel, x: ArrayView2<f64>) -> Result<Array2<f64>, MetricError> {
    let (n, p) = x.dim();
    if p != m.means.len() {
        return Err(MetricError::Shape(format!("{p} columns, model fitted on {}", m.means.len())));
    }
    let k = m.n_components();
    let mut out = Array2::zeros((n, k));
    for i in 0..n {
        for (c, comp) in m.components.iter().enumerate() {
            out[[i, c]] = (0..p).map(|j| (x[[i, j]] - m.means[j]) * comp[j]).sum();
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::*;

    #[test]
    fn points_on_a_line_have_one_component() {
        let x = array![[0.0, 0.0, 0.0], [1.0, 2.0, -1.0], [2.0, 4.0, -2.0], [-1.5, -3.0, 1.5]];
        let m = pca_fit(x.view(), 2).unwrap();
        assert!((m.explained_variance_ratio()[0] - 1.0).abs() < 1e-9);
        let norm = 6f64.sqrt();
        for (a, b) in m.components[0].iter().zip([1.0 / norm, 2.0 / norm, -1.0 / norm]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_maps_to_origin() {
        let x = array![[1.0, 5.0], [2.0, 3.0], [4.0, 4.0], [0.5, 1.0]];
        let m = pca_fit(x.view(), 2).unwrap();
        let mean = Array2::from_shape_vec((1, 2), m.means.clone()).unwrap();
        let t = pca_transform(&m, mean.view()).unwrap();
        assert!(t.iter().all(|v| v.abs() < 1e-15));
        assert!(pca_fit(x.view(), 4).is_err());
        assert!(pca_transform(&m, x.t()).is_err());
    }
}
