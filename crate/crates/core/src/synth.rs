//! Synthetic count data drawn from known ZINB parameters, for fixtures,
//! examples and end-to-end checks.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cvae::sample_zinb_chain;
use crate::expr::{CellAnnotations, Dataset, ExprError, ExpressionMatrix, GeneVocabulary, Split};
use crate::numkit::RngStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_genes: usize,
    /// Relative class frequencies; class `k` is labelled `type{k}`.
    pub class_weights: Vec<f64>,
    /// Marker genes per class, disjoint across classes.
    pub markers_per_class: usize,
    /// Multiplier applied to a class's marker proportions.
    pub marker_fold: f64,
    /// `ln l ~ N(library_log_mean, library_log_sd^2)`.
    pub library_log_mean: f64,
    pub library_log_sd: f64,
    /// Per-gene inverse dispersion is drawn uniformly from this range.
    pub theta_range: (f64, f64),
    /// Per-gene zero-inflation is drawn uniformly from this range.
    pub pi_range: (f64, f64),
    pub species: String,
    pub tissue: String,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_genes: 100,
            class_weights: vec![1.0, 1.0, 1.0],
            markers_per_class: 8,
            marker_fold: 8.0,
            library_log_mean: 7.5,
            library_log_sd: 0.3,
            theta_range: (2.0, 8.0),
            pi_range: (0.02, 0.2),
            species: "human".into(),
            tissue: "synthetic".into(),
        }
    }
}

/// Ground-truth parameters behind a synthetic dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    pub labels: Vec<String>,
    /// Per-class gene proportions, each summing to 1.
    pub rho: Vec<Vec<f64>>,
    pub theta: Vec<f64>,
    pub pi: Vec<f64>,
    /// Marker gene indices per class.
    pub markers: Vec<Vec<usize>>,
}

impl SyntheticSpec {
    /// Draws the ground-truth parameters from `seed`.
    pub fn truth(&self, seed: u64) -> Result<SyntheticTruth, ExprError> {
        let k = self.class_weights.len();
        if k == 0 || self.n_genes < k * self.markers_per_class || self.class_weights.iter().any(|w| !(*w > 0.0)) {
            return Err(ExprError::Argument(
                "need positive class weights and enough genes for disjoint markers".into(),
            ));
        }
        let mut rng = RngStream::substream(seed, 0);
        let base: Vec<f64> = (0..self.n_genes).map(|_| (rng.normal() * 0.8).exp()).collect();
        let uniform = |rng: &mut RngStream, (lo, hi): (f64, f64)| lo + (hi - lo) * rng.uniform();
        let theta = (0..self.n_genes).map(|_| uniform(&mut rng, self.theta_range)).collect();
        let pi = (0..self.n_genes).map(|_| uniform(&mut rng, self.pi_range)).collect();
        let mut rho = Vec::with_capacity(k);
        let mut markers = Vec::with_capacity(k);
        for c in 0..k {
            let m: Vec<usize> = (c * self.markers_per_class..(c + 1) * self.markers_per_class).collect();
            let mut w = base.clone();
            for &g in &m {
                w[g] *= self.marker_fold;
            }
            let s: f64 = w.iter().sum();
            rho.push(w.into_iter().map(|v| v / s).collect());
            markers.push(m);
        }
        Ok(SyntheticTruth { labels: (0..k).map(|c| format!("type{c}")).collect(), rho, theta, pi, markers })
    }

    /// Samples `n_cells` cells from the ZINB chain; class `k` receives a
    /// share of cells proportional to its weight (largest remainders go to
    /// the lowest class indices). All cells are tagged `train`.
    pub fn sample(&self, truth: &SyntheticTruth, n_cells: usize, seed: u64) -> Result<Dataset, ExprError> {
        let k = truth.labels.len();
        let total_w: f64 = self.class_weights.iter().sum();
        let mut counts: Vec<usize> =
            self.class_weights.iter().map(|w| (w / total_w * n_cells as f64).floor() as usize).collect();
        let mut c = 0;
        while counts.iter().sum::<usize>() < n_cells {
            counts[c % k] += 1;
            c += 1;
        }
        let mut class_of = Vec::with_capacity(n_cells);
        for (cls, &n) in counts.iter().enumerate() {
            class_of.extend(std::iter::repeat_n(cls, n));
        }
        let mut rows = Vec::with_capacity(n_cells);
        for (i, &cls) in class_of.iter().enumerate() {
            let mut rng = RngStream::substream(seed, i as u64 + 1);
            loop {
                let library = (self.library_log_mean + self.library_log_sd * rng.normal()).exp();
                let row: Vec<u32> = (0..self.n_genes)
                    .map(|g| sample_zinb_chain(&mut rng, library, truth.rho[cls][g], truth.theta[g], truth.pi[g]))
                    .collect();
                if row.iter().any(|&v| v > 0) {
                    rows.push(row);
                    break;
                }
            }
        }
        let vocab = Arc::new(GeneVocabulary::new((0..self.n_genes).map(|g| format!("GENE{g:04}")).collect())?);
        let ids: Vec<String> = (0..n_cells).map(|i| format!("cell{i:05}")).collect();
        let matrix = ExpressionMatrix::from_dense(vocab, &rows)?.with_cell_ids(ids.clone())?;
        let mut ann = CellAnnotations::from_labels(class_of.iter().map(|&c| truth.labels[c].clone()).collect());
        ann.cell_ids = ids;
        ann.species = vec![self.species.clone(); n_cells];
        ann.tissue = vec![self.tissue.clone(); n_cells];
        Dataset::new(matrix, ann, vec![Split::Train; n_cells])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_sizes_follow_weights() {
        let spec = SyntheticSpec { class_weights: vec![0.6, 0.3, 0.1], ..Default::default() };
        let truth = spec.truth(1).unwrap();
        let d = spec.sample(&truth, 100, 2).unwrap();
        let n0 = d.annotations.labels.iter().filter(|l| *l == "type0").count();
        let n2 = d.annotations.labels.iter().filter(|l| *l == "type2").count();
        assert_eq!((n0, n2), (60, 10));
        for r in &truth.rho {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sampling_is_seeded() {
        let spec = SyntheticSpec::default();
        let truth = spec.truth(3).unwrap();
        assert_eq!(spec.sample(&truth, 20, 4).unwrap(), spec.sample(&truth, 20, 4).unwrap());
        assert_ne!(spec.sample(&truth, 20, 4).unwrap(), spec.sample(&truth, 20, 5).unwrap());
    }
}
