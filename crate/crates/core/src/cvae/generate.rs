use std::sync::Arc;

use super::zinb::sample_zinb_chain;
use super::{Condition, CvaeError, CvaeModel, LatentSample};
use crate::expr::{ExpressionMatrix, GeneVocabulary};
use crate::numkit::RngStream;

/// One cell per condition, in order. Cell `i` draws from the independent
/// stream `(seed, i)`: `z_s ~ N(0, I)`, `ln l ~ N(prior)`, then the ZINB
/// chain per gene.
pub fn generate(model: &CvaeModel, conditions: &[Condition], seed: u64) -> Result<ExpressionMatrix, CvaeError> {
    for c in conditions {
        model.arch.condition.categories.indices(c)?;
    }
    let sd = model.prior.var.sqrt();
    let mut rows = Vec::with_capacity(conditions.len());
    for (i, cond) in conditions.iter().enumerate() {
        let mut rng = RngStream::substream(seed, i as u64);
        let z = rng.normals(model.arch.d_z);
        let library = (model.prior.mean + sd * rng.normal()).exp();
        let d = model.decode(&LatentSample { z, library }, cond)?;
        rows.push(sample_row(&mut rng, d.library, &d.rho, &d.zinb.theta, &d.zinb.pi));
    }
    let ids = (0..conditions.len()).map(|i| format!("gen{i}")).collect();
    Ok(ExpressionMatrix::from_dense(model.genes.clone(), &rows)?.with_cell_ids(ids)?)
}

fn sample_row(rng: &mut RngStream, library: f64, rho: &[f64], theta: &[f64], tau: &[f64]) -> Vec<u32> {
    (0..rho.len())
        .map(|g| sample_zinb_chain(rng, library, rho[g], theta[g], tau[g]))
        .collect()
}

/// Samples `n` cells from fixed decoder outputs, one stream per cell.
pub fn generate_from_params(
    genes: Arc<GeneVocabulary>,
    library: f64,
    rho: &[f64],
    theta: &[f64],
    tau: &[f64],
    n: usize,
    seed: u64,
) -> Result<ExpressionMatrix, CvaeError> {
    let g = genes.len();
    if rho.len() != g || theta.len() != g || tau.len() != g {
        return Err(CvaeError::Shape(format!("decoder outputs do not match {g} genes")));
    }
    let rows: Vec<Vec<u32>> = (0..n)
        .map(|i| sample_row(&mut RngStream::substream(seed, i as u64), library, rho, theta, tau))
        .collect();
    Ok(ExpressionMatrix::from_dense(genes, &rows)?)
}
