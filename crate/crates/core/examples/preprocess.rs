//! Quality control, highly variable gene selection, normalization and the
//! 8:1:1 split on a synthetic matrix with a few planted bad cells.

use cellkit::expr::{
    normalize_log1p, qc_filter, select_hvg, split_dataset, QcThresholds, Split, DEFAULT_TARGET_SUM,
};
use cellkit::synth::SyntheticSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SyntheticSpec { n_genes: 400, ..Default::default() };
    let truth = spec.truth(1)?;
    let d = spec.sample(&truth, 300, 2)?;

    // Shallow cells: keep only the first 150 genes of every tenth cell.
    let mut rows: Vec<Vec<u32>> = (0..d.n_cells()).map(|c| d.matrix.dense_row(c)).collect();
    for row in rows.iter_mut().step_by(10) {
        row[150..].fill(0);
    }
    let m = cellkit::expr::ExpressionMatrix::from_dense(d.matrix.vocabulary().clone(), &rows)?;

    let (kept, report) = qc_filter(&m, &QcThresholds::default())?;
    println!(
        "QC: {} cells below 200 genes, {} aberrant, {} genes in fewer than 8 cells",
        report.cells_removed_low_genes, report.cells_removed_aberrant, report.genes_removed
    );

    let hvg = select_hvg(&kept, 100)?;
    let selected = kept.select_genes(&hvg);
    let x = normalize_log1p(&selected, DEFAULT_TARGET_SUM)?;
    println!("{} x {} log1p matrix over the top 100 dispersed genes", x.nrows(), x.ncols());

    let labels = report.kept_cells.iter().map(|&c| d.annotations.labels[c].clone()).collect();
    let ann = cellkit::expr::CellAnnotations::from_labels(labels);
    let ds = split_dataset(selected, ann, (0.8, 0.1, 0.1), 3)?;
    for s in [Split::Train, Split::Valid, Split::Test] {
        println!("{:>5}: {} cells", s.as_str(), ds.indices_of(s).len());
    }
    Ok(())
}
