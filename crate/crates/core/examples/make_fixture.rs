//! Writes the bundled 200-cell synthetic fixture: `counts.csv` (cells as
//! rows) and `annotations.csv`, three classes over 100 genes.
//!
//! ```text
//! cargo run --example make_fixture -- tests/fixtures/synthetic200
//! ```

use std::fs;
use std::path::PathBuf;

use cellkit::expr::{write_annotations, write_dense_csv};
use cellkit::synth::SyntheticSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "tests/fixtures/synthetic200".into()));
    fs::create_dir_all(&dir)?;
    let spec = SyntheticSpec::default();
    let truth = spec.truth(7)?;
    let d = spec.sample(&truth, 200, 8)?;
    write_dense_csv(&d.matrix, fs::File::create(dir.join("counts.csv"))?)?;
    write_annotations(&d.annotations, None, fs::File::create(dir.join("annotations.csv"))?)?;
    println!("wrote {} cells x {} genes to {}", d.n_cells(), d.matrix.n_genes(), dir.display());
    Ok(())
}
