//! One-vs-rest Welch t-test marker ranking on synthetic cell types.

use cellkit::classify::rank_all_markers;
use cellkit::expr::DEFAULT_TARGET_SUM;
use cellkit::synth::SyntheticSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SyntheticSpec { n_genes: 50, markers_per_class: 4, ..Default::default() };
    let truth = spec.truth(9)?;
    let d = spec.sample(&truth, 240, 10)?;
    for table in rank_all_markers(&d, 3, DEFAULT_TARGET_SUM)? {
        let k = truth.labels.iter().position(|l| *l == table.class).unwrap();
        println!("{} (planted {:?})", table.class, truth.markers[k]);
        for row in &table.rows {
            println!("  {:<6} t {:>7.2}  df {:>6.1}  p {:.2e}", row.gene, row.t, row.df, row.p);
        }
    }
    Ok(())
}
