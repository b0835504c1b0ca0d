//! Trains a cell-type classifier and explains it with gradient saliency.
//! The top salient genes of each class are compared with the marker genes
//! planted in the synthetic ground truth.

use cellkit::classify::{dataset_saliency, train_classifier, ClassifierConfig, GeneSet};
use cellkit::metrics::evaluate_predictions;
use cellkit::synth::SyntheticSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SyntheticSpec { n_genes: 80, markers_per_class: 5, ..Default::default() };
    let truth = spec.truth(3)?;
    let d = spec.sample(&truth, 400, 4)?;
    let test_mask: Vec<usize> = (0..d.n_cells()).filter(|c| c % 5 == 0).collect();
    let train_mask: Vec<usize> = (0..d.n_cells()).filter(|c| c % 5 != 0).collect();
    let (train, test) = (d.select(&train_mask), d.select(&test_mask));

    let cfg = ClassifierConfig { epochs: 40, hidden: vec![32], seed: 1, ..Default::default() };
    let out = train_classifier(&train, None, &cfg)?;
    let preds = out.model.predict_matrix(&test.matrix)?;
    let answered: Vec<Option<String>> = preds.into_iter().map(|p| Some(p.label)).collect();
    let report = evaluate_predictions(&answered, &test.annotations.labels)?;
    println!("held-out accuracy {:.3}", report.get("accuracy.true").unwrap());

    let sal = dataset_saliency(&out.model, &test, &GeneSet::all(d.matrix.n_genes()), 10)?;
    for (k, class) in sal.classes.iter().enumerate() {
        let planted = &truth.markers[truth.labels.iter().position(|l| l == class).unwrap()];
        let hits = sal.top[k].iter().filter(|(g, _)| planted.contains(g)).count();
        let names: Vec<&str> = sal.top[k].iter().take(5).map(|(g, _)| d.matrix.vocabulary().name(*g)).collect();
        println!("{class}: {hits}/{} planted markers in top 10; leading {}", planted.len(), names.join(" "));
    }
    Ok(())
}
