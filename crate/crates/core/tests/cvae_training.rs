use std::time::Instant;

use cellkit::cvae::{train_cvae, CvaeConfig, CvaeModel};
use cellkit::synth::SyntheticSpec;

fn small_cfg(epochs: usize) -> CvaeConfig {
    CvaeConfig { epochs, d_z: 8, d_c: 8, hidden: 32, embed_dim: 4, batch: 32, seed: 3, ..Default::default() }
}

#[test]
fn one_epoch_smoke_run_is_loadable() {
    let spec = SyntheticSpec { n_genes: 20, markers_per_class: 3, ..Default::default() };
    let truth = spec.truth(1).unwrap();
    let d = spec.sample(&truth, 10, 2).unwrap();
    let out = train_cvae(&d, None, &small_cfg(1)).unwrap();
    assert_eq!(out.history.len(), 1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cvae.cfp");
    out.model.save(&path).unwrap();
    assert_eq!(CvaeModel::load(&path).unwrap(), out.model);
}

#[test]
fn training_lowers_the_loss() {
    let spec = SyntheticSpec { n_genes: 50, ..Default::default() };
    let truth = spec.truth(5).unwrap();
    let d = spec.sample(&truth, 200, 6).unwrap();
    let t = Instant::now();
    let out = train_cvae(&d, None, &small_cfg(50)).unwrap();
    eprintln!("{:?} {:?}", t.elapsed(), out.history.iter().step_by(10).collect::<Vec<_>>());
    assert!(out.history.last().unwrap() < &out.history[0]);
}

#[test]
fn training_is_deterministic() {
    let spec = SyntheticSpec { n_genes: 20, markers_per_class: 3, ..Default::default() };
    let truth = spec.truth(1).unwrap();
    let d = spec.sample(&truth, 40, 2).unwrap();
    let a = train_cvae(&d, None, &small_cfg(3)).unwrap();
    let b = train_cvae(&d, None, &small_cfg(3)).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.history, b.history);
}
