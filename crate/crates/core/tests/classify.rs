//! Classifier gradients and training, saliency soundness and the Welch
//! marker ranking against independent recomputation.

mod common;

use cellkit::classify::{saliency_scores, train_classifier, welch_t, Classifier, ClassifierConfig, GeneSet};
use cellkit::expr::Split;
use cellkit::metrics::evaluate_predictions;
use common::{classes, oracle_welch, separable, vocab};
use proptest::prelude::*;

#[test]
fn parameter_and_input_gradients_match_central_differences() {
    for seed in 0..25 {
        if let Err(e) = common::classifier_gradient_check(seed, 1e-4) {
            panic!("{e}");
        }
    }
}

#[test]
fn separable_classes_are_learned() {
    let d = separable(300, 1);
    let cfg = ClassifierConfig { epochs: 60, seed: 2, hidden: vec![16], ..Default::default() };
    let out = train_classifier(&d.subset(Split::Train), None, &cfg).unwrap();
    let test = d.subset(Split::Test);
    let preds = out.model.predict_matrix(&test.matrix).unwrap();
    let pred: Vec<Option<String>> = preds.into_iter().map(|p| Some(p.label)).collect();
    let r = evaluate_predictions(&pred, &test.annotations.labels).unwrap();
    assert!(r.get("accuracy.true").unwrap() >= 0.95);
    assert!(r.get("f1.macro").unwrap() >= 0.95);
    assert!(out.history.first() > out.history.last());
}

#[test]
fn zero_epochs_returns_the_initial_model() {
    let d = separable(30, 3);
    let cfg = ClassifierConfig { epochs: 0, seed: 4, ..Default::default() };
    let out = train_classifier(&d, None, &cfg).unwrap();
    let fresh = Classifier::new(vocab(12), classes(3), &cfg.hidden, cfg.activation, cfg.target_sum, 4).unwrap();
    assert!(out.history.is_empty());
    for name in fresh.params.names() {
        assert_eq!(fresh.params.get(name), out.model.params.get(name));
    }
}

#[test]
fn training_is_seed_deterministic_and_checkpoints_round_trip() {
    let d = separable(60, 5);
    let cfg = ClassifierConfig { epochs: 5, seed: 9, batch: 16, ..Default::default() };
    let valid = d.subset(Split::Test);
    let a = train_classifier(&d.subset(Split::Train), Some(&valid), &cfg).unwrap();
    let b = train_classifier(&d.subset(Split::Train), Some(&valid), &cfg).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.valid_history, b.valid_history);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("clf.cfp");
    a.model.save(&path).unwrap();
    let back = Classifier::load(&path).unwrap();
    assert_eq!(back.classes, a.model.classes);
    let x = a.model.inputs(&valid.matrix).unwrap();
    assert_eq!(
        back.logits_with(&back.params, &x).unwrap().data(),
        a.model.logits_with(&a.model.params, &x).unwrap().data()
    );
}

#[test]
fn injected_unanswered_cases_cost_exactly_their_share_of_accuracy() {
    let truth: Vec<String> = (0..100).map(|i| format!("c{}", i % 3)).collect();
    let full: Vec<Option<String>> = truth.iter().map(|t| Some(t.clone())).collect();
    let mut holed = full.clone();
    for i in (0..100).step_by(10) {
        holed[i] = None;
    }
    let a = evaluate_predictions(&full, &truth).unwrap();
    let b = evaluate_predictions(&holed, &truth).unwrap();
    assert!((a.get("accuracy.true").unwrap() - b.get("accuracy.true").unwrap() - 0.10).abs() < 1e-12);
    assert_eq!(a.get("f1.macro"), b.get("f1.macro"));
    assert_eq!(a.get("f1.weighted"), b.get("f1.weighted"));
}

#[test]
fn planted_feature_ranks_first_for_every_class() {
    for seed in 0..10 {
        if let Err(e) = common::planted_ranks_first(seed) {
            panic!("{e}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn scores_only_where_the_mask_allows(
        g in prop::collection::vec(-2.0f64..2.0, 8),
        s in prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..5.0], 8),
        members in prop::collection::vec(any::<bool>(), 8),
    ) {
        let idx: Vec<usize> = (0..8).filter(|&i| members[i]).collect();
        let set = GeneSet::from_indices(8, &idx).unwrap();
        let sc = saliency_scores(&g, &s, &set).unwrap();
        for i in 0..8 {
            prop_assert!((0.0..=1.0).contains(&sc[i]));
            if sc[i] > 0.0 {
                prop_assert!(members[i] && g[i] < 0.0 && s[i] > 0.0);
            }
        }
    }

    #[test]
    fn welch_is_antisymmetric_under_swap(
        a in prop::collection::vec(-10.0f64..10.0, 2..20),
        b in prop::collection::vec(-10.0f64..10.0, 2..20),
    ) {
        let (ab, ba) = (welch_t(&a, &b).unwrap(), welch_t(&b, &a).unwrap());
        prop_assert_eq!(ab.t, -ba.t);
        prop_assert_eq!(ab.df, ba.df);
        prop_assert_eq!(ab.p, ba.p);
    }
}

#[test]
fn welch_worked_examples_match_reference_values() {
    // Reference values from an independent statistics package.
    let cases = [
        (vec![1.2, 3.4, 2.2, 5.1, 0.3], vec![2.0, 2.5, 2.1, 2.9], 0.07501095839238367, 4.470483275862778, 0.9434448840398463),
        (
            vec![0.1, 0.4, 0.35, 0.2, 0.9, 1.1, 0.05],
            vec![3.1, 2.7, 3.3, 2.9, 3.0],
            -13.995341630924061,
            9.596472083946766,
            1.0555733223318278e-07,
        ),
    ];
    for (a, b, t, df, p) in cases {
        let r = welch_t(&a, &b).unwrap();
        assert!((r.t - t).abs() < 1e-12 * t.abs().max(1.0));
        assert!((r.df - df).abs() < 1e-9 * df);
        assert!((r.p - p).abs() < 1e-9 * p.max(1e-300), "{} vs {p}", r.p);
        let (ot, odf, _) = oracle_welch(&a, &b);
        assert!((r.t - ot).abs() < 1e-12 && (r.df - odf).abs() < 1e-12);
    }
}

#[test]
fn markers_equal_exhaustive_recomputation() {
    if let Err(e) = common::markers_match_recomputation() {
        panic!("{e}");
    }
}
