//! ZINB likelihood and KL closed forms against Monte Carlo.

mod common;

use cellkit::cvae::{kl_gaussian, kl_lognormal, zinb_log_pmf};
use proptest::prelude::*;

#[test]
fn zinb_pmf_matches_chain_frequencies_on_a_coarse_grid() {
    for (i, (mu, theta, pi)) in common::zinb_grid().into_iter().enumerate().step_by(4) {
        let z = common::zinb_chain_deviation(mu, theta, pi, 200_000, 40 + i as u64).unwrap();
        assert!(z < 4.0, "mu {mu} theta {theta} pi {pi}: {z:.2} standard errors");
    }
}

#[test]
fn closed_form_kl_matches_monte_carlo() {
    for case in 0..20 {
        let rel = common::kl_monte_carlo(case, 100_000).unwrap();
        assert!(rel < 0.03, "case {case}: relative error {rel:.4}");
    }
}

#[test]
fn zinb_pmf_sums_to_one() {
    for (mu, theta, pi) in common::zinb_grid() {
        let total: f64 = (0..5000).map(|y| zinb_log_pmf(y, mu, theta, pi).exp()).sum();
        assert!((total - 1.0).abs() < 1e-9, "mu {mu} theta {theta} pi {pi}: {total}");
    }
}

proptest! {
    #[test]
    fn kl_is_non_negative_and_zero_on_identical_arguments(
        m in prop::collection::vec(-5.0f64..5.0, 1..6),
        v in prop::collection::vec(0.01f64..10.0, 6),
        shift in -3.0f64..3.0,
        scale in 0.1f64..10.0,
    ) {
        let d = m.len();
        let v = &v[..d];
        prop_assert!(kl_gaussian(&m, v, &m, v).unwrap().abs() <= 1e-12);
        prop_assert!(kl_lognormal(m[0], v[0], m[0], v[0]).unwrap().abs() <= 1e-12);
        let m2: Vec<f64> = m.iter().map(|x| x + shift).collect();
        let v2: Vec<f64> = v.iter().map(|x| x * scale).collect();
        prop_assert!(kl_gaussian(&m, v, &m2, &v2).unwrap() >= 0.0);
    }
}
