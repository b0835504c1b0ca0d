//! Zero-inflated negative binomial likelihood and sampler.

use rand_distr::{Distribution, Gamma, Poisson};
use statrs::function::gamma::{digamma, ln_gamma};

use super::CvaeError;
use crate::numkit::{log_add_exp, sigmoid, softplus, NumError, RngStream, Tape, Tensor, Var};

/// Per-gene ZINB parameters of one cell.
#[derive(Clone, Debug, PartialEq)]
pub struct ZinbParams {
    /// Expected count `l' * rho_i`.
    pub mu: Vec<f64>,
    /// Inverse dispersion.
    pub theta: Vec<f64>,
    /// Zero-inflation probability.
    pub pi: Vec<f64>,
}

/// `ln NB(y; mu, theta)` written in terms of `ln mu`, with
/// `d = ln mu - ln theta`:
/// `-theta * softplus(d) + y * (d - softplus(d)) + lnG(y + theta) - lnG(theta) - lnG(y + 1)`.
fn nb_log_pmf_parts(y: f64, log_mu: f64, theta: f64) -> (f64, f64, f64) {
    let d = log_mu - theta.ln();
    let sp = softplus(d);
    let zero_part = -theta * sp;
    if y == 0.0 {
        return (zero_part, d, sp);
    }
    let rest = y * (d - sp) + ln_gamma(y + theta) - ln_gamma(theta) - ln_gamma(y + 1.0);
    (zero_part + rest, d, sp)
}

/// Log-pmf of the negative binomial with mean `mu` and inverse dispersion
/// `theta`.
pub fn nb_log_pmf(y: u64, mu: f64, theta: f64) -> f64 {
    nb_log_pmf_parts(y as f64, mu.ln(), theta).0
}

/// Log-pmf of one ZINB count. `pi = 1` and `mu = 0` are handled as limits.
pub fn zinb_log_pmf(y: u64, mu: f64, theta: f64, pi: f64) -> f64 {
    let (nb, _, _) = nb_log_pmf_parts(y as f64, mu.ln(), theta);
    let log_keep = (-pi).ln_1p();
    if y == 0 {
        log_add_exp(pi.ln(), log_keep + nb)
    } else {
        log_keep + nb
    }
}

/// Summed log-likelihood of a count vector.
pub fn zinb_log_prob(p: &ZinbParams, counts: &[f64]) -> Result<f64, CvaeError> {
    if p.mu.len() != counts.len() || p.theta.len() != counts.len() || p.pi.len() != counts.len() {
        return Err(CvaeError::Shape(format!(
            "{} counts for {} genes",
            counts.len(),
            p.mu.len()
        )));
    }
    let mut total = 0.0;
    for (i, &y) in counts.iter().enumerate() {
        if y < 0.0 || y.fract() != 0.0 || !y.is_finite() {
            return Err(CvaeError::InvalidCount { gene: i, value: y });
        }
        total += zinb_log_pmf(y as u64, p.mu[i], p.theta[i], p.pi[i]);
    }
    Ok(total)
}

/// Log-pmf and its partial derivatives with respect to
/// `(ln mu, theta, zero-inflation logit)`.
pub(crate) fn zinb_log_pmf_grad(y: f64, log_mu: f64, theta: f64, logit: f64) -> (f64, f64, f64, f64) {
    let (nb, d, sp) = nb_log_pmf_parts(y, log_mu, theta);
    let r = sigmoid(d);
    if y > 0.0 {
        let value = -softplus(logit) + nb;
        let d_logmu = y - (theta + y) * r;
        let d_theta = -sp + r - y * (1.0 - r) / theta + digamma(y + theta) - digamma(theta);
        (value, d_logmu, d_theta, -sigmoid(logit))
    } else {
        let a = -softplus(-logit);
        let b = -softplus(logit) + nb;
        let value = log_add_exp(a, b);
        let wa = (a - value).exp();
        let wb = (b - value).exp();
        let d_logmu = wb * (-theta * r);
        let d_theta = wb * (-sp + r);
        let d_logit = wa * sigmoid(-logit) - wb * sigmoid(logit);
        (value, d_logmu, d_theta, d_logit)
    }
}

/// Records the summed negative log-likelihood of `counts` (`[n, G]`,
/// row-major) under ZINB(`exp(log_mu)`, `theta`, `sigmoid(logit)`).
/// `log_mu` and `logit` are `[n, G]`, `theta` is `[G]`.
pub(crate) fn zinb_nll(
    tape: &mut Tape,
    log_mu: Var,
    theta: Var,
    logit: Var,
    counts: &[f64],
) -> Result<Var, NumError> {
    let lm = tape.value(log_mu)?.clone();
    let th = tape.value(theta)?.clone();
    let lg = tape.value(logit)?.clone();
    let (n, g) = lm.dims2();
    if lg.shape() != lm.shape() || th.len() != g || counts.len() != n * g {
        return Err(NumError::Shape {
            op: "zinb_nll".into(),
            detail: format!("log_mu {:?}, theta {:?}, logit {:?}, {} counts", lm.shape(), th.shape(), lg.shape(), counts.len()),
        });
    }
    let mut total = 0.0;
    let mut g_lm = vec![0.0; n * g];
    let mut g_th = vec![0.0; g];
    let mut g_lg = vec![0.0; n * g];
    for r in 0..n {
        for j in 0..g {
            let k = r * g + j;
            let (v, dm, dt, dl) = zinb_log_pmf_grad(counts[k], lm.data()[k], th.data()[j], lg.data()[k]);
            total -= v;
            g_lm[k] = -dm;
            g_th[j] -= dt;
            g_lg[k] = -dl;
        }
    }
    tape.fused_scalar(
        total,
        vec![
            (log_mu, Tensor::new(lm.shape().to_vec(), g_lm)?),
            (theta, Tensor::new(th.shape().to_vec(), g_th)?),
            (logit, Tensor::new(lg.shape().to_vec(), g_lg)?),
        ],
    )
}

/// Draws one count from the chain `w ~ Gamma(shape theta, rate theta / rho)`,
/// `v ~ Poisson(library * w)`, `b ~ Bernoulli(tau)`, returning `v * (1 - b)`.
/// The marginal of `v` is NB(mean `library * rho`, inverse dispersion `theta`).
pub fn sample_zinb_chain(rng: &mut RngStream, library: f64, rho: f64, theta: f64, tau: f64) -> u32 {
    let w = match Gamma::new(theta, rho / theta) {
        Ok(gamma) if rho > 0.0 => gamma.sample(rng),
        _ => 0.0,
    };
    let rate = library * w;
    let v = if rate > 0.0 && rate.is_finite() {
        Poisson::new(rate).map_or(0.0, |p| p.sample(rng))
    } else {
        0.0
    };
    let dropped = rng.bernoulli(tau);
    if dropped {
        0
    } else {
        v.min(u32::MAX as f64) as u32
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_zero_inflation_limit() {
        assert_eq!(zinb_log_pmf(0, 3.0, 2.0, 1.0), 0.0);
        assert_eq!(zinb_log_pmf(4, 3.0, 2.0, 1.0), f64::NEG_INFINITY);
    }

    #[test]
    fn no_inflation_collapses_to_nb() {
        for y in 0..10 {
            assert_eq!(zinb_log_pmf(y, 2.5, 0.7, 0.0), nb_log_pmf(y, 2.5, 0.7));
        }
    }

    #[test]
    fn nb_matches_textbook_form() {
        // NB(y; mu, theta) = G(y+theta)/(G(theta) y!) (theta/(theta+mu))^theta (mu/(theta+mu))^y
        let (mu, theta) = (2.0f64, 1.5f64);
        for y in 0..15u64 {
            let yf = y as f64;
            let direct = ln_gamma(yf + theta) - ln_gamma(theta) - ln_gamma(yf + 1.0)
                + theta * (theta / (theta + mu)).ln()
                + yf * (mu / (theta + mu)).ln();
            assert!((nb_log_pmf(y, mu, theta) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn pmf_sums_to_one() {
        let total: f64 = (0..400).map(|y| zinb_log_pmf(y, 5.0, 0.8, 0.25).exp()).sum();
        assert!((total - 1.0).abs() < 1e-9, "{total}");
    }

    #[test]
    fn extreme_parameters_stay_finite() {
        for &mu in &[1e-8, 1.0, 1e8] {
            for &theta in &[1e-8, 1.0, 1e8] {
                for &y in &[0u64, 1, 1000, 1_000_000] {
                    let v = zinb_log_pmf(y, mu, theta, 0.3);
                    assert!(v.is_finite() && v <= 0.0, "mu={mu} theta={theta} y={y}: {v}");
                }
            }
        }
    }

    #[test]
    fn zero_mean_puts_all_mass_at_zero() {
        assert_eq!(zinb_log_pmf(0, 0.0, 2.0, 0.4), 0.0);
        assert_eq!(zinb_log_pmf(1, 0.0, 2.0, 0.4), f64::NEG_INFINITY);
    }

    #[test]
    fn negative_count_rejected() {
        let p = ZinbParams { mu: vec![1.0], theta: vec![1.0], pi: vec![0.1] };
        assert!(matches!(zinb_log_prob(&p, &[-1.0]), Err(CvaeError::InvalidCount { gene: 0, .. })));
    }

    #[test]
    fn local_gradients_match_differences() {
        let h = 1e-6;
        for &y in &[0.0, 1.0, 7.0] {
            let (lm, th, lg) = (0.4, 1.7, -0.3);
            let (_, dm, dt, dl) = zinb_log_pmf_grad(y, lm, th, lg);
            let f = |a: f64, b: f64, c: f64| zinb_log_pmf_grad(y, a, b, c).0;
            let nm = (f(lm + h, th, lg) - f(lm - h, th, lg)) / (2.0 * h);
            let nt = (f(lm, th + h, lg) - f(lm, th - h, lg)) / (2.0 * h);
            let nl = (f(lm, th, lg + h) - f(lm, th, lg - h)) / (2.0 * h);
            assert!((dm - nm).abs() < 1e-7, "y={y}: {dm} vs {nm}");
            assert!((dt - nt).abs() < 1e-7, "y={y}: {dt} vs {nt}");
            assert!((dl - nl).abs() < 1e-7, "y={y}: {dl} vs {nl}");
        }
    }

    #[test]
    fn forced_dropout_gives_zero() {
        let mut rng = RngStream::new(1);
        for _ in 0..100 {
            assert_eq!(sample_zinb_chain(&mut rng, 1000.0, 0.3, 2.0, 1.0), 0);
        }
    }
}
