use super::CvaeError;

/// KL(N(mu1, diag var1) || N(mu2, diag var2)), clamped at zero against
/// rounding.
pub fn kl_gaussian(mu1: &[f64], var1: &[f64], mu2: &[f64], var2: &[f64]) -> Result<f64, CvaeError> {
    let d = mu1.len();
    if var1.len() != d || mu2.len() != d || var2.len() != d {
        return Err(CvaeError::Shape("KL operands differ in dimension".into()));
    }
    let mut total = 0.0;
    for i in 0..d {
        if !(var1[i] > 0.0 && var2[i] > 0.0) {
            return Err(CvaeError::InvalidArgument(format!(
                "KL needs positive variances, got {} and {} at {i}",
                var1[i], var2[i]
            )));
        }
        // ratio - 1 - ln(ratio) >= 0, written to stay exact at ratio = 1
        let ratio = var1[i] / var2[i];
        let diff = mu2[i] - mu1[i];
        total += (ratio - 1.0 - ratio.ln()) + diff * diff / var2[i];
    }
    Ok((0.5 * total).max(0.0))
}

/// KL between log-normals; equal to the KL of the underlying Gaussians.
pub fn kl_lognormal(mu1: f64, var1: f64, mu2: f64, var2: f64) -> Result<f64, CvaeError> {
    kl_gaussian(&[mu1], &[var1], &[mu2], &[var2])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_is_zero() {
        assert_eq!(kl_gaussian(&[0.3, -1.0], &[2.0, 0.5], &[0.3, -1.0], &[2.0, 0.5]).unwrap(), 0.0);
        assert_eq!(kl_lognormal(1.2, 0.7, 1.2, 0.7).unwrap(), 0.0);
    }

    #[test]
    fn shifted_unit_gaussian() {
        let mu = 1.7;
        let kl = kl_gaussian(&[mu], &[1.0], &[0.0], &[1.0]).unwrap();
        assert!((kl - mu * mu / 2.0).abs() < 1e-15);
        assert!((kl_lognormal(1.0, 1.0, 0.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn non_positive_variance_rejected() {
        assert!(kl_gaussian(&[0.0], &[0.0], &[0.0], &[1.0]).is_err());
        assert!(kl_lognormal(0.0, 1.0, 0.0, -1.0).is_err());
    }
}
