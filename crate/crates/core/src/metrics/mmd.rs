use ndarray::Array2;

use super::knn::sq_dist;
use super::MetricError;

/// Precisions `2 / w^2`, `1 / w^2` and `1 / (2 w^2)` of the three summed
/// Gaussian kernels.
pub fn kernel_gammas(omega: f64) -> [f64; 3] {
    let w2 = omega * omega;
    [2.0 / w2, 1.0 / w2, 0.5 / w2]
}

pub fn mixture_kernel(sq_distance: f64, gammas: &[f64; 3]) -> f64 {
    gammas.iter().map(|g| (-g * sq_distance).exp()).sum()
}

fn mean_kernel(a: &Array2<f64>, b: &Array2<f64>, gammas: &[f64; 3]) -> f64 {
    let mut total = 0.0;
    for i in 0..a.nrows() {
        for j in 0..b.nrows() {
            total += mixture_kernel(sq_dist(a.row(i), b.row(j)), gammas);
        }
    }
    total / (a.nrows() * b.nrows()) as f64
}

/// Biased (V-statistic) MMD between equally sized point sets, diagonal
/// terms included. The radicand is clamped at zero.
pub fn mmd(x: &Array2<f64>, y: &Array2<f64>, omega: f64) -> Result<f64, MetricError> {
    if x.nrows() == 0 || x.nrows() != y.nrows() {
        return Err(MetricError::Argument(format!(
            "MMD needs two non-empty sets of equal size, got {} and {}",
            x.nrows(),
            y.nrows()
        )));
    }
    if x.ncols() != y.ncols() {
        return Err(MetricError::Shape(format!("dimensions {} and {}", x.ncols(), y.ncols())));
    }
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(MetricError::DegenerateBandwidth(omega));
    }
    let g = kernel_gammas(omega);
    let v = mean_kernel(x, x, &g) - 2.0 * mean_kernel(x, y, &g) + mean_kernel(y, y, &g);
    Ok(v.max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::*;

    #[test]
    fn gammas_follow_the_power_of_two_schedule() {
        let w: f64 = 1.7;
        let g = kernel_gammas(w);
        for (i, gi) in g.iter().enumerate() {
            let expected = 1.0 / (2f64.powi(i as i32 - 1) * w * w);
            assert!((gi - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn two_singletons() {
        let x = array![[0.0, 0.0]];
        let y = array![[1.0, 2.0]];
        let g = kernel_gammas(2.0);
        let expected = (2.0 * 3.0 - 2.0 * mixture_kernel(5.0, &g)).sqrt();
        assert!((mmd(&x, &y, 2.0).unwrap() - expected).abs() < 1e-15);
        assert_eq!(mmd(&x, &x, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn zero_bandwidth_and_unequal_sizes_rejected() {
        let x = array![[0.0], [1.0]];
        assert!(matches!(mmd(&x, &x, 0.0), Err(MetricError::DegenerateBandwidth(_))));
        assert!(mmd(&x, &array![[0.0]], 1.0).is_err());
    }
}
