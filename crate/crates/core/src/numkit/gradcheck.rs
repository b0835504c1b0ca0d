//! Central finite-difference gradient checking.

use super::{NumError, ParamStore, Tensor};

/// Relative error with an absolute floor of `1e-5` on the denominator,
/// so that two near-zero gradients compare absolutely. Central differences
/// at `h = 1e-5` of an O(10) loss carry about `1e-10` of rounding noise.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-5);
    (analytic - numeric).abs() / denom
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
}

impl GradCheckReport {
    fn record(&mut self, name: &str, i: usize, analytic: f64, numeric: f64) {
        self.checked += 1;
        let e = relative_error(analytic, numeric);
        if e > self.max_rel_error || self.worst.is_none() {
            self.max_rel_error = self.max_rel_error.max(e);
            if e >= self.max_rel_error {
                self.worst = Some((name.to_string(), i));
            }
        }
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error <= tol
    }
}

/// Compares the gradients stored in `params` with central differences of
/// `loss` at step `h`, for every parameter entry.
pub fn check_params<F>(params: &ParamStore, h: f64, mut loss: F) -> Result<GradCheckReport, NumError>
where
    F: FnMut(&ParamStore) -> Result<f64, NumError>,
{
    let mut report = GradCheckReport::default();
    let mut probe = params.clone();
    let names: Vec<String> = params.names().map(str::to_string).collect();
    for name in &names {
        let analytic = params.grad(name).unwrap().clone();
        for i in 0..analytic.len() {
            let orig = params.get(name).unwrap().data()[i];
            probe.get_mut(name).unwrap().data_mut()[i] = orig + h;
            let up = loss(&probe)?;
            probe.get_mut(name).unwrap().data_mut()[i] = orig - h;
            let down = loss(&probe)?;
            probe.get_mut(name).unwrap().data_mut()[i] = orig;
            report.record(name, i, analytic.data()[i], (up - down) / (2.0 * h));
        }
    }
    Ok(report)
}

/// Central differences of `f` with respect to every entry of `x`.
pub fn numeric_gradient<F>(x: &Tensor, h: f64, mut f: F) -> Result<Tensor, NumError>
where
    F: FnMut(&Tensor) -> Result<f64, NumError>,
{
    let mut probe = x.clone();
    let mut out = Tensor::zeros(x.shape());
    for i in 0..x.len() {
        let orig = x.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe)?;
        probe.data_mut()[i] = orig - h;
        let down = f(&probe)?;
        probe.data_mut()[i] = orig;
        out.data_mut()[i] = (up - down) / (2.0 * h);
    }
    Ok(out)
}
