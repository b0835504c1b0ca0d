use std::collections::BTreeMap;

use super::{NumError, ParamStore};

/// Adam with bias-corrected moments.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self::with_betas(lr, (0.9, 0.999), 1e-8)
    }

    pub fn with_betas(lr: f64, betas: (f64, f64), eps: f64) -> Self {
        Adam {
            lr,
            beta1: betas.0,
            beta2: betas.1,
            eps,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update from the gradients currently held in `params`.
    /// Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, params: &mut ParamStore) -> Result<(), NumError> {
        for name in params.names() {
            if !params.grad(name).is_some_and(|g| g.is_finite()) {
                return Err(NumError::NonFiniteGradient {
                    name: name.to_string(),
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (name, value, grad) in params.iter_mut() {
            let (m, v) = self
                .moments
                .entry(name.to_string())
                .or_insert_with(|| (vec![0.0; grad.len()], vec![0.0; grad.len()]));
            for (((p, &g), mi), vi) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{Tape, Tensor};

    fn store_with_grad(value: f64, grad: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.insert("p", Tensor::vector(vec![value]));
        // loss = grad * p
        let mut tape = Tape::new();
        let p = tape.param(&s, "p").unwrap();
        let scaled = tape.scale(p, grad).unwrap();
        let loss = tape.sum(scaled).unwrap();
        tape.backward_into(loss, &mut s).unwrap();
        s
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut s = store_with_grad(1.5, 0.0);
        let mut adam = Adam::new(0.1);
        for _ in 0..5 {
            adam.step(&mut s).unwrap();
        }
        assert_eq!(s.get("p").unwrap().data(), &[1.5]);
    }

    #[test]
    fn first_step_matches_hand_recurrence() {
        // m1 = 0.1, v1 = 0.001; m_hat = 1, v_hat = 1; update = 0.1 / (1 + 1e-8)
        let mut s = store_with_grad(0.0, 1.0);
        let mut adam = Adam::new(0.1);
        adam.step(&mut s).unwrap();
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((s.get("p").unwrap().data()[0] - expected).abs() < 1e-15);
        assert_eq!(adam.steps_taken(), 1);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut s = store_with_grad(0.0, f64::NAN);
        let err = Adam::new(0.1).step(&mut s).unwrap_err();
        assert!(matches!(err, NumError::NonFiniteGradient { ref name } if name == "p"));
        assert_eq!(s.get("p").unwrap().data(), &[0.0]);
    }
}
