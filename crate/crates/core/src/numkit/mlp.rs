use serde::{Deserialize, Serialize};

use super::{softplus, NumError, ParamStore, RngStream, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softplus,
    Identity,
}

impl Activation {
    fn apply_tape(self, tape: &mut Tape, x: Var) -> Result<Var, NumError> {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::Softplus => tape.softplus(x),
            Activation::Identity => Ok(x),
        }
    }

    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Softplus => softplus(x),
            Activation::Identity => x,
        }
    }
}

/// Fully connected network layout.
///
/// Layer `l` maps `widths[l]` to `widths[l + 1]`, applies
/// `activations[l]`, then optionally adds the output of an earlier layer
/// (`residual_from[l] = Some(j)`, where `j = 0` is the network input and
/// `j = l` is the output of layer `l - 1`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    widths: Vec<usize>,
    activations: Vec<Activation>,
    residual_from: Vec<Option<usize>>,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, activations: Vec<Activation>) -> Result<Self, NumError> {
        let n = widths.len().saturating_sub(1);
        let spec = MlpSpec {
            widths,
            activations,
            residual_from: vec![None; n],
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `hidden` after every layer but the last, which gets `output`.
    pub fn uniform(widths: Vec<usize>, hidden: Activation, output: Activation) -> Result<Self, NumError> {
        let n = widths.len().saturating_sub(1);
        let mut acts = vec![hidden; n];
        if let Some(last) = acts.last_mut() {
            *last = output;
        }
        Self::new(widths, acts)
    }

    pub fn with_residual(mut self, layer: usize, source: usize) -> Result<Self, NumError> {
        if layer >= self.residual_from.len() {
            return Err(NumError::Spec(format!("no layer {layer}")));
        }
        self.residual_from[layer] = Some(source);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), NumError> {
        if self.widths.len() < 2 {
            return Err(NumError::Spec("need at least two widths".into()));
        }
        if self.widths.contains(&0) {
            return Err(NumError::Spec("zero-width layer".into()));
        }
        if self.activations.len() != self.widths.len() - 1 {
            return Err(NumError::Spec(format!(
                "{} activations for {} layers",
                self.activations.len(),
                self.widths.len() - 1
            )));
        }
        for (l, src) in self.residual_from.iter().enumerate() {
            if let Some(j) = *src {
                if j > l {
                    return Err(NumError::Spec(format!(
                        "layer {l} residual source {j} is not an earlier layer"
                    )));
                }
                if self.widths[j] != self.widths[l + 1] {
                    return Err(NumError::Spec(format!(
                        "layer {l} residual width {} != output width {}",
                        self.widths[j],
                        self.widths[l + 1]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn weight_name(prefix: &str, layer: usize) -> String {
        format!("{prefix}.w{layer}")
    }

    pub fn bias_name(prefix: &str, layer: usize) -> String {
        format!("{prefix}.b{layer}")
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(&self, store: &mut ParamStore, prefix: &str, rng: &mut RngStream) {
        for l in 0..self.n_layers() {
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = (0..fan_in * fan_out)
                .map(|_| (2.0 * rng.uniform() - 1.0) * a)
                .collect();
            store.insert(
                Self::weight_name(prefix, l),
                Tensor::matrix(fan_in, fan_out, w).unwrap(),
            );
            store.insert(Self::bias_name(prefix, l), Tensor::zeros(&[fan_out]));
        }
    }

    /// Records the forward pass of an `[n, in]` batch.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        prefix: &str,
        x: Var,
    ) -> Result<Var, NumError> {
        let in_shape = tape.value(x)?.shape().to_vec();
        if in_shape.len() != 2 || in_shape[1] != self.widths[0] {
            return Err(NumError::shape(
                format!("{prefix} layer 0"),
                format!("input {in_shape:?}, expected [_, {}]", self.widths[0]),
            ));
        }
        let mut outputs = vec![x];
        let mut h = x;
        for l in 0..self.n_layers() {
            let w = tape.param(store, &Self::weight_name(prefix, l))?;
            let b = tape.param(store, &Self::bias_name(prefix, l))?;
            let ws = tape.value(w)?.shape().to_vec();
            if ws != [self.widths[l], self.widths[l + 1]] {
                return Err(NumError::shape(
                    format!("{prefix} layer {l}"),
                    format!("weight {ws:?}, expected [{}, {}]", self.widths[l], self.widths[l + 1]),
                ));
            }
            let z = tape.matmul(h, w)?;
            let z = tape.add_bias(z, b)?;
            let mut a = self.activations[l].apply_tape(tape, z)?;
            if let Some(j) = self.residual_from[l] {
                a = tape.add(a, outputs[j])?;
            }
            outputs.push(a);
            h = a;
        }
        Ok(h)
    }

    /// Forward pass without keeping a trace.
    pub fn forward_plain(
        &self,
        store: &ParamStore,
        prefix: &str,
        x: &Tensor,
    ) -> Result<Tensor, NumError> {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let y = self.forward(&mut tape, store, prefix, xv)?;
        Ok(tape.value(y)?.clone())
    }
}
