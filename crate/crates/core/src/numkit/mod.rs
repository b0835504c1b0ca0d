//! Minimal dense-tensor kernel used by the generative model and the
//! classifier: tensors, a reverse-mode tape, MLPs, Adam, seeded random
//! streams and a finite-difference gradient checker.
//!
//! Everything runs in `f64` on the CPU.

mod adam;
mod error;
pub mod gradcheck;
mod mlp;
mod params;
mod rng;
mod tape;
mod tensor;

pub use adam::Adam;
pub use error::NumError;
pub use mlp::{Activation, MlpSpec};
pub use params::{read_checkpoint, write_checkpoint, ParamStore};
pub use rng::RngStream;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(e^a + e^b)`, tolerating `-inf` operands.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}
