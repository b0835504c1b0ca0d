//! Records a small network on the tape, runs the reverse sweep and checks
//! every parameter gradient against central differences.

use cellkit::numkit::gradcheck::check_params;
use cellkit::numkit::{Activation, MlpSpec, ParamStore, RngStream, Tape, Tensor};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = MlpSpec::uniform(vec![4, 8, 3], Activation::Softplus, Activation::Identity)?;
    let mut rng = RngStream::new(0);
    let mut store = ParamStore::new();
    spec.init(&mut store, "mlp", &mut rng);
    let x = Tensor::matrix(5, 4, rng.normals(20))?;
    let targets = [0, 2, 1, 1, 0];

    let loss = |store: &ParamStore, tape: &mut Tape| -> Result<_, cellkit::numkit::NumError> {
        let xv = tape.constant(x.clone());
        let logits = spec.forward(tape, store, "mlp", xv)?;
        tape.cross_entropy(logits, &targets)
    };
    let mut tape = Tape::new();
    let l = loss(&store, &mut tape)?;
    tape.backward_into(l, &mut store)?;
    println!("cross-entropy {:.5} over {} parameters", tape.value(l)?.data()[0], store.numel());

    let report = check_params(&store, 1e-5, |p| {
        let mut t = Tape::new();
        let l = loss(p, &mut t)?;
        Ok(t.value(l)?.data()[0])
    })?;
    println!("max relative error vs finite differences: {:.2e}", report.max_rel_error);
    Ok(())
}
