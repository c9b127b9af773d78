//! Builds a small MLP loss on a random batch and compares reverse-mode
//! gradients against central finite differences.

use cmid::math::{grad_check, ExpressionGraph, RngStream, Tensor};
use cmid::models::{init_model, ModelKind};
use cmid::trainers::cross_entropy;

fn main() -> anyhow::Result<()> {
    let mut rng = RngStream::new(7);
    let x = Tensor::matrix(16, 4, (0..64).map(|_| rng.normal(0.0, 1.0)).collect())?;
    let y: Vec<usize> = (0..16).map(|_| rng.below(3)).collect();

    for kind in [ModelKind::Linear, ModelKind::Mlp1 { width: 8 }, ModelKind::Mlp2 { width1: 6, width2: 5 }] {
        let mut model = init_model(kind, 4, 3, 1)?;
        // move off the zero-bias start so no ReLU sits exactly on its kink
        for t in model.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v += rng.normal(0.0, 0.3));
        }
        let mut g = ExpressionGraph::new();
        let bound = model.bind(&mut g);
        let xn = g.constant(x.clone());
        let probs = model.forward_probs(&mut g, &bound, xn)?;
        let loss = cross_entropy(&mut g, probs, &y, None)?;
        let worst = bound
            .ids()
            .collect::<Vec<_>>()
            .into_iter()
            .map(|leaf| grad_check(&mut g, leaf, loss, 1e-5))
            .collect::<cmid::Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        println!("{kind:?}: loss {:.4}, max relative gradient error {worst:.2e}", g.value(loss).item());
    }
    Ok(())
}
