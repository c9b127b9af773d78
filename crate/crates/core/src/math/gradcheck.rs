use super::graph::{ExpressionGraph, NodeId};
use crate::error::{Error, Result};

/// Largest relative disagreement between the reverse-mode gradient of `output`
/// with respect to `leaf` and central finite differences with step `h`.
///
/// Relative error per entry is `|a - n| / max(|a|, |n|, 1e-8)`. The graph is
/// restored to its original leaf values before returning.
pub fn grad_check(graph: &mut ExpressionGraph, leaf: NodeId, output: NodeId, h: f64) -> Result<f64> {
    if h <= 0.0 || !h.is_finite() {
        return Err(Error::Config(format!("finite-difference step must be positive, got {h}")));
    }
    let analytic = graph.backward(output)?.remove(leaf);
    let original = graph.value(leaf).clone();
    let analytic = analytic.map_or_else(|| vec![0.0; original.len()], |t| t.into_data());

    let eval_at = |graph: &mut ExpressionGraph, j: usize, delta: f64| -> Result<f64> {
        let mut perturbed = original.clone();
        perturbed.data_mut()[j] += delta;
        graph.set_leaf(leaf, perturbed)?;
        graph.recompute()?;
        Ok(graph.value(output).item())
    };

    let mut worst = 0.0f64;
    let mut outcome = Ok(());
    for (j, &a) in analytic.iter().enumerate() {
        let plus = eval_at(graph, j, h);
        let minus = eval_at(graph, j, -h);
        let (plus, minus) = match (plus, minus) {
            (Ok(p), Ok(m)) => (p, m),
            (Err(e), _) | (_, Err(e)) => {
                outcome = Err(e);
                break;
            }
        };
        let numeric = (plus - minus) / (2.0 * h);
        let denom = a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((a - numeric).abs() / denom);
    }
    graph.set_leaf(leaf, original)?;
    graph.recompute()?;
    outcome.map(|_| worst)
}
