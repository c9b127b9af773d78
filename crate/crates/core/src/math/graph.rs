//! Expression graph with reverse-mode differentiation.
//!
//! Nodes are appended in evaluation order, so every node's inputs precede it
//! and the node list is already a topological order. Leaves are either
//! parameters (receive gradients) or constants.

use std::collections::BTreeMap;

use super::tensor::{Tensor, LOG_EPS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Differentiable primitives. Tempered variants carry their temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Primitive {
    MatMul,
    Add,
    Sub,
    Mul,
    ScalarMul(f64),
    Relu,
    SigmoidTemp(f64),
    SoftmaxTemp(f64),
    Log,
    Sum,
    Mean,
    ConcatRows,
}

impl Primitive {
    pub fn name(&self) -> &'static str {
        match self {
            Primitive::MatMul => "matmul",
            Primitive::Add => "add",
            Primitive::Sub => "sub",
            Primitive::Mul => "mul_elementwise",
            Primitive::ScalarMul(_) => "scalar_mul",
            Primitive::Relu => "relu",
            Primitive::SigmoidTemp(_) => "sigmoid_temp",
            Primitive::SoftmaxTemp(_) => "softmax_temp",
            Primitive::Log => "log",
            Primitive::Sum => "sum",
            Primitive::Mean => "mean",
            Primitive::ConcatRows => "concat_rows",
        }
    }

    fn arity(&self) -> Option<usize> {
        match self {
            Primitive::MatMul | Primitive::Add | Primitive::Sub | Primitive::Mul => Some(2),
            Primitive::ConcatRows => None,
            _ => Some(1),
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf { param: bool },
    Apply(Primitive),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    inputs: Vec<NodeId>,
    value: Tensor,
    needs_grad: bool,
}

#[derive(Debug, Default, Clone)]
pub struct ExpressionGraph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar output with respect to parameter leaves.
#[derive(Debug, Default, Clone)]
pub struct Gradients {
    grads: BTreeMap<NodeId, Tensor>,
}

impl Gradients {
    pub fn get(&self, leaf: NodeId) -> Option<&Tensor> {
        self.grads.get(&leaf)
    }

    pub fn remove(&mut self, leaf: NodeId) -> Option<Tensor> {
        self.grads.remove(&leaf)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

fn forward(prim: Primitive, inputs: &[&Tensor]) -> Result<Tensor> {
    if let Some(n) = prim.arity() {
        if inputs.len() != n {
            return Err(Error::Shape {
                op: prim.name(),
                shapes: inputs.iter().map(|t| t.shape().to_vec()).collect(),
            });
        }
    }
    let temperature_ok = |t: f64| {
        if t > 0.0 && t.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!("{} requires a positive temperature, got {t}", prim.name())))
        }
    };
    Ok(match prim {
        Primitive::MatMul => inputs[0].matmul(inputs[1])?,
        Primitive::Add => inputs[0].add(inputs[1])?,
        Primitive::Sub => inputs[0].sub(inputs[1])?,
        Primitive::Mul => inputs[0].mul(inputs[1])?,
        Primitive::ScalarMul(s) => inputs[0].scale(s),
        Primitive::Relu => inputs[0].relu(),
        Primitive::SigmoidTemp(t) => {
            temperature_ok(t)?;
            inputs[0].sigmoid_temp(t)
        }
        Primitive::SoftmaxTemp(t) => {
            temperature_ok(t)?;
            if inputs[0].shape().len() != 2 {
                return Err(Error::Shape { op: prim.name(), shapes: vec![inputs[0].shape().to_vec()] });
            }
            inputs[0].softmax_temp(t)
        }
        Primitive::Log => inputs[0].log_guarded(),
        Primitive::Sum => Tensor::scalar(inputs[0].sum()),
        Primitive::Mean => {
            if inputs[0].is_empty() {
                return Err(Error::Shape { op: prim.name(), shapes: vec![inputs[0].shape().to_vec()] });
            }
            Tensor::scalar(inputs[0].mean())
        }
        Primitive::ConcatRows => Tensor::concat_rows(inputs)?,
    })
}

impl ExpressionGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push_leaf(&mut self, value: Tensor, param: bool) -> NodeId {
        self.nodes.push(Node { op: Op::Leaf { param }, inputs: vec![], value, needs_grad: param });
        NodeId(self.nodes.len() - 1)
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push_leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push_leaf(value, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn is_param(&self, id: NodeId) -> bool {
        matches!(self.nodes[id.0].op, Op::Leaf { param: true })
    }

    pub fn apply(&mut self, prim: Primitive, inputs: &[NodeId]) -> Result<NodeId> {
        if inputs.iter().any(|i| i.0 >= self.nodes.len()) {
            return Err(Error::Config(format!("{}: unknown input node", prim.name())));
        }
        let values: Vec<&Tensor> = inputs.iter().map(|i| &self.nodes[i.0].value).collect();
        let value = forward(prim, &values)?;
        let needs_grad = inputs.iter().any(|i| self.nodes[i.0].needs_grad);
        self.nodes.push(Node { op: Op::Apply(prim), inputs: inputs.to_vec(), value, needs_grad });
        Ok(NodeId(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Primitive::MatMul, &[a, b])
    }
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Add, &[a, b])
    }
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Sub, &[a, b])
    }
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Mul, &[a, b])
    }
    pub fn scalar_mul(&mut self, a: NodeId, s: f64) -> Result<NodeId> {
        self.apply(Primitive::ScalarMul(s), &[a])
    }
    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Relu, &[a])
    }
    pub fn sigmoid_temp(&mut self, a: NodeId, temperature: f64) -> Result<NodeId> {
        self.apply(Primitive::SigmoidTemp(temperature), &[a])
    }
    pub fn softmax_temp(&mut self, a: NodeId, temperature: f64) -> Result<NodeId> {
        self.apply(Primitive::SoftmaxTemp(temperature), &[a])
    }
    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Log, &[a])
    }
    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Sum, &[a])
    }
    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Mean, &[a])
    }
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        self.apply(Primitive::ConcatRows, parts)
    }

    /// Replace a leaf's value. Call [`recompute`](Self::recompute) afterwards to
    /// refresh dependent nodes.
    pub fn set_leaf(&mut self, id: NodeId, value: Tensor) -> Result<()> {
        let node = &mut self.nodes[id.0];
        if !matches!(node.op, Op::Leaf { .. }) {
            return Err(Error::Config(format!("node {} is not a leaf", id.0)));
        }
        if node.value.shape() != value.shape() {
            return Err(Error::Shape { op: "set_leaf", shapes: vec![node.value.shape().to_vec(), value.shape().to_vec()] });
        }
        node.value = value;
        Ok(())
    }

    /// Re-evaluate every non-leaf node in order.
    pub fn recompute(&mut self) -> Result<()> {
        for i in 0..self.nodes.len() {
            let Op::Apply(prim) = self.nodes[i].op else { continue };
            let value = {
                let values: Vec<&Tensor> = self.nodes[i].inputs.iter().map(|j| &self.nodes[j.0].value).collect();
                forward(prim, &values)?
            };
            self.nodes[i].value = value;
        }
        Ok(())
    }

    /// Reverse accumulation of d(output)/d(leaf) for every parameter leaf that
    /// the output depends on. Parameters without a data-flow path get zeros.
    pub fn backward(&self, output: NodeId) -> Result<Gradients> {
        let out = &self.nodes[output.0];
        if out.value.len() != 1 {
            return Err(Error::NonScalar { node: output.0, shape: out.value.shape().to_vec() });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        grads[output.0] = Some(Tensor::full(out.value.shape(), 1.0));

        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            let Op::Apply(prim) = node.op else { continue };
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if !g.all_finite() {
                return Err(Error::NonFinite { node: i, phase: "backward" });
            }
            let contributions = self.local_grads(prim, node, &g)?;
            for (input, contrib) in node.inputs.iter().zip(contributions) {
                let Some(contrib) = contrib else { continue };
                let slot = &mut grads[input.0];
                *slot = Some(match slot.take() {
                    Some(acc) => acc.add(&contrib)?,
                    None => contrib,
                });
            }
            // Keep parameter gradients, drop intermediates.
            grads[i] = None;
        }

        let mut result = Gradients::default();
        for (i, node) in self.nodes.iter().enumerate().take(output.0 + 1) {
            if let Op::Leaf { param: true } = node.op {
                let g = grads[i].take().unwrap_or_else(|| Tensor::zeros(node.value.shape()));
                if !g.all_finite() {
                    return Err(Error::NonFinite { node: i, phase: "backward" });
                }
                result.grads.insert(NodeId(i), g);
            }
        }
        Ok(result)
    }

    fn local_grads(&self, prim: Primitive, node: &Node, g: &Tensor) -> Result<Vec<Option<Tensor>>> {
        let input = |k: usize| &self.nodes[node.inputs[k].0];
        let wants = |k: usize| input(k).needs_grad;
        let y = &node.value;
        Ok(match prim {
            Primitive::MatMul => {
                let (a, b) = (&input(0).value, &input(1).value);
                vec![
                    wants(0).then(|| g.matmul_t(b)).transpose()?,
                    wants(1).then(|| a.t_matmul(g)).transpose()?,
                ]
            }
            Primitive::Add => {
                let b_shape = input(1).value.shape();
                let gb = if b_shape == g.shape() {
                    g.clone()
                } else {
                    // Row-broadcast bias: sum over rows.
                    let cols = g.cols();
                    let mut acc = vec![0.0; cols];
                    for row in g.data().chunks(cols) {
                        for (a, v) in acc.iter_mut().zip(row) {
                            *a += v;
                        }
                    }
                    Tensor::vector(acc)
                };
                vec![wants(0).then(|| g.clone()), wants(1).then_some(gb)]
            }
            Primitive::Sub => vec![wants(0).then(|| g.clone()), wants(1).then(|| g.scale(-1.0))],
            Primitive::Mul => {
                let (a, b) = (&input(0).value, &input(1).value);
                vec![wants(0).then(|| g.mul(b)).transpose()?, wants(1).then(|| g.mul(a)).transpose()?]
            }
            Primitive::ScalarMul(s) => vec![Some(g.scale(s))],
            Primitive::Relu => {
                let x = &input(0).value;
                let data = g.data().iter().zip(x.data()).map(|(&gv, &xv)| if xv > 0.0 { gv } else { 0.0 }).collect();
                vec![Some(Tensor::new(g.shape().to_vec(), data)?)]
            }
            Primitive::SigmoidTemp(t) => {
                let data = g.data().iter().zip(y.data()).map(|(&gv, &s)| gv * t * s * (1.0 - s)).collect();
                vec![Some(Tensor::new(g.shape().to_vec(), data)?)]
            }
            Primitive::SoftmaxTemp(t) => {
                let c = y.cols();
                let mut data = Vec::with_capacity(y.len());
                for (g_row, y_row) in g.data().chunks(c).zip(y.data().chunks(c)) {
                    let dot: f64 = g_row.iter().zip(y_row).map(|(a, b)| a * b).sum();
                    data.extend(g_row.iter().zip(y_row).map(|(&gv, &yv)| t * yv * (gv - dot)));
                }
                vec![Some(Tensor::new(g.shape().to_vec(), data)?)]
            }
            Primitive::Log => {
                let x = &input(0).value;
                let data =
                    g.data().iter().zip(x.data()).map(|(&gv, &xv)| if xv > LOG_EPS { gv / xv } else { 0.0 }).collect();
                vec![Some(Tensor::new(g.shape().to_vec(), data)?)]
            }
            Primitive::Sum => vec![Some(Tensor::full(input(0).value.shape(), g.item()))],
            Primitive::Mean => {
                let x = &input(0).value;
                vec![Some(Tensor::full(x.shape(), g.item() / x.len() as f64))]
            }
            Primitive::ConcatRows => {
                let cols = g.cols();
                let mut offset = 0;
                let mut out = Vec::with_capacity(node.inputs.len());
                for k in 0..node.inputs.len() {
                    let rows = input(k).value.rows();
                    let part = g.data()[offset * cols..(offset + rows) * cols].to_vec();
                    offset += rows;
                    out.push(wants(k).then(|| Tensor::matrix(rows, cols, part)).transpose()?);
                }
                out
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = ExpressionGraph::new();
        let w = g.param(Tensor::vector(vec![0.3, -2.0, 5.0]));
        let s = g.sum(w).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(w).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn mean_of_squares_gradient() {
        let mut g = ExpressionGraph::new();
        let w = g.param(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let sq = g.mul(w, w).unwrap();
        let m = g.mean(sq).unwrap();
        let grads = g.backward(m).unwrap();
        let expected = [2.0 / 3.0, 4.0 / 3.0, 2.0];
        for (a, b) in grads.get(w).unwrap().data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn unrelated_param_gets_zero_gradient() {
        let mut g = ExpressionGraph::new();
        let w = g.param(Tensor::vector(vec![1.0, 2.0]));
        let v = g.param(Tensor::vector(vec![4.0, 5.0, 6.0]));
        let s = g.sum(w).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(v).unwrap().data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn constants_get_no_entry() {
        let mut g = ExpressionGraph::new();
        let c = g.constant(Tensor::vector(vec![1.0, 2.0]));
        let w = g.param(Tensor::vector(vec![1.0, 1.0]));
        let p = g.mul(c, w).unwrap();
        let s = g.sum(p).unwrap();
        let grads = g.backward(s).unwrap();
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(w).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn non_scalar_output_is_rejected() {
        let mut g = ExpressionGraph::new();
        let w = g.param(Tensor::vector(vec![1.0, 2.0]));
        let r = g.relu(w).unwrap();
        assert!(matches!(g.backward(r), Err(Error::NonScalar { .. })));
    }

    #[test]
    fn shape_mismatch_names_primitive() {
        let mut g = ExpressionGraph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        match g.matmul(a, b) {
            Err(Error::Shape { op, shapes }) => {
                assert_eq!(op, "matmul");
                assert_eq!(shapes, vec![vec![2, 3], vec![2, 3]]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nonpositive_temperature_is_a_config_error() {
        let mut g = ExpressionGraph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        assert!(matches!(g.sigmoid_temp(a, 0.0), Err(Error::Config(_))));
        assert!(matches!(g.softmax_temp(a, -1.0), Err(Error::Config(_))));
    }

    #[test]
    fn nan_in_backward_reports_node() {
        let mut g = ExpressionGraph::new();
        let w = g.param(Tensor::vector(vec![1.0]));
        let big = g.scalar_mul(w, f64::INFINITY).unwrap();
        let s = g.sum(big).unwrap();
        let z = g.scalar_mul(s, 0.0).unwrap();
        match g.backward(z) {
            Err(Error::NonFinite { node, .. }) => assert!(node <= z.index()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn recompute_tracks_leaf_updates() {
        let mut g = ExpressionGraph::new();
        let w = g.param(Tensor::vector(vec![1.0, 2.0]));
        let s = g.sum(w).unwrap();
        g.set_leaf(w, Tensor::vector(vec![5.0, 5.0])).unwrap();
        g.recompute().unwrap();
        assert_eq!(g.value(s).item(), 10.0);
        assert!(g.set_leaf(s, Tensor::scalar(1.0)).is_err());
    }

    #[test]
    fn sigmoid_at_zero() {
        let mut g = ExpressionGraph::new();
        let x = g.constant(Tensor::scalar(0.0));
        let s = g.sigmoid_temp(x, 1.0).unwrap();
        assert_eq!(g.value(s).item(), 0.5);
    }
}
