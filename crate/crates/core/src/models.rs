//! Linear and ReLU multilayer models with a sigmoid (binary) or softmax head.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{ExpressionGraph, NodeId, RngStream, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    Mlp1 { width: usize },
    Mlp2 { width1: usize, width2: usize },
}

impl ModelKind {
    fn hidden(&self) -> Vec<usize> {
        match *self {
            ModelKind::Linear => vec![],
            ModelKind::Mlp1 { width } => vec![width],
            ModelKind::Mlp2 { width1, width2 } => vec![width1, width2],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden().contains(&0) {
            return Err(Error::validation("width", "hidden widths must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `[fan_in × fan_out]`
    pub weight: Tensor,
    /// `[fan_out]`
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub classes: usize,
    pub seed: u64,
    pub layers: Vec<Layer>,
}

/// Parameter leaves of a model registered in one graph.
#[derive(Debug, Clone)]
pub struct BoundModel {
    pub leaves: Vec<(NodeId, NodeId)>,
}

impl BoundModel {
    /// Leaf ids in the same order as [`ModelParams::tensors_mut`].
    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.leaves.iter().flat_map(|&(w, b)| [w, b])
    }
}

pub fn init_model(kind: ModelKind, input_dim: usize, classes: usize, seed: u64) -> Result<ModelParams> {
    kind.validate()?;
    if input_dim == 0 {
        return Err(Error::validation("input_dim", "must be at least 1"));
    }
    if classes < 2 {
        return Err(Error::validation("classes", "must be at least 2"));
    }
    let out = if classes == 2 { 1 } else { classes };
    let mut dims = vec![input_dim];
    dims.extend(kind.hidden());
    dims.push(out);
    let mut rng = RngStream::new(seed);
    let layers = dims
        .windows(2)
        .map(|pair| {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let w = (0..fan_in * fan_out).map(|_| rng.uniform(-bound, bound)).collect();
            Ok(Layer { weight: Tensor::matrix(fan_in, fan_out, w)?, bias: Tensor::zeros(&[fan_out]) })
        })
        .collect::<Result<_>>()?;
    Ok(ModelParams { kind, input_dim, classes, seed, layers })
}

impl ModelParams {
    pub fn binary(&self) -> bool {
        self.classes == 2
    }

    /// Weights and biases in layer order: `W1, b1, W2, b2, ...`.
    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    pub fn norm_sq(&self) -> f64 {
        self.tensors().map(Tensor::norm_sq).sum()
    }

    pub fn bind(&self, g: &mut ExpressionGraph) -> BoundModel {
        let leaves = self.layers.iter().map(|l| (g.param(l.weight.clone()), g.param(l.bias.clone()))).collect();
        BoundModel { leaves }
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape().len() != 2 || x.cols() != self.input_dim {
            return Err(Error::Shape { op: "forward_probs", shapes: vec![x.shape().to_vec(), vec![self.input_dim]] });
        }
        Ok(())
    }

    /// Probabilities as graph nodes: `[n × 1]` holding P(class 1) for binary
    /// models, `[n × C]` otherwise.
    pub fn forward_probs(&self, g: &mut ExpressionGraph, bound: &BoundModel, x: NodeId) -> Result<NodeId> {
        self.check_input(g.value(x))?;
        let mut h = x;
        let last = bound.leaves.len() - 1;
        for (k, &(w, b)) in bound.leaves.iter().enumerate() {
            let z = g.matmul(h, w)?;
            h = g.add(z, b)?;
            if k < last {
                h = g.relu(h)?;
            }
        }
        if self.binary() {
            g.sigmoid_temp(h, 1.0)
        } else {
            g.softmax_temp(h, 1.0)
        }
    }

    /// Same arithmetic as [`forward_probs`](Self::forward_probs) without a graph.
    pub fn predict_probs(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            h = h.matmul(&layer.weight)?.add(&layer.bias)?;
            if k < last {
                h = h.relu();
            }
        }
        Ok(if self.binary() { h.sigmoid_temp(1.0) } else { h.softmax_temp(1.0) })
    }

    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        Ok(predict_hard(&self.predict_probs(x)?))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            kind: self.kind,
            input_dim: self.input_dim,
            classes: self.classes,
            seed: self.seed,
            layers: self
                .layers
                .iter()
                .map(|l| CheckpointLayer {
                    fan_in: l.weight.rows(),
                    fan_out: l.weight.cols(),
                    weight: l.weight.data().to_vec(),
                    bias: l.bias.data().to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<ModelParams> {
        let template = init_model(c.kind, c.input_dim, c.classes, c.seed)?;
        if template.layers.len() != c.layers.len() {
            return Err(Error::validation("layers", "layer count does not match the model kind"));
        }
        let mut layers = Vec::with_capacity(c.layers.len());
        for (t, l) in template.layers.iter().zip(&c.layers) {
            if t.weight.shape() != [l.fan_in, l.fan_out] || l.bias.len() != l.fan_out {
                return Err(Error::validation("layers", "layer shapes do not chain from input to output"));
            }
            layers.push(Layer {
                weight: Tensor::matrix(l.fan_in, l.fan_out, l.weight.clone())?,
                bias: Tensor::vector(l.bias.clone()),
            });
        }
        Ok(ModelParams { layers, ..template })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, &self.to_checkpoint())?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ModelParams> {
        if !path.exists() {
            return Err(Error::Missing(path.to_path_buf()));
        }
        let c: Checkpoint = serde_json::from_reader(File::open(path)?)?;
        ModelParams::from_checkpoint(&c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointLayer {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// JSON checkpoint. Floats are written in shortest round-trip form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub classes: usize,
    pub seed: u64,
    pub layers: Vec<CheckpointLayer>,
}

/// Hard labels. A single column is P(class 1) with a strict `> 0.5` rule;
/// wider rows use argmax with ties going to the lowest index.
pub fn predict_hard(probs: &Tensor) -> Vec<usize> {
    let c = if probs.shape().len() == 2 { probs.cols() } else { 1 };
    if c == 1 {
        return probs.data().iter().map(|&p| usize::from(p > 0.5)).collect();
    }
    probs
        .data()
        .chunks(c)
        .map(|row| {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}
