//! Conditional mutual information between two models' predictions given the
//! label, in a differentiable smoothed form and an exact discretized form.
//!
//! With `ζ(i, m)` the (smoothed) indicator that model `M` predicts `m` on
//! sample `i`, the per-label joint is
//! `p(m, m' | y) = Σ_{i: y_i = y} ζ(i, m) ζ_s(i, m') / n_y`, and the estimate is
//! `Σ_y p(y) Σ_{m, m'} p(m, m' | y) log[p(m, m' | y) / (p(m | y) p(m' | y))]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{ExpressionGraph, NodeId, Tensor};
use crate::models::predict_hard;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CmiConfig {
    pub temperature: f64,
    pub eps: f64,
    pub classes: usize,
}

impl CmiConfig {
    pub fn new(classes: usize) -> Self {
        CmiConfig { temperature: 12.5, eps: 1e-8, classes }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!("temperature must be positive, got {}", self.temperature)));
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(Error::Config(format!("eps must be nonnegative, got {}", self.eps)));
        }
        if self.classes < 2 {
            return Err(Error::Config("cmi needs at least two classes".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityMode {
    Smoothed,
    Hard,
}

/// Per-label densities after eps smoothing. Marginals are the row and column
/// sums of the smoothed joint, so the two always agree.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTable {
    pub classes: usize,
    /// `p(Y = y)`; zero for labels absent from the batch.
    pub label_weights: Vec<f64>,
    pub present: Vec<bool>,
    /// `marginal_m[y][m] = p(M = m | y)`
    pub marginal_m: Vec<Vec<f64>>,
    /// `marginal_s[y][m'] = p(Ms = m' | y)`
    pub marginal_s: Vec<Vec<f64>>,
    /// `joint[y][m * C + m'] = p(M = m, Ms = m' | y)`
    pub joint: Vec<Vec<f64>>,
}

impl DensityTable {
    /// Sum over y of p(y) · KL(p(M, Ms | y) ‖ p(M | y) p(Ms | y)), with exact logarithms.
    pub fn cmi(&self) -> f64 {
        let c = self.classes;
        let mut total = 0.0;
        for y in 0..c {
            if self.label_weights[y] == 0.0 {
                continue;
            }
            let mut inner = 0.0;
            for m in 0..c {
                for s in 0..c {
                    let j = self.joint[y][m * c + s];
                    if j > 0.0 {
                        inner += j * (j / (self.marginal_m[y][m] * self.marginal_s[y][s])).ln();
                    }
                }
            }
            total += self.label_weights[y] * inner;
        }
        total
    }
}

fn check_inputs(probs: &Tensor, y: &[usize], classes: usize, what: &str) -> Result<()> {
    if y.is_empty() {
        return Err(Error::validation(what, "empty batch"));
    }
    let width = if classes == 2 { 1 } else { classes };
    if probs.shape().len() != 2 || probs.rows() != y.len() || probs.cols() != width {
        return Err(Error::Shape { op: "cmi", shapes: vec![probs.shape().to_vec(), vec![y.len(), width]] });
    }
    if let Some(bad) = y.iter().find(|&&v| v >= classes) {
        return Err(Error::validation("y", format!("label {bad} outside 0..{classes}")));
    }
    Ok(())
}

/// Smoothed indicator matrix `[n × C]` as graph nodes.
fn zeta_node(g: &mut ExpressionGraph, probs: NodeId, cfg: &CmiConfig) -> Result<NodeId> {
    if cfg.classes > 2 {
        return g.softmax_temp(probs, cfg.temperature);
    }
    let n = g.value(probs).rows();
    let half = g.constant(Tensor::full(&[n, 1], 0.5));
    let centred = g.sub(probs, half)?;
    let s = g.sigmoid_temp(centred, cfg.temperature)?;
    // [1 - s, s]
    let spread = g.constant(Tensor::matrix(1, 2, vec![-1.0, 1.0])?);
    let offset = g.constant(Tensor::vector(vec![1.0, 0.0]));
    let both = g.matmul(s, spread)?;
    g.add(both, offset)
}

/// Smoothed indicator of class `m` for every sample, `[n × 1]`.
pub fn smooth_zeta(g: &mut ExpressionGraph, probs: NodeId, m: usize, cfg: &CmiConfig) -> Result<NodeId> {
    cfg.validate()?;
    if m >= cfg.classes {
        return Err(Error::validation("m", format!("class {m} outside 0..{}", cfg.classes)));
    }
    let z = zeta_node(g, probs, cfg)?;
    let mut pick = vec![0.0; cfg.classes];
    pick[m] = 1.0;
    let sel = g.constant(Tensor::matrix(cfg.classes, 1, pick)?);
    g.matmul(z, sel)
}

/// Indicator matrix evaluated without a graph.
pub fn zeta_values(probs: &Tensor, cfg: &CmiConfig, mode: DensityMode) -> Result<Tensor> {
    let n = probs.rows();
    let c = cfg.classes;
    match mode {
        DensityMode::Hard => {
            let mut out = vec![0.0; n * c];
            for (i, k) in predict_hard(probs).into_iter().enumerate() {
                out[i * c + k] = 1.0;
            }
            Tensor::matrix(n, c, out)
        }
        DensityMode::Smoothed => {
            let mut g = ExpressionGraph::new();
            let p = g.constant(probs.clone());
            let z = zeta_node(&mut g, p, cfg)?;
            Ok(g.value(z).clone())
        }
    }
}

fn label_counts(y: &[usize], c: usize) -> Vec<usize> {
    let mut counts = vec![0; c];
    for &v in y {
        counts[v] += 1;
    }
    counts
}

pub fn conditional_densities(
    m_probs: &Tensor,
    ms_probs: &Tensor,
    y: &[usize],
    cfg: &CmiConfig,
    mode: DensityMode,
) -> Result<DensityTable> {
    cfg.validate()?;
    check_inputs(m_probs, y, cfg.classes, "m_probs")?;
    check_inputs(ms_probs, y, cfg.classes, "ms_probs")?;
    let c = cfg.classes;
    let zm = zeta_values(m_probs, cfg, mode)?;
    let zs = zeta_values(ms_probs, cfg, mode)?;
    let counts = label_counts(y, c);
    let mut joint = vec![vec![0.0; c * c]; c];
    for (i, &yi) in y.iter().enumerate() {
        for m in 0..c {
            for s in 0..c {
                joint[yi][m * c + s] += zm.get(i, m) * zs.get(i, s);
            }
        }
    }
    let norm = 1.0 / (1.0 + (c * c) as f64 * cfg.eps);
    for (yv, cells) in joint.iter_mut().enumerate() {
        let n_y = counts[yv].max(1) as f64;
        for cell in cells.iter_mut() {
            *cell = (*cell / n_y + cfg.eps) * norm;
        }
    }
    let marginal_m = joint.iter().map(|j| (0..c).map(|m| (0..c).map(|s| j[m * c + s]).sum()).collect()).collect();
    let marginal_s = joint.iter().map(|j| (0..c).map(|s| (0..c).map(|m| j[m * c + s]).sum()).collect()).collect();
    let n = y.len() as f64;
    Ok(DensityTable {
        classes: c,
        label_weights: counts.iter().map(|&k| k as f64 / n).collect(),
        present: counts.iter().map(|&k| k > 0).collect(),
        marginal_m,
        marginal_s,
        joint,
    })
}

/// Differentiable `Î(M; Ms | Y)` as a scalar node. `m_probs` is a node of the
/// caller's graph; the conditioning model's probabilities enter as constants.
pub fn estimated_cmi(
    g: &mut ExpressionGraph,
    m_probs: NodeId,
    ms_probs: &Tensor,
    y: &[usize],
    cfg: &CmiConfig,
) -> Result<NodeId> {
    cfg.validate()?;
    check_inputs(g.value(m_probs), y, cfg.classes, "m_probs")?;
    check_inputs(ms_probs, y, cfg.classes, "ms_probs")?;
    let c = cfg.classes;
    let n = y.len();
    let yc = c * c;
    let zs = zeta_values(ms_probs, cfg, DensityMode::Smoothed)?;
    let counts = label_counts(y, c);

    // kt[(y, m'), i] = 1[y_i = y] ζs(i, m') / n_y, so kt · ζ holds the joint
    // with rows (y, m') and columns m.
    let mut kt = vec![0.0; yc * n];
    for (i, &yi) in y.iter().enumerate() {
        for s in 0..c {
            kt[(yi * c + s) * n + i] = zs.get(i, s) / counts[yi] as f64;
        }
    }
    let zeta = zeta_node(g, m_probs, cfg)?;
    let kt = g.constant(Tensor::matrix(yc, n, kt)?);
    let raw = g.matmul(kt, zeta)?;
    let eps = g.constant(Tensor::full(&[yc, c], cfg.eps));
    let shifted = g.add(raw, eps)?;
    let joint = g.scalar_mul(shifted, 1.0 / (1.0 + (c * c) as f64 * cfg.eps))?;

    // p(m | y): sum the c rows of each label block.
    let mut block_sum = vec![0.0; c * yc];
    // expand[(y, m'), y] = 1 broadcasts per-label rows back to the blocks.
    let mut expand = vec![0.0; yc * c];
    for yv in 0..c {
        for s in 0..c {
            block_sum[yv * yc + yv * c + s] = 1.0;
            expand[(yv * c + s) * c + yv] = 1.0;
        }
    }
    let block_sum = g.constant(Tensor::matrix(c, yc, block_sum)?);
    let expand = g.constant(Tensor::matrix(yc, c, expand)?);
    let pm = g.matmul(block_sum, joint)?;
    let log_pm = g.log(pm)?;
    let log_pm = g.matmul(expand, log_pm)?;

    // p(m' | y): row sums of the joint.
    let ones_col = g.constant(Tensor::full(&[c, 1], 1.0));
    let ones_row = g.constant(Tensor::full(&[1, c], 1.0));
    let ps = g.matmul(joint, ones_col)?;
    let log_ps = g.log(ps)?;
    let log_ps = g.matmul(log_ps, ones_row)?;

    let log_joint = g.log(joint)?;
    let ratio = g.sub(log_joint, log_pm)?;
    let ratio = g.sub(ratio, log_ps)?;
    let terms = g.mul(joint, ratio)?;
    let mut weights = vec![0.0; yc * c];
    for (k, w) in weights.iter_mut().enumerate() {
        *w = counts[k / (c * c)] as f64 / n as f64;
    }
    let weights = g.constant(Tensor::matrix(yc, c, weights)?);
    let weighted = g.mul(terms, weights)?;
    g.sum(weighted)
}

/// Value of [`estimated_cmi`] for fixed probabilities.
pub fn estimated_cmi_value(m_probs: &Tensor, ms_probs: &Tensor, y: &[usize], cfg: &CmiConfig) -> Result<f64> {
    let mut g = ExpressionGraph::new();
    let p = g.constant(m_probs.clone());
    let out = estimated_cmi(&mut g, p, ms_probs, y, cfg)?;
    Ok(g.value(out).item())
}

/// Exact Shannon CMI (nats) of the empirical joint of hard predictions.
pub fn hard_cmi(m: &[usize], ms: &[usize], y: &[usize], classes: usize) -> Result<f64> {
    if y.is_empty() {
        return Err(Error::validation("y", "empty input"));
    }
    if m.len() != y.len() || ms.len() != y.len() {
        return Err(Error::Shape { op: "hard_cmi", shapes: vec![vec![m.len()], vec![ms.len()], vec![y.len()]] });
    }
    if [m, ms, y].iter().any(|v| v.iter().any(|&k| k >= classes)) {
        return Err(Error::validation("labels", format!("values must lie in 0..{classes}")));
    }
    let c = classes;
    let mut joint = vec![0usize; c * c * c];
    for i in 0..y.len() {
        joint[(y[i] * c + m[i]) * c + ms[i]] += 1;
    }
    let n = y.len() as f64;
    let mut total = 0.0;
    for yv in 0..c {
        let block = &joint[yv * c * c..(yv + 1) * c * c];
        let n_y: usize = block.iter().sum();
        if n_y == 0 {
            continue;
        }
        let row = |a: usize| (0..c).map(|b| block[a * c + b]).sum::<usize>() as f64;
        let col = |b: usize| (0..c).map(|a| block[a * c + b]).sum::<usize>() as f64;
        let n_y = n_y as f64;
        let mut inner = 0.0;
        for a in 0..c {
            for b in 0..c {
                let k = block[a * c + b] as f64;
                if k > 0.0 {
                    inner += k / n_y * (k * n_y / (row(a) * col(b))).ln();
                }
            }
        }
        total += n_y / n * inner;
    }
    Ok(total.max(0.0))
}
