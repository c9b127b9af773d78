//! ERM, the two-stage CMI-regularized procedure, and the JTT baseline.
//!
//! All three share one mini-batch loop ([`Fit`]). A run derives three streams
//! from its seed: model initialization (index 0), batch shuffling (1), and
//! the probe subset used for CMI trajectories (2). Runs that differ only in
//! their objective therefore start from identical parameters and see the
//! same batches.

use serde::{Deserialize, Serialize};

use crate::cmi::{estimated_cmi, hard_cmi, CmiConfig};
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::math::{derive_seed, ExpressionGraph, NodeId, RngStream, Tensor};
use crate::models::{init_model, predict_hard, ModelKind, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    SgdMomentum { beta: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Adagrad { eps: f64 },
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub lr: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub shuffle: bool,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::validation("lr", format!("{} must be a nonnegative finite rate", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size", "must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(Error::validation("epochs", "must be at least 1"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::validation("weight_decay", "must be nonnegative"));
        }
        let unit = |field: &str, b: f64| {
            if (0.0..1.0).contains(&b) {
                Ok(())
            } else {
                Err(Error::validation(field, format!("{b} must lie in [0, 1)")))
            }
        };
        match self.optimizer {
            Optimizer::Sgd => Ok(()),
            Optimizer::SgdMomentum { beta } => unit("beta", beta),
            Optimizer::Adam { beta1, beta2, eps } => {
                unit("beta1", beta1)?;
                unit("beta2", beta2)?;
                if eps > 0.0 { Ok(()) } else { Err(Error::validation("eps", "must be positive")) }
            }
            Optimizer::Adagrad { eps } => {
                if eps > 0.0 { Ok(()) } else { Err(Error::validation("eps", "must be positive")) }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmidConfig {
    pub lambda_c: f64,
    /// Epoch scale `S` of the schedule.
    #[serde(rename = "S")]
    pub s: f64,
    pub cmi: CmiConfig,
}

impl CmidConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_c >= 0.0 && self.lambda_c.is_finite()) {
            return Err(Error::validation("lambda_c", "must be nonnegative and finite"));
        }
        if !(self.s >= 1.0 && self.s.is_finite()) {
            return Err(Error::validation("S", format!("{} must be finite and at least 1", self.s)));
        }
        self.cmi.validate()
    }
}

/// `λ(t) = λ_c (1 + t / S)` for the 0-based epoch `t`.
pub fn lambda_schedule(cmid: &CmidConfig, epoch: usize) -> f64 {
    cmid.lambda_c * (1.0 + epoch as f64 / cmid.s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JttConfig {
    pub lambda_up: u32,
    pub id_epochs: usize,
    pub id_train: TrainConfig,
}

impl JttConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_up == 0 {
            return Err(Error::validation("lambda_up", "must be at least 1"));
        }
        if self.id_epochs == 0 {
            return Err(Error::validation("id_epochs", "must be at least 1"));
        }
        self.id_train.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean total batch loss.
    pub loss: f64,
    /// Mean cross-entropy.
    pub ce: f64,
    /// Mean estimated CMI (zero when no reference model is attached).
    pub cmi_penalty: f64,
    pub lambda: f64,
    pub train_acc: f64,
    /// Hard CMI against the reference model on the probe subset.
    pub probe_hard_cmi: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchLog {
    pub epoch: usize,
    pub batch: usize,
    pub loss: f64,
    pub ce: f64,
    pub cmi: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRun {
    pub model: ModelParams,
    pub log: Vec<EpochLog>,
    pub batches: Vec<BatchLog>,
    pub config: serde_json::Value,
}

impl TrainRun {
    pub fn final_epoch(&self) -> &EpochLog {
        self.log.last().expect("a run has at least one epoch")
    }
}

pub type EpochHook<'a> = Box<dyn FnMut(&EpochLog, &ModelParams) -> Result<()> + 'a>;

struct OptState {
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl OptState {
    fn new(model: &ModelParams) -> Self {
        let zeros: Vec<Vec<f64>> = model.tensors().map(|t| vec![0.0; t.len()]).collect();
        OptState { step: 0, first: zeros.clone(), second: zeros }
    }

    fn apply(&mut self, cfg: &TrainConfig, model: &mut ModelParams, grads: Vec<Tensor>) {
        self.step += 1;
        let t = self.step as i32;
        for (k, (theta, grad)) in model.tensors_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.first[k], &mut self.second[k]);
            for (j, (w, &g0)) in theta.data_mut().iter_mut().zip(grad.data()).enumerate() {
                let g = g0 + cfg.weight_decay * *w;
                match cfg.optimizer {
                    Optimizer::Sgd => *w -= cfg.lr * g,
                    Optimizer::SgdMomentum { beta } => {
                        m[j] = beta * m[j] + g;
                        *w -= cfg.lr * m[j];
                    }
                    Optimizer::Adam { beta1, beta2, eps } => {
                        m[j] = beta1 * m[j] + (1.0 - beta1) * g;
                        v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
                        let m_hat = m[j] / (1.0 - beta1.powi(t));
                        let v_hat = v[j] / (1.0 - beta2.powi(t));
                        *w -= cfg.lr * m_hat / (v_hat.sqrt() + eps);
                    }
                    Optimizer::Adagrad { eps } => {
                        v[j] += g * g;
                        *w -= cfg.lr * g / (v[j].sqrt() + eps);
                    }
                }
            }
        }
    }
}

/// Cross-entropy of probability outputs against labels, optionally weighted
/// (`Σ w_i ℓ_i / Σ w_i`).
pub fn cross_entropy(g: &mut ExpressionGraph, probs: NodeId, y: &[usize], weights: Option<&[f64]>) -> Result<NodeId> {
    let p = g.value(probs);
    let (n, c) = (p.rows(), p.cols());
    if n != y.len() {
        return Err(Error::Shape { op: "cross_entropy", shapes: vec![p.shape().to_vec(), vec![y.len()]] });
    }
    let per_cell = if c == 1 {
        let target = g.constant(Tensor::matrix(n, 1, y.iter().map(|&v| v as f64).collect())?);
        let other = g.constant(Tensor::matrix(n, 1, y.iter().map(|&v| 1.0 - v as f64).collect())?);
        let ones = g.constant(Tensor::full(&[n, 1], 1.0));
        let log_p = g.log(probs)?;
        let q = g.sub(ones, probs)?;
        let log_q = g.log(q)?;
        let a = g.mul(target, log_p)?;
        let b = g.mul(other, log_q)?;
        g.add(a, b)?
    } else {
        let mut onehot = vec![0.0; n * c];
        for (i, &v) in y.iter().enumerate() {
            onehot[i * c + v] = 1.0;
        }
        let onehot = g.constant(Tensor::matrix(n, c, onehot)?);
        let log_p = g.log(probs)?;
        g.mul(onehot, log_p)?
    };
    match weights {
        None => {
            let total = g.sum(per_cell)?;
            g.scalar_mul(total, -1.0 / n as f64)
        }
        Some(w) => {
            let norm: f64 = w.iter().sum();
            let mut cells = vec![0.0; n * c];
            for (i, wi) in w.iter().enumerate() {
                cells[i * c..(i + 1) * c].iter_mut().for_each(|v| *v = wi / norm);
            }
            let w = g.constant(Tensor::matrix(n, c, cells)?);
            let weighted = g.mul(per_cell, w)?;
            let total = g.sum(weighted)?;
            g.scalar_mul(total, -1.0)
        }
    }
}

pub fn accuracy(pred: &[usize], y: &[usize]) -> f64 {
    pred.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64
}

/// Indices of the probe subset: the first `min(n, 1000)` entries of a
/// permutation drawn from the run's probe stream.
pub fn probe_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut idx = RngStream::derive(seed, 2).permutation(n);
    idx.truncate(n.min(1000));
    idx
}

/// One configurable training run.
pub struct Fit<'a> {
    kind: ModelKind,
    data: &'a Dataset,
    cfg: &'a TrainConfig,
    reference: Option<&'a ModelParams>,
    cmid: Option<&'a CmidConfig>,
    weights: Option<Vec<f64>>,
    hook: Option<EpochHook<'a>>,
    keep_batches: bool,
}

impl<'a> Fit<'a> {
    pub fn new(kind: ModelKind, data: &'a Dataset, cfg: &'a TrainConfig) -> Self {
        Fit { kind, data, cfg, reference: None, cmid: None, weights: None, hook: None, keep_batches: true }
    }

    /// Log probe hard CMI against a frozen reference model.
    pub fn probe_against(mut self, reference: &'a ModelParams) -> Self {
        self.reference = Some(reference);
        self
    }

    /// Add `λ(t)·Î(M; reference | Y)` to every batch loss.
    pub fn regularize(mut self, reference: &'a ModelParams, cmid: &'a CmidConfig) -> Self {
        self.reference = Some(reference);
        self.cmid = Some(cmid);
        self
    }

    /// Per-sample loss weights.
    pub fn weights(mut self, w: Vec<f64>) -> Self {
        self.weights = Some(w);
        self
    }

    pub fn on_epoch(mut self, hook: EpochHook<'a>) -> Self {
        self.hook = Some(hook);
        self
    }

    pub fn keep_batches(mut self, keep: bool) -> Self {
        self.keep_batches = keep;
        self
    }

    pub fn run(mut self) -> Result<TrainRun> {
        let (data, cfg) = (self.data, self.cfg);
        cfg.validate()?;
        if let Some(c) = self.cmid {
            c.validate()?;
            if c.cmi.classes != data.classes {
                return Err(Error::validation("cmi.classes", "must equal the dataset's class count"));
            }
        }
        if let Some(w) = &self.weights {
            if w.len() != data.len() || w.iter().any(|&v| !(v >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
                return Err(Error::validation("weights", "need one nonnegative weight per sample with a positive sum"));
            }
        }
        let mut model = init_model(self.kind, data.dim(), data.classes, derive_seed(cfg.seed, 0))?;
        let ref_probs = match self.reference {
            Some(r) => Some(r.predict_probs(&data.x)?),
            None => None,
        };
        let probe = probe_indices(data.len(), cfg.seed);
        let probe_x = data.x.select_rows(&probe);
        let probe_y: Vec<usize> = probe.iter().map(|&i| data.y[i]).collect();
        let probe_ref = ref_probs.as_ref().map(|p| predict_hard(&p.select_rows(&probe)));

        let mut shuffler = RngStream::derive(cfg.seed, 1);
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut opt = OptState::new(&model);
        let mut log = Vec::with_capacity(cfg.epochs);
        let mut batches = Vec::new();

        for epoch in 0..cfg.epochs {
            if cfg.shuffle {
                shuffler.shuffle(&mut order);
            }
            let lambda = self.cmid.map_or(0.0, |c| lambda_schedule(c, epoch));
            let (mut sum_loss, mut sum_ce, mut sum_cmi) = (0.0, 0.0, 0.0);
            let mut n_batches = 0usize;
            for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
                let mut g = ExpressionGraph::new();
                let bound = model.bind(&mut g);
                let x = g.constant(data.x.select_rows(idx));
                let probs = model.forward_probs(&mut g, &bound, x)?;
                let y: Vec<usize> = idx.iter().map(|&i| data.y[i]).collect();
                let w: Option<Vec<f64>> = self.weights.as_ref().map(|w| idx.iter().map(|&i| w[i]).collect());
                let ce = cross_entropy(&mut g, probs, &y, w.as_deref())?;
                let mut cmi_value = 0.0;
                let mut total = ce;
                if let (Some(c), Some(rp)) = (self.cmid, &ref_probs) {
                    let cmi = estimated_cmi(&mut g, probs, &rp.select_rows(idx), &y, &c.cmi)?;
                    cmi_value = g.value(cmi).item();
                    if lambda != 0.0 {
                        let scaled = g.scalar_mul(cmi, lambda)?;
                        total = g.add(ce, scaled)?;
                    }
                }
                let loss = g.value(total).item();
                if !loss.is_finite() {
                    return Err(Error::Diverged { epoch, batch: b });
                }
                let mut grads = g.backward(total).map_err(|e| match e {
                    Error::NonFinite { .. } => Error::Diverged { epoch, batch: b },
                    other => other,
                })?;
                let grads: Vec<Tensor> = bound.ids().map(|id| grads.remove(id).expect("parameter gradient")).collect();
                opt.apply(cfg, &mut model, grads);

                let ce_value = g.value(ce).item();
                sum_loss += loss;
                sum_ce += ce_value;
                sum_cmi += cmi_value;
                n_batches += 1;
                if self.keep_batches {
                    batches.push(BatchLog { epoch, batch: b, loss, ce: ce_value, cmi: cmi_value, lambda });
                }
            }
            if model.tensors().any(|t| !t.all_finite()) {
                return Err(Error::Diverged { epoch, batch: n_batches.saturating_sub(1) });
            }
            let train_acc = accuracy(&model.predict(&data.x)?, &data.y);
            let probe_hard_cmi = match &probe_ref {
                Some(r) => Some(hard_cmi(&model.predict(&probe_x)?, r, &probe_y, data.classes)?),
                None => None,
            };
            let nb = n_batches as f64;
            let entry = EpochLog {
                epoch,
                loss: sum_loss / nb,
                ce: sum_ce / nb,
                cmi_penalty: sum_cmi / nb,
                lambda,
                train_acc,
                probe_hard_cmi,
            };
            if let Some(hook) = self.hook.as_mut() {
                hook(&entry, &model)?;
            }
            log.push(entry);
        }

        let mut config = serde_json::json!({ "kind": self.kind, "train": cfg });
        if let Some(c) = self.cmid {
            config["cmid"] = serde_json::to_value(c)?;
        }
        if self.weights.is_some() {
            config["weighted"] = true.into();
        }
        Ok(TrainRun { model, log, batches, config })
    }
}

pub fn train_erm(kind: ModelKind, data: &Dataset, cfg: &TrainConfig) -> Result<TrainRun> {
    Fit::new(kind, data, cfg).run()
}

/// Stage 1 fits the simple model by ERM; stage 2 fits the final model with
/// the scheduled CMI penalty against the frozen simple model.
pub fn train_cmid(
    simple_kind: ModelKind,
    final_kind: ModelKind,
    data: &Dataset,
    simple_cfg: &TrainConfig,
    final_cfg: &TrainConfig,
    cmid: &CmidConfig,
) -> Result<(TrainRun, TrainRun)> {
    let simple = train_erm(simple_kind, data, simple_cfg)?;
    let fin = Fit::new(final_kind, data, final_cfg).regularize(&simple.model, cmid).run()?;
    Ok((simple, fin))
}

/// Per-sample weights: `lambda_up` for points the identification model gets
/// wrong, 1 otherwise. `None` when no point is upweighted.
pub fn jtt_weights(kind: ModelKind, data: &Dataset, jtt: &JttConfig) -> Result<Option<Vec<f64>>> {
    jtt.validate()?;
    let id_cfg = TrainConfig { epochs: jtt.id_epochs, ..jtt.id_train.clone() };
    let id_model = train_erm(kind, data, &id_cfg)?.model;
    let pred = id_model.predict(&data.x)?;
    let errors = pred.iter().zip(&data.y).filter(|(p, y)| p != y).count();
    if jtt.lambda_up == 1 || errors == 0 {
        return Ok(None);
    }
    let up = f64::from(jtt.lambda_up);
    Ok(Some(pred.iter().zip(&data.y).map(|(p, y)| if p != y { up } else { 1.0 }).collect()))
}

pub fn train_jtt(kind: ModelKind, data: &Dataset, cfg: &TrainConfig, jtt: &JttConfig) -> Result<TrainRun> {
    let fit = Fit::new(kind, data, cfg);
    let mut run = match jtt_weights(kind, data, jtt)? {
        Some(w) => fit.weights(w).run()?,
        None => fit.run()?,
    };
    run.config["jtt"] = serde_json::to_value(jtt)?;
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_two_feature, DatasetMeta, TwoFeatureSpec};

    fn sgd(lr: f64, epochs: usize) -> TrainConfig {
        TrainConfig { optimizer: Optimizer::Sgd, lr, batch_size: 2, weight_decay: 0.0, epochs, seed: 3, shuffle: true }
    }

    fn two_points() -> Dataset {
        let x = Tensor::from_rows(&[vec![1.0, 0.5], vec![-1.0, -0.2]]).unwrap();
        Dataset::new(x, vec![1, 0], 2, DatasetMeta::new("toy", &0, 0)).unwrap()
    }

    fn small_two_feature() -> Dataset {
        let spec = TwoFeatureSpec { n_per_env: 200, n_test: 10, ..Default::default() };
        gen_two_feature(&spec, 1).unwrap().0
    }

    #[test]
    fn schedule_values() {
        let mk = |lambda_c, s| CmidConfig { lambda_c, s, cmi: CmiConfig::new(2) };
        assert_eq!(lambda_schedule(&mk(4.0, 4.0), 0), 4.0);
        assert_eq!(lambda_schedule(&mk(4.0, 4.0), 4), 8.0);
        assert_eq!(lambda_schedule(&mk(150.0, 1.0), 0), 150.0);
        assert_eq!(lambda_schedule(&mk(3000.0, 10.0), 0), 3000.0);
        assert_eq!(lambda_schedule(&mk(5.0, 3.0), 6), 15.0);
        assert!(mk(1.0, f64::INFINITY).validate().is_err());
    }

    #[test]
    fn separable_pair_is_fit() {
        let run = train_erm(ModelKind::Linear, &two_points(), &sgd(0.5, 200)).unwrap();
        assert_eq!(run.final_epoch().train_acc, 1.0);
        assert_eq!(run.log.len(), 200);
    }

    #[test]
    fn zero_rate_keeps_initialization() {
        let data = two_points();
        let cfg = sgd(0.0, 5);
        let run = train_erm(ModelKind::Mlp1 { width: 4 }, &data, &cfg).unwrap();
        assert_eq!(run.model, init_model(ModelKind::Mlp1 { width: 4 }, 2, 2, derive_seed(3, 0)).unwrap());
    }

    #[test]
    fn runs_are_deterministic() {
        let data = small_two_feature();
        let cfg = TrainConfig { optimizer: Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }, batch_size: 32, ..sgd(0.01, 3) };
        let a = train_erm(ModelKind::Mlp1 { width: 8 }, &data, &cfg).unwrap();
        let b = train_erm(ModelKind::Mlp1 { width: 8 }, &data, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_lambda_matches_erm_bitwise() {
        let data = small_two_feature();
        let cfg = TrainConfig { batch_size: 64, ..sgd(0.05, 4) };
        let cmid = CmidConfig { lambda_c: 0.0, s: 4.0, cmi: CmiConfig::new(2) };
        let (_, fin) = train_cmid(ModelKind::Linear, ModelKind::Mlp1 { width: 6 }, &data, &cfg, &cfg, &cmid).unwrap();
        let erm = train_erm(ModelKind::Mlp1 { width: 6 }, &data, &cfg).unwrap();
        assert_eq!(fin.model, erm.model);
        let losses = |r: &TrainRun| r.log.iter().map(|e| e.ce.to_bits()).collect::<Vec<_>>();
        assert_eq!(losses(&fin), losses(&erm));
    }

    #[test]
    fn batch_loss_decomposes() {
        let data = small_two_feature();
        let cfg = TrainConfig { batch_size: 64, ..sgd(0.05, 3) };
        let cmid = CmidConfig { lambda_c: 2.0, s: 1.0, cmi: CmiConfig::new(2) };
        let (_, fin) = train_cmid(ModelKind::Linear, ModelKind::Mlp1 { width: 6 }, &data, &cfg, &cfg, &cmid).unwrap();
        assert!(!fin.batches.is_empty());
        for b in &fin.batches {
            assert!((b.loss - (b.ce + b.lambda * b.cmi)).abs() < 1e-10);
            assert_eq!(b.lambda, 2.0 * (1.0 + b.epoch as f64));
        }
        assert!(fin.log.iter().all(|e| e.probe_hard_cmi.is_some()));
    }

    #[test]
    fn jtt_with_unit_upweight_is_erm() {
        let data = small_two_feature();
        let cfg = TrainConfig { batch_size: 64, ..sgd(0.05, 3) };
        let jtt = JttConfig { lambda_up: 1, id_epochs: 1, id_train: cfg.clone() };
        let a = train_jtt(ModelKind::Linear, &data, &cfg, &jtt).unwrap();
        let b = train_erm(ModelKind::Linear, &data, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn jtt_without_errors_is_erm() {
        let data = two_points();
        let cfg = sgd(0.5, 50);
        let jtt = JttConfig { lambda_up: 20, id_epochs: 200, id_train: cfg.clone() };
        assert_eq!(jtt_weights(ModelKind::Linear, &data, &jtt).unwrap(), None);
        assert_eq!(train_jtt(ModelKind::Linear, &data, &cfg, &jtt).unwrap().model, train_erm(ModelKind::Linear, &data, &cfg).unwrap().model);
    }

    #[test]
    fn weight_decay_alone_shrinks_norm() {
        let cfg = TrainConfig { weight_decay: 0.1, batch_size: 2, ..sgd(0.1, 1) };
        let mut model = init_model(ModelKind::Mlp1 { width: 3 }, 2, 2, 1).unwrap();
        let mut opt = OptState::new(&model);
        let mut prev = model.norm_sq();
        for _ in 0..20 {
            let zero: Vec<Tensor> = model.tensors().map(|t| Tensor::zeros(t.shape())).collect();
            opt.apply(&cfg, &mut model, zero);
            let now = model.norm_sq();
            assert!(now < prev);
            prev = now;
        }
    }

    #[test]
    fn weighted_cross_entropy_with_unit_weights_is_mean() {
        let mut g = ExpressionGraph::new();
        let p = g.constant(Tensor::matrix(3, 1, vec![0.2, 0.7, 0.9]).unwrap());
        let a = cross_entropy(&mut g, p, &[0, 1, 0], None).unwrap();
        let b = cross_entropy(&mut g, p, &[0, 1, 0], Some(&[1.0, 1.0, 1.0])).unwrap();
        let expected = -((0.8f64).ln() + (0.7f64).ln() + (0.1f64).ln()) / 3.0;
        assert!((g.value(a).item() - expected).abs() < 1e-15);
        assert!((g.value(b).item() - expected).abs() < 1e-15);
    }

    #[test]
    fn invalid_configs_rejected() {
        let data = two_points();
        assert!(train_erm(ModelKind::Linear, &data, &TrainConfig { batch_size: 0, ..sgd(0.1, 1) }).is_err());
        assert!(train_erm(ModelKind::Linear, &data, &TrainConfig { epochs: 0, ..sgd(0.1, 1) }).is_err());
        let bad = TrainConfig { optimizer: Optimizer::SgdMomentum { beta: 1.5 }, ..sgd(0.1, 1) };
        assert!(train_erm(ModelKind::Linear, &data, &bad).is_err());
    }

    #[test]
    fn divergence_reports_epoch_and_batch() {
        let x = Tensor::from_rows(&[vec![1.0, 2.0], vec![f64::NAN, 1.0]]).unwrap();
        let data = Dataset::new(x, vec![0, 1], 2, DatasetMeta::new("nan", &0, 0)).unwrap();
        let err = train_erm(ModelKind::Linear, &data, &sgd(0.1, 3)).unwrap_err();
        assert!(matches!(err, Error::Diverged { epoch: 0, batch: 0 }), "{err}");
    }
}
