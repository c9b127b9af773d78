use std::collections::BTreeMap;

use super::config::{DataSpec, ExperimentConfig, ExperimentKind, Method, Select};
use crate::datagen::{gen_conflict, gen_slab, gen_subgroup, gen_subgroup_iid, gen_two_feature, hash_json, Dataset};
use crate::error::{Error, Result};
use crate::eval::{self, metrics};
use crate::models::ModelParams;
use crate::trainers::{jtt_weights, EpochLog, Fit, JttConfig, TrainConfig, TrainRun};

/// Named splits of one seed; the first entry is the training split.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits(pub Vec<(String, Dataset)>);

impl Splits {
    pub fn train(&self) -> &Dataset {
        &self.0[0].1
    }

    pub fn get(&self, name: &str) -> Option<&Dataset> {
        self.0.iter().find(|(n, _)| n == name).map(|(_, d)| d)
    }

    /// Every split except the training one.
    pub fn held_out(&self) -> impl Iterator<Item = (&str, &Dataset)> {
        self.0.iter().skip(1).map(|(n, d)| (n.as_str(), d))
    }
}

pub fn generate(cfg: &ExperimentConfig, seed: u64) -> Result<Splits> {
    let names = cfg.kind.split_names();
    let data = match cfg.data_spec()? {
        DataSpec::Slab(s) => {
            let (a, b) = gen_slab(&s, seed)?;
            vec![a, b]
        }
        DataSpec::TwoFeature(s) => {
            let (a, b, c) = gen_two_feature(&s, seed)?;
            vec![a, b, c]
        }
        DataSpec::Subgroup(s) => {
            let (a, c) = gen_subgroup(&s, seed)?;
            vec![a, gen_subgroup_iid(&s, seed)?, c]
        }
        DataSpec::Conflict(s) => {
            let (a, b) = gen_conflict(&s, seed)?;
            vec![a, b]
        }
    };
    Ok(Splits(names.iter().map(|n| n.to_string()).zip(data).collect()))
}

/// Hash stored in each split's sidecar, used to detect stale files on disk.
pub fn spec_hash(cfg: &ExperimentConfig) -> Result<String> {
    Ok(match cfg.data_spec()? {
        DataSpec::Slab(s) => hash_json(&s),
        DataSpec::TwoFeature(s) => hash_json(&s),
        DataSpec::Subgroup(s) => hash_json(&s),
        DataSpec::Conflict(s) => hash_json(&s),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub run: TrainRun,
    pub simple: Option<TrainRun>,
    /// Epoch whose parameters `run.model` holds.
    pub selected_epoch: usize,
}

fn seeded(cfg: &TrainConfig, seed: u64) -> TrainConfig {
    TrainConfig { seed, ..cfg.clone() }
}

/// Trains one seed of the configured method. Data seeds and training seeds
/// coincide; the trainers derive separate streams from it.
pub fn train_seed(cfg: &ExperimentConfig, seed: u64, splits: &Splits) -> Result<SeedRun> {
    cfg.validate()?;
    let models = cfg.models.as_ref().ok_or_else(|| Error::validation("models", "missing"))?;
    let method = cfg.method.ok_or_else(|| Error::validation("method", "missing"))?;
    let train_cfg = seeded(cfg.train.as_ref().ok_or_else(|| Error::validation("train", "missing"))?, seed);
    let data = splits.train();

    let simple = match (models.simple, &cfg.simple_train) {
        (Some(kind), Some(sc)) => Some(Fit::new(kind, data, &seeded(sc, seed)).keep_batches(false).run()?),
        _ => None,
    };
    let weights = match (method, &cfg.jtt) {
        (Method::Jtt, Some(j)) => {
            let j = JttConfig { id_train: seeded(&j.id_train, seed), ..j.clone() };
            jtt_weights(models.final_model, data, &j)?
        }
        _ => None,
    };

    let validation = match cfg.select {
        Select::Last => None,
        _ => Some(splits.get("iid").ok_or_else(|| Error::validation("select", "no validation split"))?),
    };
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut fit = Fit::new(models.final_model, data, &train_cfg).keep_batches(false);
    if let Some(s) = &simple {
        fit = match (method, &cfg.cmid) {
            (Method::Cmid, Some(c)) => fit.regularize(&s.model, c),
            _ => fit.probe_against(&s.model),
        };
    }
    if let Some(w) = weights {
        fit = fit.weights(w);
    }
    if let Some(val) = validation {
        let select = cfg.select;
        let best = &mut best;
        fit = fit.on_epoch(Box::new(move |log: &EpochLog, model: &ModelParams| {
            let m = metrics(model, val)?;
            let score = match select {
                Select::MinTrainValGap => -(log.train_acc - m.accuracy).abs(),
                _ => m.worst_group,
            };
            if best.as_ref().is_none_or(|b| score > b.0) {
                *best = Some((score, log.epoch, model.clone()));
            }
            Ok(())
        }));
    }
    let mut run = fit.run()?;
    if method == Method::Jtt {
        run.config["jtt"] = serde_json::to_value(&cfg.jtt)?;
    }
    let mut selected_epoch = run.log.len() - 1;
    if let Some((_, epoch, model)) = best {
        selected_epoch = epoch;
        run.model = model;
    }
    Ok(SeedRun { seed, run, simple, selected_epoch })
}

pub type Summary = BTreeMap<String, f64>;

/// Headline metrics of one trained seed. Keys depend on the kind: every
/// held-out split gets `<split>_acc`; iid/ood kinds add `delta_gap` and
/// worst-group values; slab kinds add randomized-coordinate accuracies;
/// conflict adds `shape_bias`; runs with a reference model add probe CMI.
pub fn summarize(cfg: &ExperimentConfig, model: &ModelParams, log: &[EpochLog], splits: &Splits) -> Result<Summary> {
    let mut s = Summary::new();
    s.insert("train_acc".into(), metrics(model, splits.train())?.accuracy);
    for (name, data) in splits.held_out() {
        let m = metrics(model, data)?;
        s.insert(format!("{name}_acc"), m.accuracy);
        if m.grouped {
            s.insert(format!("{name}_worst_group"), m.worst_group);
        }
    }
    if let (Some(iid), Some(ood)) = (s.get("iid_acc"), s.get("ood_acc")) {
        s.insert("delta_gap".into(), eval::GapReport::from_accuracies(*iid, *ood).delta_gap);
    }
    if cfg.kind.is_slab() {
        let test = splits.get("test").expect("slab kinds have a test split");
        let seed = cfg.eval.randomize_seeds[0];
        s.insert("test_acc_rand_linear".into(), eval::randomize_coord_accuracy(model, test, 0, seed)?);
        s.insert("test_acc_rand_slab".into(), eval::randomize_coord_accuracy(model, test, 1, seed)?);
    }
    if cfg.kind == ExperimentKind::Conflict {
        let e = splits.get("eval").expect("conflict has an eval split");
        s.insert("shape_bias".into(), eval::shape_bias(model, e)?.value);
    }
    if let (Some(first), Some(last)) = (log.first(), log.last()) {
        if let (Some(a), Some(b)) = (first.probe_hard_cmi, last.probe_hard_cmi) {
            s.insert("probe_cmi_first".into(), a);
            s.insert("probe_cmi_last".into(), b);
        }
    }
    Ok(s)
}

/// Mean and sample standard deviation of every key present in all rows;
/// the deviation is NaN for a single row.
pub fn aggregate(rows: &[Summary]) -> (Summary, Summary) {
    let (mut mean, mut sd) = (Summary::new(), Summary::new());
    let Some(first) = rows.first() else { return (mean, sd) };
    let n = rows.len() as f64;
    for key in first.keys() {
        let vals: Vec<f64> = rows.iter().filter_map(|r| r.get(key).copied()).collect();
        if vals.len() != rows.len() {
            continue;
        }
        let m = vals.iter().sum::<f64>() / n;
        let v = if rows.len() > 1 { vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { f64::NAN };
        mean.insert(key.clone(), m);
        sd.insert(key.clone(), v.sqrt());
    }
    (mean, sd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::TwoFeatureSpec;
    use serde_json::json;

    fn config(method: &str) -> ExperimentConfig {
        let spec = TwoFeatureSpec { n_per_env: 300, n_test: 200, ..Default::default() };
        let sgd = json!({ "optimizer": { "type": "sgd" }, "lr": 0.05, "batch_size": 64, "weight_decay": 0.0, "epochs": 3 });
        ExperimentConfig::from_value(json!({
            "kind": "two_feature",
            "spec": spec,
            "method": method,
            "models": { "simple": { "type": "linear" }, "final": { "type": "mlp1", "width": 8 } },
            "train": sgd,
            "simple_train": sgd,
            "cmid": { "lambda_c": 0.0, "S": 4.0, "cmi": { "temperature": 12.5, "eps": 1e-8, "classes": 2 } },
            "jtt": { "lambda_up": 1, "id_epochs": 1, "id_train": sgd },
            "seeds": [0, 1, 2, 3],
        }))
        .unwrap()
    }

    #[test]
    fn zero_lambda_cmid_matches_erm() {
        let splits = generate(&config("erm"), 0).unwrap();
        let erm = train_seed(&config("erm"), 0, &splits).unwrap();
        let cmid = train_seed(&config("cmid"), 0, &splits).unwrap();
        assert_eq!(erm.run.model, cmid.run.model);
        let jtt = train_seed(&config("jtt"), 0, &splits).unwrap();
        assert_eq!(erm.run.model, jtt.run.model);
        let s = summarize(&config("erm"), &erm.run.model, &erm.run.log, &splits).unwrap();
        for key in ["iid_acc", "ood_acc", "delta_gap", "probe_cmi_first", "probe_cmi_last", "ood_worst_group"] {
            assert!(s.contains_key(key), "{key}");
        }
    }

    #[test]
    fn selection_keeps_a_logged_epoch() {
        let cfg = ExperimentConfig { select: Select::MaxValWorstGroup, ..config("erm") };
        let splits = generate(&cfg, 1).unwrap();
        let r = train_seed(&cfg, 1, &splits).unwrap();
        assert!(r.selected_epoch < 3);
        let last = train_seed(&config("erm"), 1, &splits).unwrap();
        if r.selected_epoch == 2 {
            assert_eq!(r.run.model, last.run.model);
        }
    }

    #[test]
    fn aggregate_uses_sample_deviation() {
        let rows: Vec<Summary> = [1.0, 2.0, 3.0, 4.0].iter().map(|&v| Summary::from([("a".to_string(), v)])).collect();
        let (m, sd) = aggregate(&rows);
        assert_eq!(m["a"], 2.5);
        assert!((sd["a"] - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(aggregate(&rows[..1]).1["a"].is_nan());
    }
}
