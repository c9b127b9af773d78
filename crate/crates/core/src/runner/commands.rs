use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, ExperimentKind, ToySettings};
use super::pipeline::{aggregate, generate, spec_hash, summarize, train_seed, Splits, Summary};
use crate::datagen::{format_f64, Dataset};
use crate::error::{Error, Result};
use crate::eval::{self, write_table};
use crate::models::ModelParams;
use crate::theory::{self, GaussParams, TheoryConfig, ToyCausalModel, VerificationRow};
use crate::trainers::EpochLog;

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestFile {
    /// Path relative to the output directory, `/`-separated.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub metrics: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub kind: ExperimentKind,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub files: Vec<ManifestFile>,
    pub summary: Vec<SeedSummary>,
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn file_name(command: &str) -> String {
        format!("manifest_{command}.json")
    }

    /// Loads a manifest and checks every listed file against its recorded
    /// length and digest.
    pub fn load_verified(dir: &Path, command: &str) -> Result<RunManifest> {
        let path = dir.join(Self::file_name(command));
        if !path.exists() {
            return Err(Error::Missing(path));
        }
        let m: RunManifest = serde_json::from_reader(fs::File::open(&path)?)?;
        for f in &m.files {
            let p = dir.join(&f.path);
            let bytes = fs::read(&p).map_err(|_| Error::Missing(p.clone()))?;
            if bytes.len() as u64 != f.bytes || hex::encode(Sha256::digest(&bytes)) != f.sha256 {
                return Err(Error::validation("files", format!("{} does not match the manifest", f.path)));
            }
        }
        Ok(m)
    }
}

/// Where commands write and how seeds are shifted.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed_offset: u64,
    /// Worker threads for `sweep`; 0 means one.
    pub parallel: usize,
}

/// Loads a config file, applies the seed offset and resolves the output
/// directory (`--out` first, then the config's `out_dir`).
pub fn prepare(config: &Path, opts: &RunOptions) -> Result<(ExperimentConfig, PathBuf)> {
    let cfg = ExperimentConfig::load(config)?.with_seed_offset(opts.seed_offset);
    let out = opts
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .ok_or_else(|| Error::validation("out_dir", "no output directory given"))?;
    Ok((cfg, out))
}

struct Recorder {
    root: PathBuf,
    files: Vec<PathBuf>,
}

impl Recorder {
    fn new(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Recorder { root: root.to_path_buf(), files: Vec::new() })
    }

    fn path(&mut self, rel: &str) -> Result<PathBuf> {
        let p = self.root.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        self.files.push(p.clone());
        Ok(p)
    }

    fn table(&mut self, rel: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
        let p = self.path(rel)?;
        write_table(&p, header, rows)
    }

    fn finish(
        mut self,
        command: &str,
        cfg: &ExperimentConfig,
        summary: Vec<SeedSummary>,
        notes: Vec<String>,
    ) -> Result<RunManifest> {
        self.files.sort();
        self.files.dedup();
        let mut files = Vec::with_capacity(self.files.len());
        for p in &self.files {
            let bytes = fs::read(p)?;
            let rel = p.strip_prefix(&self.root).expect("recorded under root");
            let rel: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
            files.push(ManifestFile { path: rel.join("/"), bytes: bytes.len() as u64, sha256: hex::encode(Sha256::digest(&bytes)) });
        }
        let manifest = RunManifest {
            command: command.into(),
            tool_version: TOOL_VERSION.into(),
            kind: cfg.kind,
            config_hash: cfg.hash(),
            seeds: cfg.seeds.clone(),
            files,
            summary,
            notes,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(self.root.join(RunManifest::file_name(command)), text)?;
        Ok(manifest)
    }
}

fn f(v: f64) -> String {
    format_f64(v)
}

fn seed_dir(seed: u64) -> String {
    format!("seed{seed}")
}

fn data_dir(out: &Path, seed: u64) -> PathBuf {
    out.join("data").join(seed_dir(seed))
}

/// Splits written by `gen` when present and current, freshly generated
/// otherwise.
pub fn load_or_generate(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<Splits> {
    let dir = data_dir(out, seed);
    let names = cfg.kind.split_names();
    let on_disk = names.iter().all(|n| dir.join(format!("{n}.csv")).exists() && dir.join(format!("{n}.json")).exists());
    if on_disk {
        let hash = spec_hash(cfg)?;
        let loaded: Vec<(String, Dataset)> =
            names.iter().map(|n| Ok((n.to_string(), Dataset::load(&dir, n)?))).collect::<Result<_>>()?;
        if loaded.iter().all(|(_, d)| d.meta.spec_hash == hash && d.meta.seed == seed) {
            return Ok(Splits(loaded));
        }
    }
    generate(cfg, seed)
}

pub fn cmd_gen(cfg: &ExperimentConfig, out: &Path) -> Result<RunManifest> {
    cfg.data_spec()?;
    let mut rec = Recorder::new(out)?;
    for &seed in &cfg.seeds {
        let splits = generate(cfg, seed)?;
        let dir = data_dir(out, seed);
        for (name, data) in &splits.0 {
            rec.files.extend(data.save(&dir, name)?);
        }
    }
    rec.finish("gen", cfg, Vec::new(), Vec::new())
}

fn log_rows(log: &[EpochLog]) -> Vec<Vec<String>> {
    log.iter()
        .map(|e| {
            vec![
                e.epoch.to_string(),
                f(e.loss),
                f(e.ce),
                f(e.cmi_penalty),
                f(e.lambda),
                f(e.train_acc),
                e.probe_hard_cmi.map(f).unwrap_or_default(),
            ]
        })
        .collect()
}

const LOG_HEADER: [&str; 7] = ["epoch", "loss", "ce", "cmi_penalty", "lambda", "train_acc", "probe_hard_cmi"];

fn read_log(path: &Path) -> Result<Vec<EpochLog>> {
    if !path.exists() {
        return Err(Error::Missing(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path)?;
    let num = |s: &str, field: &str| s.parse::<f64>().map_err(|e| Error::validation(field, format!("{s:?}: {e}")));
    let mut log = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let epoch = rec[0].parse::<usize>().map_err(|e| Error::validation("epoch", e.to_string()))?;
        log.push(EpochLog {
            epoch,
            loss: num(&rec[1], "loss")?,
            ce: num(&rec[2], "ce")?,
            cmi_penalty: num(&rec[3], "cmi_penalty")?,
            lambda: num(&rec[4], "lambda")?,
            train_acc: num(&rec[5], "train_acc")?,
            probe_hard_cmi: if rec[6].is_empty() { None } else { Some(num(&rec[6], "probe_hard_cmi")?) },
        });
    }
    Ok(log)
}

fn summary_rows(rows: &[SeedSummary]) -> (Vec<String>, Vec<Vec<String>>) {
    let keys: Vec<String> = rows.first().map(|r| r.metrics.keys().cloned().collect()).unwrap_or_default();
    let mut header = vec!["seed".to_string()];
    header.extend(keys.iter().cloned());
    let cell = |m: &Summary, k: &str| m.get(k).map(|&v| if v.is_nan() { String::new() } else { f(v) }).unwrap_or_default();
    let mut out: Vec<Vec<String>> = rows
        .iter()
        .map(|r| std::iter::once(r.seed.to_string()).chain(keys.iter().map(|k| cell(&r.metrics, k))).collect())
        .collect();
    let metrics: Vec<Summary> = rows.iter().map(|r| r.metrics.clone()).collect();
    let (mean, sd) = aggregate(&metrics);
    for (label, m) in [("mean", &mean), ("sd", &sd)] {
        out.push(std::iter::once(label.to_string()).chain(keys.iter().map(|k| cell(m, k))).collect());
    }
    (header, out)
}

fn write_summary(rec: &mut Recorder, rel: &str, rows: &[SeedSummary]) -> Result<()> {
    let (header, body) = summary_rows(rows);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    rec.table(rel, &header, body)
}

pub fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> Result<RunManifest> {
    if !cfg.kind.trains() {
        return Err(Error::validation("kind", format!("{} has nothing to train; use the theory command", cfg.kind.name())));
    }
    let mut rec = Recorder::new(out)?;
    let mut summary = Vec::new();
    for &seed in &cfg.seeds {
        let splits = load_or_generate(cfg, seed, out)?;
        let r = train_seed(cfg, seed, &splits)?;
        let dir = seed_dir(seed);
        r.run.model.save(&rec.path(&format!("{dir}/model.json"))?)?;
        rec.table(&format!("{dir}/log.csv"), &LOG_HEADER, log_rows(&r.run.log))?;
        if let Some(s) = &r.simple {
            s.model.save(&rec.path(&format!("{dir}/simple.json"))?)?;
            rec.table(&format!("{dir}/simple_log.csv"), &LOG_HEADER, log_rows(&s.log))?;
        }
        let mut metrics = summarize(cfg, &r.run.model, &r.run.log, &splits)?;
        metrics.insert("selected_epoch".into(), r.selected_epoch as f64);
        summary.push(SeedSummary { seed, metrics });
    }
    write_summary(&mut rec, "summary.csv", &summary)?;
    rec.finish("train", cfg, summary, Vec::new())
}

fn eval_seed(cfg: &ExperimentConfig, seed: u64, out: &Path, rec: &mut Recorder) -> Result<Summary> {
    let dir = seed_dir(seed);
    let model = ModelParams::load(&out.join(&dir).join("model.json"))?;
    let splits = load_or_generate(cfg, seed, out)?;
    let log = read_log(&out.join(&dir).join("log.csv"))?;
    let mut summary = summarize(cfg, &model, &log, &splits)?;

    let mut overall = Vec::new();
    let mut groups = Vec::new();
    for (name, data) in &splits.0 {
        let m = eval::metrics(&model, data)?;
        overall.push(vec![name.clone(), f(m.accuracy), f(m.worst_group), m.grouped.to_string()]);
        for g in &m.groups {
            groups.push(vec![name.clone(), g.group.to_string(), g.count.to_string(), f(g.accuracy)]);
        }
    }
    rec.table(&format!("{dir}/eval/metrics.csv"), &["split", "accuracy", "worst_group", "grouped"], overall)?;
    rec.table(&format!("{dir}/eval/groups.csv"), &["split", "group", "count", "accuracy"], groups)?;

    if let (Some(iid), Some(ood)) = (splits.get("iid"), splits.get("ood")) {
        let g = eval::delta_gap(&model, iid, ood)?;
        let row = vec![f(g.iid_accuracy), f(g.ood_accuracy), f(g.delta_gap)];
        rec.table(&format!("{dir}/eval/gap.csv"), &["iid_accuracy", "ood_accuracy", "delta_gap"], vec![row])?;
    }
    if cfg.kind == ExperimentKind::Conflict {
        let s = eval::shape_bias(&model, splits.get("eval").expect("conflict eval split"))?;
        let row = vec![f(s.value), s.complex_matches.to_string(), s.simple_matches.to_string(), s.neither.to_string()];
        rec.table(&format!("{dir}/eval/shape_bias.csv"), &["shape_bias", "complex_matches", "simple_matches", "neither"], vec![row])?;
    }

    let (held_name, held) = splits.0.last().map(|(n, d)| (n.clone(), d)).expect("at least one split");
    let coords = cfg.randomize_coords();
    if !coords.is_empty() {
        let base = eval::metrics(&model, held)?.accuracy;
        let mut rows = Vec::new();
        for &c in &coords {
            for &s in &cfg.eval.randomize_seeds {
                let acc = eval::randomize_coord_accuracy(&model, held, c, s)?;
                rows.push(vec![held_name.clone(), c.to_string(), s.to_string(), f(acc), f(base)]);
            }
        }
        rec.table(&format!("{dir}/eval/randomization.csv"), &["split", "coord", "seed", "accuracy", "baseline_accuracy"], rows)?;
    }

    if cfg.eval.margins {
        let n = held.len().min(cfg.eval.margin_samples);
        let sub = held.subset(&(0..n).collect::<Vec<_>>());
        let m = eval::l1_flip_margins(&model, &sub)?;
        summary.insert("margin_mean".into(), m.mean);
        let row = vec![
            held_name.clone(),
            n.to_string(),
            f(m.mean),
            m.censored.to_string(),
            m.misclassified.to_string(),
            "axis_aligned; exact for linear models, an upper bound otherwise".into(),
        ];
        rec.table(
            &format!("{dir}/eval/margins.csv"),
            &["split", "samples", "mean", "censored", "misclassified", "search"],
            vec![row],
        )?;
        let per: Vec<Vec<String>> = m.margins.iter().enumerate().map(|(i, &v)| vec![i.to_string(), f(v)]).collect();
        rec.table(&format!("{dir}/eval/margins_per_sample.csv"), &["index", "margin"], per)?;
    }

    let [cx, cy] = cfg.eval.grid_coords;
    if cx < model.input_dim && cy < model.input_dim {
        let bounds = match cfg.eval.grid_bounds {
            Some([x, y]) => [(x[0], x[1]), (y[0], y[1])],
            None => {
                let train = splits.train();
                let range = |j: usize| {
                    (0..train.len()).map(|i| train.x.get(i, j)).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
                };
                [range(cx), range(cy)]
            }
        };
        let grid = eval::decision_grid_on(&model, (cx, cy), bounds, cfg.eval.grid_resolution)?;
        grid.write_csv(&rec.path(&format!("{dir}/eval/grid.csv"))?)?;
    }

    let traj: Vec<Vec<String>> =
        log.iter().filter_map(|e| e.probe_hard_cmi.map(|v| vec![e.epoch.to_string(), f(v)])).collect();
    if !traj.is_empty() {
        rec.table(&format!("{dir}/eval/cmi_trajectory.csv"), &["epoch", "probe_hard_cmi"], traj)?;
    }
    Ok(summary)
}

pub fn cmd_eval(cfg: &ExperimentConfig, out: &Path) -> Result<RunManifest> {
    if !cfg.kind.trains() {
        return Err(Error::validation("kind", format!("{} has no models to evaluate", cfg.kind.name())));
    }
    let mut rec = Recorder::new(out)?;
    let mut summary = Vec::new();
    for &seed in &cfg.seeds {
        summary.push(SeedSummary { seed, metrics: eval_seed(cfg, seed, out, &mut rec)? });
    }
    write_summary(&mut rec, "eval_summary.csv", &summary)?;
    rec.finish("eval", cfg, summary, Vec::new())
}

fn verification_table(rows: &[VerificationRow]) -> Vec<Vec<String>> {
    let opt = |v: Option<f64>| v.map(f).unwrap_or_default();
    let join = |w: &[f64]| w.iter().map(|&v| f(v)).collect::<Vec<_>>().join(";");
    rows.iter()
        .map(|r| {
            vec![
                r.draw.to_string(),
                r.features.to_string(),
                f(r.mu1),
                f(r.sigma1),
                f(r.mu2),
                f(r.sigma2),
                f(r.eta),
                opt(r.mu3),
                opt(r.sigma3),
                opt(r.eta_prime),
                f(r.c),
                join(&r.closed_w),
                join(&r.oracle_w),
                f(r.max_rel_gap),
                r.closed_binding.to_string(),
                r.oracle_binding.to_string(),
                f(r.constraint_residual),
            ]
        })
        .collect()
}

const VERIFICATION_HEADER: [&str; 17] = [
    "draw",
    "features",
    "mu1",
    "sigma1",
    "mu2",
    "sigma2",
    "eta",
    "mu3",
    "sigma3",
    "eta_prime",
    "c",
    "closed_w",
    "oracle_w",
    "max_rel_gap",
    "closed_binding",
    "oracle_binding",
    "constraint_residual",
];

fn offending(rows: &[VerificationRow], tol: f64) -> Vec<usize> {
    rows.iter().filter(|r| !(r.max_rel_gap <= tol) || r.closed_binding != r.oracle_binding).map(|r| r.draw).collect()
}

fn gaussian_theory(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<(Vec<String>, Option<Error>)> {
    let t = cfg.theory.clone().unwrap_or_default();
    let seed = cfg.seeds[0];
    let rows2 = theory::verification_sweep(2, t.draws, seed, t.fixed_c)?;
    let rows3 = theory::verification_sweep(3, t.draws, seed, t.fixed_c)?;
    rec.table("verification_2f.csv", &VERIFICATION_HEADER, verification_table(&rows2))?;
    rec.table("verification_3f.csv", &VERIFICATION_HEADER, verification_table(&rows3))?;
    let mut notes = Vec::new();
    for (rows, label) in [(&rows2, "two-feature"), (&rows3, "three-feature")] {
        let worst = rows.iter().map(|r| r.max_rel_gap).fold(0.0, f64::max);
        let binding = rows.iter().filter(|r| r.closed_binding).count();
        notes.push(format!("{label}: {} draws, {binding} binding, max relative gap {worst:.3e}", rows.len()));
    }

    if let Some(f4) = &t.fig4 {
        let cfg4 = TheoryConfig::new(f4.c)?;
        let mut boundaries = Vec::new();
        for (i, &eta) in f4.etas.iter().enumerate() {
            let p = GaussParams::two(f4.mu1, f4.sigma1, f4.mu2, f4.sigma2, eta);
            let (points, rows) = theory::fig4_tables(&p, &cfg4, f4.n, seed)?;
            let pts = points.iter().map(|r| vec![f(r.x1), f(r.x2), r.y.to_string()]).collect();
            rec.table(&format!("fig4_points_{i}.csv"), &["x1", "x2", "y"], pts)?;
            for r in rows {
                boundaries.push(vec![
                    f(eta),
                    r.panel,
                    f(r.w1),
                    f(r.w2),
                    f(r.abs_w2_over_w1),
                    f(r.accuracy),
                    f(r.flipped_accuracy),
                ]);
            }
        }
        rec.table(
            "fig4_boundaries.csv",
            &["eta", "panel", "w1", "w2", "abs_w2_over_w1", "accuracy", "flipped_accuracy"],
            boundaries,
        )?;
    }
    if let Some(f5) = &t.fig5 {
        let rows = theory::fig5_table(f5.mu, f5.eta, &f5.cs, &f5.variance_ratios)?;
        let body = rows
            .into_iter()
            .map(|r| {
                vec![
                    f(r.variance_ratio),
                    r.method,
                    r.c.map(f).unwrap_or_default(),
                    f(r.w1),
                    f(r.w2),
                    f(r.w1_over_w2),
                    r.binding.to_string(),
                ]
            })
            .collect();
        rec.table("fig5.csv", &["variance_ratio", "method", "c", "w1", "w2", "w1_over_w2", "binding"], body)?;
    }

    let (bad2, bad3) = (offending(&rows2, t.tolerance_2f), offending(&rows3, t.tolerance_3f));
    let err = (!bad2.is_empty() || !bad3.is_empty()).then(|| Error::Tolerance {
        count: bad2.len() + bad3.len(),
        detail: format!("two-feature draws {bad2:?}, three-feature draws {bad3:?}"),
    });
    Ok((notes, err))
}

pub fn candidate_name(c: theory::Candidate) -> &'static str {
    match c {
        theory::Candidate::Zero => "0",
        theory::Candidate::PhiC => "phi_c",
        theory::Candidate::PsiS => "psi_s",
        theory::Candidate::PsiC => "psi_c",
    }
}

fn mip_toy(settings: &ToySettings, rec: &mut Recorder) -> Result<Vec<String>> {
    let toy = ToyCausalModel::latent_attribute(settings.env_weights, settings.phi_flip, settings.a_flip, settings.c_flip)?;
    let r = theory::mip_enumerate(&toy)?;
    let rows = r
        .candidates
        .iter()
        .map(|c| {
            vec![
                candidate_name(c.candidate).to_string(),
                f(c.risk),
                f(c.cmi_with_simple),
                f(c.h_y_given),
                f(c.h_y_given_env),
                c.invariant.to_string(),
                f(c.info_y),
                c.feasible.to_string(),
            ]
        })
        .collect();
    rec.table(
        "mip_candidates.csv",
        &["candidate", "risk", "cmi_with_simple", "h_y_given", "h_y_given_env", "invariant", "info_y", "feasible"],
        rows,
    )?;
    let mut text = serde_json::to_string_pretty(&r.assumptions)?;
    text.push('\n');
    fs::write(rec.path("assumptions.json")?, text)?;

    let feasible: Vec<&str> = r.feasible.iter().map(|&c| candidate_name(c)).collect();
    let mut notes = vec![
        format!("feasible set: {{{}}}", feasible.join(", ")),
        format!("selected: {}", r.selected.map_or("none", candidate_name)),
        format!("assumption 3 holds: {}", r.assumptions.assumption3()),
        format!("assumption 4 holds: {}", r.assumptions.assumption4()),
    ];
    notes.extend(r.notes);
    Ok(notes)
}

/// Theory checks. For `gaussian_theory` the manifest is written before a
/// tolerance breach is returned, so the offending rows stay inspectable.
pub fn cmd_theory(cfg: &ExperimentConfig, out: &Path) -> Result<RunManifest> {
    let mut rec = Recorder::new(out)?;
    match cfg.kind {
        ExperimentKind::GaussianTheory => {
            let (notes, err) = gaussian_theory(cfg, &mut rec)?;
            let manifest = rec.finish("theory", cfg, Vec::new(), notes)?;
            match err {
                Some(e) => Err(e),
                None => Ok(manifest),
            }
        }
        ExperimentKind::MipToy => {
            let notes = mip_toy(&cfg.toy.clone().unwrap_or_default(), &mut rec)?;
            rec.finish("theory", cfg, Vec::new(), notes)
        }
        k => Err(Error::validation("kind", format!("{} is not a theory experiment", k.name()))),
    }
}

fn set_path(value: &mut serde_json::Value, path: &str, new: serde_json::Value) -> Result<()> {
    let mut cur = value;
    for key in path.split('.') {
        cur = cur
            .as_object_mut()
            .and_then(|m| m.get_mut(key))
            .ok_or_else(|| Error::validation("sweep.grid", format!("{path} does not exist in the config")))?;
    }
    *cur = new;
    Ok(())
}

/// One grid cell: the overrides and the resulting standalone config.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub id: String,
    pub overrides: BTreeMap<String, serde_json::Value>,
    pub config: ExperimentConfig,
}

pub fn expand_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepCell>> {
    let sweep = cfg.sweep.as_ref().ok_or_else(|| Error::validation("sweep", "config has no sweep section"))?;
    let mut base = serde_json::to_value(cfg)?;
    base["sweep"] = serde_json::Value::Null;
    base["out_dir"] = serde_json::Value::Null;
    let mut combos: Vec<BTreeMap<String, serde_json::Value>> = vec![BTreeMap::new()];
    for (path, values) in &sweep.grid {
        combos = combos
            .into_iter()
            .flat_map(|c| {
                values.iter().map(move |v| {
                    let mut c = c.clone();
                    c.insert(path.clone(), v.clone());
                    c
                })
            })
            .collect();
    }
    combos
        .into_iter()
        .map(|overrides| {
            let mut v = base.clone();
            for (path, val) in &overrides {
                set_path(&mut v, path, val.clone())?;
            }
            let config = ExperimentConfig::from_value(v)?;
            Ok(SweepCell { id: config.hash()[..12].to_string(), overrides, config })
        })
        .collect()
}

fn run_cell(cell: &SweepCell, dir: &Path) -> Result<(RunManifest, bool)> {
    if let Ok(m) = RunManifest::load_verified(dir, "train") {
        if m.config_hash == cell.config.hash() {
            return Ok((m, true));
        }
    }
    cmd_train(&cell.config, dir).map(|m| (m, false))
}

/// Trains every grid cell (cached cells are reused) and writes a leaderboard
/// ordered by the configured metric. Failed cells are listed and the first
/// failure is returned after the leaderboard is written.
pub fn cmd_sweep(cfg: &ExperimentConfig, out: &Path, parallel: usize) -> Result<RunManifest> {
    let sweep = cfg.sweep.clone().ok_or_else(|| Error::validation("sweep", "config has no sweep section"))?;
    let cells = expand_sweep(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<(RunManifest, bool)>> =
        pool.install(|| cells.par_iter().map(|c| run_cell(c, &out.join("cells").join(&c.id))).collect());

    let mut rec = Recorder::new(out)?;
    let mut entries = Vec::new();
    let mut first_err = None;
    let mut notes = Vec::new();
    for (cell, res) in cells.iter().zip(results) {
        let (status, mean, sd) = match res {
            Ok((m, cached)) => {
                rec.files.push(out.join("cells").join(&cell.id).join(RunManifest::file_name("train")));
                let rows: Vec<Summary> = m.summary.iter().map(|s| s.metrics.clone()).collect();
                let (mean, sd) = aggregate(&rows);
                match mean.get(&sweep.metric) {
                    Some(&v) => {
                        if cached {
                            notes.push(format!("cell {} reused from cache", cell.id));
                        }
                        ("ok".to_string(), v, sd[&sweep.metric])
                    }
                    None => {
                        first_err.get_or_insert(Error::validation("sweep.metric", format!("{} is not a summary metric", sweep.metric)));
                        ("missing metric".to_string(), f64::NAN, f64::NAN)
                    }
                }
            }
            Err(e) => {
                notes.push(format!("cell {} failed: {e}", cell.id));
                let status = format!("failed: {e}");
                first_err.get_or_insert(e);
                (status, f64::NAN, f64::NAN)
            }
        };
        entries.push((cell, status, mean, sd));
    }
    entries.sort_by(|a, b| {
        let key = |v: f64| if sweep.descending { -v } else { v };
        match (a.2.is_nan(), b.2.is_nan()) {
            (false, false) => key(a.2).total_cmp(&key(b.2)),
            (x, y) => x.cmp(&y),
        }
        .then_with(|| a.0.id.cmp(&b.0.id))
    });
    let paths: Vec<&String> = sweep.grid.keys().collect();
    let mut header = vec!["rank".to_string(), "cell".to_string(), "status".to_string()];
    header.extend(paths.iter().map(|p| p.to_string()));
    header.push(format!("{}_mean", sweep.metric));
    header.push(format!("{}_sd", sweep.metric));
    let rows: Vec<Vec<String>> = entries
        .iter()
        .enumerate()
        .map(|(i, (cell, status, mean, sd))| {
            let mut row = vec![(i + 1).to_string(), cell.id.clone(), status.clone()];
            row.extend(paths.iter().map(|p| cell.overrides[*p].to_string()));
            let num = |v: f64| if v.is_nan() { String::new() } else { f(v) };
            row.push(num(*mean));
            row.push(num(*sd));
            row
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    rec.table("leaderboard.csv", &header, rows)?;
    let manifest = rec.finish("sweep", cfg, Vec::new(), notes)?;
    match first_err {
        Some(e) => Err(e),
        None => Ok(manifest),
    }
}
