use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::{hash_json, ConflictSpec, SlabSpec, SlabVariant, SubgroupSpec, TwoFeatureSpec};
use crate::error::{Error, Result};
use crate::models::ModelKind;
use crate::trainers::{CmidConfig, JttConfig, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Slab3,
    Slab5,
    TwoFeature,
    TwoFeaturePatch,
    Subgroup,
    Conflict,
    GaussianTheory,
    MipToy,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Slab3 => "slab3",
            ExperimentKind::Slab5 => "slab5",
            ExperimentKind::TwoFeature => "two_feature",
            ExperimentKind::TwoFeaturePatch => "two_feature_patch",
            ExperimentKind::Subgroup => "subgroup",
            ExperimentKind::Conflict => "conflict",
            ExperimentKind::GaussianTheory => "gaussian_theory",
            ExperimentKind::MipToy => "mip_toy",
        }
    }

    /// Kinds that generate data and train models, as opposed to theory checks.
    pub fn trains(self) -> bool {
        !matches!(self, ExperimentKind::GaussianTheory | ExperimentKind::MipToy)
    }

    pub fn is_slab(self) -> bool {
        matches!(self, ExperimentKind::Slab3 | ExperimentKind::Slab5)
    }

    /// Names of the generated splits; the first is always the training split.
    pub fn split_names(self) -> &'static [&'static str] {
        match self {
            ExperimentKind::Slab3 | ExperimentKind::Slab5 => &["train", "test"],
            ExperimentKind::TwoFeature | ExperimentKind::TwoFeaturePatch | ExperimentKind::Subgroup => {
                &["train", "iid", "ood"]
            }
            ExperimentKind::Conflict => &["train", "eval"],
            ExperimentKind::GaussianTheory | ExperimentKind::MipToy => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Erm,
    Cmid,
    Jtt,
}

/// Model selection over logged epochs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Select {
    #[default]
    Last,
    MinTrainValGap,
    MaxValWorstGroup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Models {
    /// Reference model of the CMI penalty; also used for probe trajectories.
    #[serde(default)]
    pub simple: Option<ModelKind>,
    #[serde(rename = "final")]
    pub final_model: ModelKind,
}

fn default_resolution() -> usize {
    100
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_margin_samples() -> usize {
    1000
}

fn default_grid_coords() -> [usize; 2] {
    [0, 1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default = "default_resolution")]
    pub grid_resolution: usize,
    #[serde(default = "default_grid_coords")]
    pub grid_coords: [usize; 2],
    /// `[[x_lo, x_hi], [y_lo, y_hi]]`; the training split's range when absent.
    #[serde(default)]
    pub grid_bounds: Option<[[f64; 2]; 2]>,
    /// Coordinates permuted across samples in the randomization test; slab
    /// kinds default to both informative coordinates.
    #[serde(default)]
    pub randomize_coords: Option<Vec<usize>>,
    #[serde(default = "default_seeds")]
    pub randomize_seeds: Vec<u64>,
    #[serde(default)]
    pub margins: bool,
    /// Margins use the first this-many rows of the held-out split.
    #[serde(default = "default_margin_samples")]
    pub margin_samples: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            grid_resolution: default_resolution(),
            grid_coords: default_grid_coords(),
            grid_bounds: None,
            randomize_coords: None,
            randomize_seeds: default_seeds(),
            margins: false,
            margin_samples: default_margin_samples(),
        }
    }
}

fn default_draws() -> usize {
    20
}

fn default_tol_2f() -> f64 {
    1e-4
}

fn default_tol_3f() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig4Settings {
    pub mu1: f64,
    pub sigma1: f64,
    pub mu2: f64,
    pub sigma2: f64,
    pub etas: Vec<f64>,
    pub c: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fig5Settings {
    pub mu: f64,
    pub eta: f64,
    pub cs: Vec<f64>,
    pub variance_ratios: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheorySettings {
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default = "default_tol_2f")]
    pub tolerance_2f: f64,
    #[serde(default = "default_tol_3f")]
    pub tolerance_3f: f64,
    /// Use this constraint scale for every draw instead of sampling it.
    #[serde(default)]
    pub fixed_c: Option<f64>,
    #[serde(default)]
    pub fig4: Option<Fig4Settings>,
    #[serde(default)]
    pub fig5: Option<Fig5Settings>,
}

impl Default for TheorySettings {
    fn default() -> Self {
        TheorySettings {
            draws: default_draws(),
            tolerance_2f: default_tol_2f(),
            tolerance_3f: default_tol_3f(),
            fixed_c: None,
            fig4: None,
            fig5: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToySettings {
    pub env_weights: [f64; 2],
    pub phi_flip: f64,
    pub a_flip: [f64; 2],
    pub c_flip: f64,
}

impl Default for ToySettings {
    fn default() -> Self {
        ToySettings { env_weights: [0.5, 0.5], phi_flip: 0.1, a_flip: [0.2, 0.45], c_flip: 0.1 }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Dotted config paths (e.g. `cmid.lambda_c`) mapped to candidate values.
    pub grid: BTreeMap<String, Vec<serde_json::Value>>,
    /// Summary metric that orders the leaderboard, e.g. `ood_acc`.
    pub metric: String,
    #[serde(default = "default_true")]
    pub descending: bool,
}

/// The parsed, validated generator spec of a training kind.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSpec {
    Slab(SlabSpec),
    TwoFeature(TwoFeatureSpec),
    Subgroup(SubgroupSpec),
    Conflict(ConflictSpec),
}

/// One experiment: what data, which method and models, how to train, and
/// which seeds to run. A single JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub spec: serde_json::Value,
    #[serde(default)]
    pub method: Option<Method>,
    #[serde(default)]
    pub models: Option<Models>,
    /// Training settings of the final model (or the only model).
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub simple_train: Option<TrainConfig>,
    #[serde(default)]
    pub cmid: Option<CmidConfig>,
    #[serde(default)]
    pub jtt: Option<JttConfig>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub select: Select,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub theory: Option<TheorySettings>,
    #[serde(default)]
    pub toy: Option<ToySettings>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn missing(field: &str, kind: ExperimentKind) -> Error {
    Error::validation(field, format!("required for {} training", kind.name()))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Missing(path.to_path_buf()));
        }
        let cfg: ExperimentConfig = serde_json::from_reader(std::fs::File::open(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_value(value)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn data_spec(&self) -> Result<DataSpec> {
        let spec = self.spec.clone();
        let ds = match self.kind {
            ExperimentKind::Slab3 | ExperimentKind::Slab5 => {
                let s: SlabSpec = serde_json::from_value(spec)?;
                let want = if self.kind == ExperimentKind::Slab3 { SlabVariant::ThreeSlab } else { SlabVariant::FiveSlab };
                if s.variant != want {
                    return Err(Error::validation("variant", format!("{:?} does not match kind {}", s.variant, self.kind.name())));
                }
                s.validate()?;
                DataSpec::Slab(s)
            }
            ExperimentKind::TwoFeature | ExperimentKind::TwoFeaturePatch => {
                let s: TwoFeatureSpec = serde_json::from_value(spec)?;
                if s.with_patch != (self.kind == ExperimentKind::TwoFeaturePatch) {
                    return Err(Error::validation("with_patch", format!("{} does not match kind {}", s.with_patch, self.kind.name())));
                }
                s.validate()?;
                DataSpec::TwoFeature(s)
            }
            ExperimentKind::Subgroup => {
                let s: SubgroupSpec = serde_json::from_value(spec)?;
                s.validate()?;
                DataSpec::Subgroup(s)
            }
            ExperimentKind::Conflict => {
                let s: ConflictSpec = serde_json::from_value(spec)?;
                s.validate()?;
                DataSpec::Conflict(s)
            }
            ExperimentKind::GaussianTheory | ExperimentKind::MipToy => {
                return Err(Error::validation("kind", format!("{} has no datasets; use the theory command", self.kind.name())))
            }
        };
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::validation("seeds", "need at least one seed"));
        }
        if !self.kind.trains() {
            if let Some(t) = &self.theory {
                if t.draws == 0 {
                    return Err(Error::validation("draws", "need at least one draw"));
                }
            }
            return Ok(());
        }
        self.data_spec()?;
        let models = self.models.as_ref().ok_or_else(|| missing("models", self.kind))?;
        models.final_model.validate()?;
        let method = self.method.ok_or_else(|| missing("method", self.kind))?;
        self.train.as_ref().ok_or_else(|| missing("train", self.kind))?.validate()?;
        if let Some(s) = models.simple {
            s.validate()?;
            self.simple_train.as_ref().ok_or_else(|| missing("simple_train", self.kind))?.validate()?;
        }
        match method {
            Method::Erm => {}
            Method::Cmid => {
                if models.simple.is_none() {
                    return Err(missing("models.simple", self.kind));
                }
                self.cmid.as_ref().ok_or_else(|| missing("cmid", self.kind))?.validate()?;
            }
            Method::Jtt => self.jtt.as_ref().ok_or_else(|| missing("jtt", self.kind))?.validate()?,
        }
        if self.select != Select::Last && !self.kind.split_names().contains(&"iid") {
            return Err(Error::validation("select", format!("{} has no validation split", self.kind.name())));
        }
        if self.eval.grid_resolution < 2 {
            return Err(Error::validation("grid_resolution", "need at least 2 points per axis"));
        }
        if self.eval.grid_coords[0] == self.eval.grid_coords[1] {
            return Err(Error::validation("grid_coords", "coordinates must differ"));
        }
        if self.eval.randomize_seeds.is_empty() {
            return Err(Error::validation("randomize_seeds", "need at least one seed"));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.grid.is_empty() || sweep.grid.values().any(|v| v.is_empty()) {
                return Err(Error::validation("sweep.grid", "every swept path needs at least one value"));
            }
        }
        Ok(())
    }

    /// Shifts every seed by `offset`.
    pub fn with_seed_offset(mut self, offset: u64) -> Self {
        for s in &mut self.seeds {
            *s += offset;
        }
        self
    }

    /// SHA-256 of the canonical (key-sorted) JSON form, excluding the output
    /// directory.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("serializable config");
        if let Some(map) = v.as_object_mut() {
            map.remove("out_dir");
        }
        hash_json(&v)
    }

    pub fn randomize_coords(&self) -> Vec<usize> {
        match &self.eval.randomize_coords {
            Some(c) => c.clone(),
            None if self.kind.is_slab() => vec![0, 1],
            None => Vec::new(),
        }
    }
}
