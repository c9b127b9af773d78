//! Reproducible experiment runner: every command is a pure function of one
//! JSON config (plus a seed offset) and writes CSV tables and a JSON manifest.

mod commands;
mod config;
mod pipeline;

pub use commands::{
    candidate_name, cmd_eval, cmd_gen, cmd_sweep, cmd_theory, cmd_train, expand_sweep, load_or_generate, prepare,
    ManifestFile, RunManifest, RunOptions, SeedSummary, SweepCell, TOOL_VERSION,
};
pub use config::{
    DataSpec, EvalConfig, ExperimentConfig, ExperimentKind, Fig4Settings, Fig5Settings, Method, Models, Select,
    SweepConfig, TheorySettings, ToySettings,
};
pub use pipeline::{aggregate, generate, spec_hash, summarize, train_seed, SeedRun, Splits, Summary};
