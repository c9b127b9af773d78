//! Expands a hyperparameter grid, trains each cell and prints the
//! leaderboard written to a temporary directory.

use std::path::Path;

use cmid::runner::{cmd_sweep, expand_sweep, ExperimentConfig};

fn main() -> anyhow::Result<()> {
    let preset = Path::new(env!("CARGO_MANIFEST_DIR")).join("presets/two_feature.json");
    let mut value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(preset)?)?;
    // a smaller problem keeps the demo quick
    value["spec"]["n_per_env"] = 1000.into();
    value["spec"]["n_test"] = 2000.into();
    value["models"]["final"]["width"] = 64.into();
    value["seeds"] = serde_json::json!([0, 1]);
    let cfg = ExperimentConfig::from_value(value)?;

    for cell in expand_sweep(&cfg)? {
        println!("cell {}: {:?}", cell.id, cell.overrides);
    }
    let out = std::env::temp_dir().join("cmid-sweep-example");
    cmd_sweep(&cfg, &out, 1)?;
    print!("{}", std::fs::read_to_string(out.join("leaderboard.csv"))?);
    Ok(())
}
