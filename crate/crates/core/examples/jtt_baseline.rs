//! Just-train-twice: an identification model's training errors are upweighted
//! for the second run. Compared with ERM on the two-feature data.

use std::path::Path;

use cmid::runner::{generate, summarize, train_seed, ExperimentConfig, Method};

fn main() -> anyhow::Result<()> {
    let preset = Path::new(env!("CARGO_MANIFEST_DIR")).join("presets/two_feature.json");
    let base = ExperimentConfig::load(&preset)?;
    let splits = generate(&base, 0)?;
    for method in [Method::Erm, Method::Jtt, Method::Cmid] {
        let cfg = ExperimentConfig { method: Some(method), ..base.clone() };
        let run = train_seed(&cfg, 0, &splits)?;
        let s = summarize(&cfg, &run.run.model, &run.run.log, &splits)?;
        println!(
            "{method:?}: iid {:.1}%, ood {:.1}%, ood worst group {:.1}%",
            100.0 * s["iid_acc"],
            100.0 * s["ood_acc"],
            100.0 * s["ood_worst_group"]
        );
    }
    Ok(())
}
