//! Cue-conflict evaluation: training data carries a simple and a complex cue
//! that agree; on the evaluation split they disagree, and the shape-bias
//! analog reports how often the model follows the complex one.

use std::path::Path;

use cmid::eval::shape_bias;
use cmid::runner::{generate, train_seed, ExperimentConfig, Method};

fn main() -> anyhow::Result<()> {
    let preset = Path::new(env!("CARGO_MANIFEST_DIR")).join("presets/conflict.json");
    let base = ExperimentConfig::load(&preset)?;
    let splits = generate(&base, 0)?;
    let eval = splits.get("eval").expect("conflict data has an eval split");
    for method in [Method::Erm, Method::Cmid] {
        let cfg = ExperimentConfig { method: Some(method), ..base.clone() };
        let run = train_seed(&cfg, 0, &splits)?;
        let sb = shape_bias(&run.run.model, eval)?;
        println!(
            "{method:?}: shape bias {:.1} ({} complex, {} simple, {} neither)",
            sb.value, sb.complex_matches, sb.simple_matches, sb.neither
        );
    }
    Ok(())
}
