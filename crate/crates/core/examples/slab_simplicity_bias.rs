//! Slab data: a linear coordinate and a slab coordinate both separate the
//! classes. Randomizing one coordinate at a time shows which one a trained
//! network relies on, and the l1 flip margin shows how robust it is.

use cmid::datagen::{gen_slab, SlabSpec};
use cmid::eval::{decision_grid, l1_flip_margins, metrics, randomize_coord_accuracy};
use cmid::models::ModelKind;
use cmid::trainers::{train_erm, Optimizer, TrainConfig};

fn main() -> anyhow::Result<()> {
    let spec = SlabSpec { n_train: 5000, n_test: 2000, ..SlabSpec::three_slab() };
    let (train, test) = gen_slab(&spec, 0)?;
    let cfg = TrainConfig {
        optimizer: Optimizer::SgdMomentum { beta: 0.9 },
        lr: 0.01,
        batch_size: 100,
        weight_decay: 5e-4,
        epochs: 30,
        seed: 0,
        shuffle: true,
    };
    let model = train_erm(ModelKind::Mlp1 { width: 100 }, &train, &cfg)?.model;

    println!("test accuracy {:.3}", metrics(&model, &test)?.accuracy);
    println!("linear coordinate randomized: {:.3}", randomize_coord_accuracy(&model, &test, 0, 0)?);
    println!("slab coordinate randomized:   {:.3}", randomize_coord_accuracy(&model, &test, 1, 0)?);

    let first = test.subset(&(0..200).collect::<Vec<_>>());
    let margins = l1_flip_margins(&model, &first)?;
    println!("mean l1 flip margin on 200 points: {:.4} ({} censored)", margins.mean, margins.censored);

    let grid = decision_grid(&model, [(-1.0, 1.0), (-1.0, 1.0)], 9)?;
    println!("predicted class on a 9x9 lattice (x: linear, y: slab):");
    for r in (0..grid.ys.len()).rev() {
        println!("  {}", (0..grid.xs.len()).map(|c| if grid.at(r, c) == 1 { '#' } else { '.' }).collect::<String>());
    }
    Ok(())
}
