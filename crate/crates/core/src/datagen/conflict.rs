use serde::{Deserialize, Serialize};

use super::{check_count, check_positive, signed, xor_pair, Dataset, DatasetMeta};
use crate::error::{Error, Result};
use crate::math::{RngStream, Tensor};

/// Cue-conflict data: a simple scalar cue and a complex XOR cue. They agree
/// on the training split and disagree on every evaluation sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictSpec {
    pub n_train: usize,
    pub n_eval: usize,
    pub simple_scale: f64,
    pub simple_noise: f64,
    pub complex_scale: f64,
    pub complex_noise: f64,
}

impl Default for ConflictSpec {
    fn default() -> Self {
        ConflictSpec { n_train: 4000, n_eval: 2000, simple_scale: 1.0, simple_noise: 0.5, complex_scale: 1.0, complex_noise: 0.25 }
    }
}

impl ConflictSpec {
    pub fn validate(&self) -> Result<()> {
        check_count("n_train", self.n_train)?;
        check_count("n_eval", self.n_eval)?;
        check_positive("simple_scale", self.simple_scale)?;
        check_positive("complex_scale", self.complex_scale)?;
        for (field, v) in [("simple_noise", self.simple_noise), ("complex_noise", self.complex_noise)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::validation(field, "must be nonnegative and finite"));
            }
        }
        Ok(())
    }
}

/// Columns are `[simple, xor_1, xor_2]`. The evaluation split stores the
/// simple-cue label as extra `la` and the complex-cue label as `lb`; its
/// nominal label `y` is `lb`.
pub fn gen_conflict(spec: &ConflictSpec, seed: u64) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let split = |index: u64, n: usize, conflicting: bool, name: &str| -> Result<Dataset> {
        let mut rng = RngStream::derive(seed, index);
        let (mut x, mut la, mut lb) = (Vec::with_capacity(3 * n), Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            let a = rng.below(2);
            let b = if conflicting { 1 - a } else { a };
            x.push(rng.normal(signed(a) * spec.simple_scale, spec.simple_noise));
            x.extend(xor_pair(&mut rng, b, spec.complex_scale, spec.complex_noise));
            la.push(a as i64);
            lb.push(b as i64);
        }
        let y = lb.iter().map(|&b| b as usize).collect();
        let mut meta = DatasetMeta::new(name, spec, seed);
        meta.extras.insert("la".into(), la);
        meta.extras.insert("lb".into(), lb);
        Dataset::new(Tensor::matrix(n, 3, x)?, y, 2, meta)
    };
    Ok((split(0, spec.n_train, false, "conflict_train")?, split(1, spec.n_eval, true, "conflict_eval")?))
}
