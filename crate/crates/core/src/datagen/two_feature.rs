use serde::{Deserialize, Serialize};

use super::{check_count, check_positive, check_prob, flip, signed, xor_pair, Dataset, DatasetMeta};
use crate::error::{Error, Result};
use crate::math::{RngStream, Tensor};

/// Vector analog of colored digits: an XOR-encoded invariant block, a ±1
/// "color" whose agreement with the label depends on the environment, and an
/// optional second spurious scalar ("patch").
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoFeatureSpec {
    pub label_noise: f64,
    pub pe_train: Vec<f64>,
    pub pe_iid_test: f64,
    pub pe_ood_test: f64,
    pub with_patch: bool,
    pub mu_inv: f64,
    pub sigma_inv: f64,
    pub n_per_env: usize,
    pub n_test: usize,
}

impl Default for TwoFeatureSpec {
    fn default() -> Self {
        TwoFeatureSpec {
            label_noise: 0.25,
            pe_train: vec![0.1, 0.2],
            pe_iid_test: 0.1,
            pe_ood_test: 0.9,
            with_patch: false,
            mu_inv: 1.0,
            sigma_inv: 0.25,
            n_per_env: 5000,
            n_test: 10_000,
        }
    }
}

impl TwoFeatureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.label_noise) {
            return Err(Error::validation("label_noise", format!("{} must lie in [0, 0.5)", self.label_noise)));
        }
        if self.pe_train.is_empty() {
            return Err(Error::validation("pe_train", "need at least one training environment"));
        }
        for (i, &p) in self.pe_train.iter().enumerate() {
            check_prob(&format!("pe_train[{i}]"), p)?;
        }
        check_prob("pe_iid_test", self.pe_iid_test)?;
        check_prob("pe_ood_test", self.pe_ood_test)?;
        check_positive("mu_inv", self.mu_inv)?;
        if !(self.sigma_inv >= 0.0 && self.sigma_inv.is_finite()) {
            return Err(Error::validation("sigma_inv", "must be nonnegative and finite"));
        }
        check_count("n_per_env", self.n_per_env)?;
        check_count("n_test", self.n_test)
    }

    pub fn dim(&self) -> usize {
        if self.with_patch {
            4
        } else {
            3
        }
    }
}

fn sample(spec: &TwoFeatureSpec, pe: f64, n: usize, rng: &mut RngStream, x: &mut Vec<f64>, y: &mut Vec<usize>) -> Result<()> {
    for _ in 0..n {
        let z = rng.below(2);
        let label = if rng.bernoulli(spec.label_noise)? { 1 - z } else { z };
        x.extend(xor_pair(rng, z, spec.mu_inv, spec.sigma_inv));
        x.push(flip(rng, signed(label), pe)?);
        if spec.with_patch {
            x.push(flip(rng, signed(label), pe)?);
        }
        y.push(label);
    }
    Ok(())
}

/// Groups are the four (label, color) cells: `2·y + [color > 0]`.
fn color_groups(x: &Tensor, y: &[usize]) -> Vec<usize> {
    y.iter().enumerate().map(|(i, &yi)| 2 * yi + usize::from(x.get(i, 2) > 0.0)).collect()
}

/// Returns `(train, iid_test, ood_test)`. Training rows carry environment ids
/// in the order of `pe_train`; columns are `[h1, h2, color(, patch)]`.
pub fn gen_two_feature(spec: &TwoFeatureSpec, seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    spec.validate()?;
    let d = spec.dim();
    let build = |x: Vec<f64>, y: Vec<usize>, name: &str| -> Result<Dataset> {
        let x = Tensor::matrix(y.len(), d, x)?;
        let groups = color_groups(&x, &y);
        Dataset::new(x, y, 2, DatasetMeta::new(name, spec, seed))?.with_groups(groups)
    };

    let (mut x, mut y, mut envs) = (Vec::new(), Vec::new(), Vec::new());
    for (e, &pe) in spec.pe_train.iter().enumerate() {
        let mut rng = RngStream::derive(seed, e as u64);
        sample(spec, pe, spec.n_per_env, &mut rng, &mut x, &mut y)?;
        envs.extend(std::iter::repeat_n(e, spec.n_per_env));
    }
    let train = build(x, y, "two_feature_train")?.with_envs(envs)?;

    let test = |index: u64, pe: f64, name: &str| -> Result<Dataset> {
        let (mut x, mut y) = (Vec::new(), Vec::new());
        sample(spec, pe, spec.n_test, &mut RngStream::derive(seed, 1000 + index), &mut x, &mut y)?;
        build(x, y, name)
    };
    let iid = test(0, spec.pe_iid_test, "two_feature_iid")?;
    let ood = test(1, spec.pe_ood_test, "two_feature_ood")?;
    Ok((train, iid, ood))
}
