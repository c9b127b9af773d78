use serde::{Deserialize, Serialize};

use super::{check_count, check_prob, flip, signed, Dataset, DatasetMeta};
use crate::error::{Error, Result};
use crate::math::{RngStream, Tensor};

/// Confounded-subgroup data: the one-hot group identity predicts the label
/// at train time with the relationship reversed at test time, while
/// `k_legit` weak cues stay stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupSpec {
    pub p_pos_train: [f64; 4],
    pub p_pos_test: [f64; 4],
    pub group_proportions: [f64; 4],
    pub n_train: usize,
    pub n_test: usize,
    pub k_legit: usize,
    pub legit_flip: f64,
}

impl Default for SubgroupSpec {
    fn default() -> Self {
        SubgroupSpec {
            p_pos_train: [0.94, 0.06, 0.94, 0.06],
            p_pos_test: [0.06, 0.94, 0.06, 0.94],
            group_proportions: [0.25; 4],
            n_train: 10_000,
            n_test: 10_000,
            k_legit: 6,
            legit_flip: 0.35,
        }
    }
}

impl SubgroupSpec {
    pub fn validate(&self) -> Result<()> {
        for i in 0..4 {
            check_prob(&format!("p_pos_train[{i}]"), self.p_pos_train[i])?;
            check_prob(&format!("p_pos_test[{i}]"), self.p_pos_test[i])?;
            check_prob(&format!("group_proportions[{i}]"), self.group_proportions[i])?;
        }
        let total: f64 = self.group_proportions.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::validation("group_proportions", format!("sum to {total}, expected 1")));
        }
        check_prob("legit_flip", self.legit_flip)?;
        check_count("n_train", self.n_train)?;
        check_count("n_test", self.n_test)
    }

    pub fn dim(&self) -> usize {
        4 + self.k_legit
    }
}

fn draw_group(rng: &mut RngStream, props: &[f64; 4]) -> usize {
    let u = rng.next_f64();
    let mut acc = 0.0;
    for (g, p) in props.iter().enumerate() {
        acc += p;
        if u < acc {
            return g;
        }
    }
    // rounding in the cumulative sum; fall back to the last populated group
    props.iter().rposition(|&p| p > 0.0).unwrap_or(3)
}

fn split(spec: &SubgroupSpec, table: &[f64; 4], n: usize, rng: &mut RngStream, name: &str, seed: u64) -> Result<Dataset> {
    let d = spec.dim();
    let (mut x, mut y, mut groups) = (Vec::with_capacity(n * d), Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let g = draw_group(rng, &spec.group_proportions);
        let label = usize::from(rng.bernoulli(table[g])?);
        x.extend((0..4).map(|j| if j == g { 1.0 } else { 0.0 }));
        for _ in 0..spec.k_legit {
            x.push(flip(rng, signed(label), spec.legit_flip)?);
        }
        y.push(label);
        groups.push(g);
    }
    Dataset::new(Tensor::matrix(n, d, x)?, y, 2, DatasetMeta::new(name, spec, seed))?.with_groups(groups)
}

/// Returns `(train, ood_test)`, both annotated with group ids.
pub fn gen_subgroup(spec: &SubgroupSpec, seed: u64) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let train = split(spec, &spec.p_pos_train, spec.n_train, &mut RngStream::derive(seed, 0), "subgroup_train", seed)?;
    let test = split(spec, &spec.p_pos_test, spec.n_test, &mut RngStream::derive(seed, 1), "subgroup_test", seed)?;
    Ok((train, test))
}

/// Held-out split from the training distribution, `n_test` rows, on its own
/// stream so the train and OOD splits are unchanged.
pub fn gen_subgroup_iid(spec: &SubgroupSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    split(spec, &spec.p_pos_train, spec.n_test, &mut RngStream::derive(seed, 2), "subgroup_iid", seed)
}
