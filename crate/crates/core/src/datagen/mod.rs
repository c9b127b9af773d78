//! Seeded generators for the synthetic dataset families.
//!
//! Every generator is a pure function of `(spec, seed)`. Multi-split
//! generators draw each split from its own derived stream, so changing the
//! size of one split never perturbs another.

mod conflict;
mod dataset;
mod gaussian;
mod slab;
mod subgroup;
mod two_feature;

pub use conflict::{gen_conflict, ConflictSpec};
pub use dataset::{format_f64, hash_json, Dataset, DatasetMeta};
pub use gaussian::{gen_gaussian, GaussianSpec, ThirdFeature};
pub use slab::{gen_slab, slab_layout, SlabSpec, SlabVariant};
pub use subgroup::{gen_subgroup, gen_subgroup_iid, SubgroupSpec};
pub use two_feature::{gen_two_feature, TwoFeatureSpec};

use crate::error::{Error, Result};
use crate::math::RngStream;

pub(crate) fn check_prob(field: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::validation(field, format!("{p} is not a probability in [0, 1]")))
    }
}

pub(crate) fn check_positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(field, format!("{v} must be positive and finite")))
    }
}

pub(crate) fn check_count(field: &str, n: usize) -> Result<()> {
    if n >= 1 {
        Ok(())
    } else {
        Err(Error::validation(field, "count must be at least 1"))
    }
}

/// `2y - 1` for a {0,1} label.
pub(crate) fn signed(y: usize) -> f64 {
    if y == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Two noisy coordinates whose sign agreement encodes `z`: the sign pattern is
/// (+,+) or (−,−) when `z == 1` and (+,−) or (−,+) otherwise.
pub(crate) fn xor_pair(rng: &mut RngStream, z: usize, scale: f64, noise: f64) -> [f64; 2] {
    let s1 = if rng.below(2) == 1 { 1.0 } else { -1.0 };
    let s2 = if z == 1 { s1 } else { -s1 };
    [rng.normal(s1 * scale, noise), rng.normal(s2 * scale, noise)]
}

/// `value` with its sign flipped with probability `p`.
pub(crate) fn flip(rng: &mut RngStream, value: f64, p: f64) -> Result<f64> {
    Ok(if rng.bernoulli(p)? { -value } else { value })
}
