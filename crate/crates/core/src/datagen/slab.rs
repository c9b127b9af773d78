use serde::{Deserialize, Serialize};

use super::{check_count, check_positive, Dataset, DatasetMeta};
use crate::error::{Error, Result};
use crate::math::{RngStream, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlabVariant {
    ThreeSlab,
    FiveSlab,
}

impl SlabVariant {
    pub fn slabs(self) -> usize {
        match self {
            SlabVariant::ThreeSlab => 3,
            SlabVariant::FiveSlab => 5,
        }
    }

    pub fn dim(self) -> usize {
        match self {
            SlabVariant::ThreeSlab => 10,
            SlabVariant::FiveSlab => 2,
        }
    }
}

/// Coordinate 0 is linearly separable with a margin; coordinate 1 splits into
/// alternating class slabs. The three-slab variant appends eight noise columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlabSpec {
    pub variant: SlabVariant,
    pub linear_margin: f64,
    pub slab_margin: f64,
    pub n_train: usize,
    pub n_test: usize,
}

impl SlabSpec {
    pub fn three_slab() -> Self {
        SlabSpec { variant: SlabVariant::ThreeSlab, linear_margin: 0.05, slab_margin: 0.075, n_train: 100_000, n_test: 50_000 }
    }

    pub fn five_slab() -> Self {
        SlabSpec { variant: SlabVariant::FiveSlab, linear_margin: 0.05, slab_margin: 0.14, n_train: 100_000, n_test: 50_000 }
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("linear_margin", self.linear_margin)?;
        check_positive("slab_margin", self.slab_margin)?;
        if self.linear_margin >= 1.0 {
            return Err(Error::validation("linear_margin", "must be below 1"));
        }
        let k = self.variant.slabs() as f64;
        if 2.0 * self.slab_margin * (k - 1.0) >= 2.0 {
            return Err(Error::validation("slab_margin", "gaps leave no room for the slabs"));
        }
        check_count("n_train", self.n_train)?;
        check_count("n_test", self.n_test)
    }
}

/// `(lo, hi, class)` for each slab along coordinate 1, from −1 upwards.
/// Equal-width slabs separated by gaps of `2·margin`, classes alternating
/// with class 1 outermost.
pub fn slab_layout(k: usize, margin: f64) -> Vec<(f64, f64, usize)> {
    let width = (2.0 - 2.0 * margin * (k as f64 - 1.0)) / k as f64;
    (0..k)
        .map(|j| {
            let lo = -1.0 + j as f64 * (width + 2.0 * margin);
            (lo, lo + width, usize::from(j % 2 == 0))
        })
        .collect()
}

fn sample(spec: &SlabSpec, n: usize, rng: &mut RngStream) -> (Vec<f64>, Vec<usize>) {
    let layout = slab_layout(spec.variant.slabs(), spec.slab_margin);
    let by_class: [Vec<(f64, f64)>; 2] = [0, 1].map(|c| layout.iter().filter(|s| s.2 == c).map(|s| (s.0, s.1)).collect());
    let d = spec.variant.dim();
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let class = rng.below(2);
        let x0 = if class == 1 {
            rng.uniform(spec.linear_margin, 1.0)
        } else {
            rng.uniform(-1.0, -spec.linear_margin)
        };
        let slabs = &by_class[class];
        let (lo, hi) = slabs[rng.below(slabs.len())];
        x.push(x0);
        x.push(rng.uniform(lo, hi));
        for _ in 2..d {
            x.push(rng.standard_normal());
        }
        y.push(class);
    }
    (x, y)
}

pub fn gen_slab(spec: &SlabSpec, seed: u64) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let d = spec.variant.dim();
    let split = |index: u64, n: usize, name: &str| -> Result<Dataset> {
        let (x, y) = sample(spec, n, &mut RngStream::derive(seed, index));
        Dataset::new(Tensor::matrix(n, d, x)?, y, 2, DatasetMeta::new(name, spec, seed))
    };
    Ok((split(0, spec.n_train, "slab_train")?, split(1, spec.n_test, "slab_test")?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(variant: SlabVariant) -> SlabSpec {
        let base = match variant {
            SlabVariant::ThreeSlab => SlabSpec::three_slab(),
            SlabVariant::FiveSlab => SlabSpec::five_slab(),
        };
        SlabSpec { n_train: 5000, n_test: 2000, ..base }
    }

    #[test]
    fn layout_spans_unit_interval() {
        for (k, m) in [(3, 0.075), (5, 0.14)] {
            let l = slab_layout(k, m);
            assert!((l[0].0 + 1.0).abs() < 1e-15);
            assert!((l[k - 1].1 - 1.0).abs() < 1e-12);
            for pair in l.windows(2) {
                assert!((pair[1].0 - pair[0].1 - 2.0 * m).abs() < 1e-12);
                assert_ne!(pair[0].2, pair[1].2);
            }
            assert_eq!(l[0].2, 1);
        }
    }

    #[test]
    fn three_slab_has_ten_columns() {
        let (train, test) = gen_slab(&small(SlabVariant::ThreeSlab), 0).unwrap();
        assert_eq!(train.dim(), 10);
        assert_eq!(test.len(), 2000);
    }

    #[test]
    fn no_sample_violates_margins() {
        for variant in [SlabVariant::ThreeSlab, SlabVariant::FiveSlab] {
            let spec = small(variant);
            let layout = slab_layout(variant.slabs(), spec.slab_margin);
            let (train, test) = gen_slab(&spec, 11).unwrap();
            for ds in [&train, &test] {
                for i in 0..ds.len() {
                    let (x0, x1, y) = (ds.x.get(i, 0), ds.x.get(i, 1), ds.y[i]);
                    assert!(x0.abs() >= 0.05);
                    assert_eq!(x0 > 0.0, y == 1);
                    let slab = layout.iter().find(|s| x1 >= s.0 && x1 <= s.1).expect("x1 inside a slab");
                    assert_eq!(slab.2, y);
                }
            }
        }
    }

    #[test]
    fn five_slab_gaps_are_empty() {
        let (train, _) = gen_slab(&small(SlabVariant::FiveSlab), 5).unwrap();
        let layout = slab_layout(5, 0.14);
        for pair in layout.windows(2) {
            let centre = (pair[0].1 + pair[1].0) / 2.0;
            for i in 0..train.len() {
                assert!((train.x.get(i, 1) - centre).abs() >= 0.14 - 1e-12);
            }
        }
    }

    #[test]
    fn splits_are_deterministic_and_distinct() {
        let spec = small(SlabVariant::FiveSlab);
        let (a, b) = gen_slab(&spec, 2).unwrap();
        let (a2, _) = gen_slab(&spec, 2).unwrap();
        assert_eq!(a, a2);
        assert_ne!(a.x.row(0), b.x.row(0));
    }

    #[test]
    fn rejects_oversized_margin() {
        let spec = SlabSpec { slab_margin: 0.3, ..small(SlabVariant::FiveSlab) };
        assert!(gen_slab(&spec, 0).is_err());
    }
}
