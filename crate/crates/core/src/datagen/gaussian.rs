use serde::{Deserialize, Serialize};

use super::{check_count, check_positive, Dataset, DatasetMeta};
use crate::error::{Error, Result};
use crate::math::{RngStream, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThirdFeature {
    pub mu3: f64,
    pub sigma3: f64,
    pub eta_prime: f64,
}

/// Two (or three) conditionally independent Gaussian features: an invariant
/// one centred at `y·mu1` and spurious ones centred at `a·mu2` where the
/// attribute `a` agrees with `y` with probability `eta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub mu1: f64,
    pub sigma1: f64,
    pub mu2: f64,
    pub sigma2: f64,
    pub eta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub third: Option<ThirdFeature>,
    pub n: usize,
}

fn check_eta(field: &str, eta: f64) -> Result<()> {
    if eta > 0.5 && eta <= 1.0 {
        Ok(())
    } else {
        Err(Error::validation(field, format!("{eta} must lie in (0.5, 1]")))
    }
}

impl GaussianSpec {
    pub fn validate(&self) -> Result<()> {
        check_positive("mu1", self.mu1)?;
        check_positive("sigma1", self.sigma1)?;
        check_positive("mu2", self.mu2)?;
        check_positive("sigma2", self.sigma2)?;
        check_eta("eta", self.eta)?;
        if let Some(t) = &self.third {
            check_positive("mu3", t.mu3)?;
            check_positive("sigma3", t.sigma3)?;
            check_eta("eta_prime", t.eta_prime)?;
        }
        check_count("n", self.n)
    }
}

/// Samples the Gaussian family. Labels are stored as {0,1}; the signed label
/// and the spurious attributes are kept in the `y_pm`, `a` (and `a3`) extras.
pub fn gen_gaussian(spec: &GaussianSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = RngStream::new(seed);
    let d = if spec.third.is_some() { 3 } else { 2 };
    let mut x = Vec::with_capacity(spec.n * d);
    let (mut y, mut y_pm, mut a_col, mut a3_col) = (vec![], vec![], vec![], vec![]);
    for _ in 0..spec.n {
        let yi: i64 = if rng.below(2) == 1 { 1 } else { -1 };
        let s = if rng.bernoulli(spec.eta)? { 1 } else { -1 };
        let a = yi * s;
        x.push(rng.normal(yi as f64 * spec.mu1, spec.sigma1));
        x.push(rng.normal(a as f64 * spec.mu2, spec.sigma2));
        if let Some(t) = &spec.third {
            let s3 = if rng.bernoulli(t.eta_prime)? { 1 } else { -1 };
            let a3 = yi * s3;
            x.push(rng.normal(a3 as f64 * t.mu3, t.sigma3));
            a3_col.push(a3);
        }
        y.push(usize::from(yi == 1));
        y_pm.push(yi);
        a_col.push(a);
    }
    let mut meta = DatasetMeta::new("gaussian", spec, seed);
    meta.extras.insert("y_pm".into(), y_pm);
    meta.extras.insert("a".into(), a_col);
    if spec.third.is_some() {
        meta.extras.insert("a3".into(), a3_col);
    }
    Dataset::new(Tensor::matrix(spec.n, d, x)?, y, 2, meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig4(n: usize, eta: f64) -> GaussianSpec {
        GaussianSpec { mu1: 5.0, sigma1: 1.5, mu2: 5.0, sigma2: 0.5, eta, third: None, n }
    }

    #[test]
    fn eta_one_makes_attribute_equal_label() {
        let ds = gen_gaussian(&fig4(500, 1.0), 1).unwrap();
        assert_eq!(ds.extra("a").unwrap(), ds.extra("y_pm").unwrap());
    }

    #[test]
    fn invariant_mean_matches_fig4_setup() {
        let ds = gen_gaussian(&fig4(2000, 0.9), 4).unwrap();
        let pos: Vec<f64> = (0..ds.len()).filter(|&i| ds.y[i] == 1).map(|i| ds.x.get(i, 0)).collect();
        let mean = pos.iter().sum::<f64>() / pos.len() as f64;
        assert!((mean - 5.0).abs() < 3.0 * 1.5 / (1000f64).sqrt(), "{mean}");
    }

    #[test]
    fn agreement_rate_tracks_eta() {
        let ds = gen_gaussian(&fig4(10_000, 0.9), 8).unwrap();
        let a = ds.extra("a").unwrap();
        let y = ds.extra("y_pm").unwrap();
        let agree = a.iter().zip(y).filter(|(a, y)| a == y).count() as f64 / 1e4;
        assert!((agree - 0.9).abs() < 0.01, "{agree}");
    }

    #[test]
    fn features_uncorrelated_given_label() {
        let ds = gen_gaussian(&fig4(10_000, 0.8), 2).unwrap();
        for class in 0..2 {
            let rows: Vec<usize> = (0..ds.len()).filter(|&i| ds.y[i] == class).collect();
            let col = |j: usize| rows.iter().map(|&i| ds.x.get(i, j)).collect::<Vec<_>>();
            let (u, v) = (col(0), col(1));
            let n = u.len() as f64;
            let (mu, mv) = (u.iter().sum::<f64>() / n, v.iter().sum::<f64>() / n);
            let cov: f64 = u.iter().zip(&v).map(|(a, b)| (a - mu) * (b - mv)).sum::<f64>() / n;
            let su = (u.iter().map(|a| (a - mu).powi(2)).sum::<f64>() / n).sqrt();
            let sv = (v.iter().map(|b| (b - mv).powi(2)).sum::<f64>() / n).sqrt();
            assert!((cov / (su * sv)).abs() < 0.05);
        }
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(gen_gaussian(&fig4(10, 0.5), 0).is_err());
        let mut s = fig4(10, 0.9);
        s.sigma2 = 0.0;
        assert!(gen_gaussian(&s, 0).is_err());
        s = fig4(10, 0.9);
        s.third = Some(ThirdFeature { mu3: 1.0, sigma3: 1.0, eta_prime: 0.4 });
        assert!(matches!(gen_gaussian(&s, 0), Err(Error::Validation { field, .. }) if field == "eta_prime"));
    }

    #[test]
    fn deterministic_per_seed() {
        let s = GaussianSpec { third: Some(ThirdFeature { mu3: 2.0, sigma3: 1.0, eta_prime: 0.7 }), ..fig4(100, 0.9) };
        assert_eq!(gen_gaussian(&s, 3).unwrap(), gen_gaussian(&s, 3).unwrap());
        assert_eq!(gen_gaussian(&s, 3).unwrap().dim(), 3);
    }
}
