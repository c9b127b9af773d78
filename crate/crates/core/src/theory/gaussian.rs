use serde::{Deserialize, Serialize};

use crate::datagen::{gen_gaussian, GaussianSpec, ThirdFeature};
use crate::error::{Error, Result};

/// Population parameters of the Gaussian feature model. Labels are ±1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussParams {
    pub mu1: f64,
    pub sigma1: f64,
    pub mu2: f64,
    pub sigma2: f64,
    pub eta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub third: Option<ThirdFeature>,
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(field, format!("{v} must be positive and finite")))
    }
}

fn agreement(field: &str, eta: f64) -> Result<()> {
    if (0.5..=1.0).contains(&eta) {
        Ok(())
    } else {
        Err(Error::validation(field, format!("{eta} must lie in [0.5, 1]")))
    }
}

impl GaussParams {
    pub fn two(mu1: f64, sigma1: f64, mu2: f64, sigma2: f64, eta: f64) -> Self {
        GaussParams { mu1, sigma1, mu2, sigma2, eta, third: None }
    }

    pub fn with_third(self, mu3: f64, sigma3: f64, eta_prime: f64) -> Self {
        GaussParams { third: Some(ThirdFeature { mu3, sigma3, eta_prime }), ..self }
    }

    /// `eta = 0.5` is accepted here (the closed forms stay finite) even though
    /// the sampler requires a strictly informative attribute.
    pub fn validate(&self) -> Result<()> {
        positive("mu1", self.mu1)?;
        positive("sigma1", self.sigma1)?;
        positive("mu2", self.mu2)?;
        positive("sigma2", self.sigma2)?;
        agreement("eta", self.eta)?;
        if let Some(t) = &self.third {
            positive("mu3", t.mu3)?;
            positive("sigma3", t.sigma3)?;
            agreement("eta_prime", t.eta_prime)?;
        }
        Ok(())
    }

    pub fn features(&self) -> usize {
        if self.third.is_some() {
            3
        } else {
            2
        }
    }

    pub fn mu2p(&self) -> f64 {
        (2.0 * self.eta - 1.0) * self.mu2
    }

    pub fn sigma2p_sq(&self) -> f64 {
        self.sigma2 * self.sigma2 + self.mu2 * self.mu2 - self.mu2p().powi(2)
    }

    fn third(&self) -> Result<ThirdFeature> {
        self.third.ok_or_else(|| Error::validation("third", "the model has no third feature"))
    }

    pub fn mu3p(&self) -> Result<f64> {
        let t = self.third()?;
        Ok((2.0 * t.eta_prime - 1.0) * t.mu3)
    }

    pub fn sigma3p_sq(&self) -> Result<f64> {
        let t = self.third()?;
        Ok(t.sigma3 * t.sigma3 + t.mu3 * t.mu3 - self.mu3p()?.powi(2))
    }

    pub fn to_spec(&self, n: usize) -> GaussianSpec {
        GaussianSpec {
            mu1: self.mu1,
            sigma1: self.sigma1,
            mu2: self.mu2,
            sigma2: self.sigma2,
            eta: self.eta,
            third: self.third,
            n,
        }
    }
}

impl From<&GaussianSpec> for GaussParams {
    fn from(s: &GaussianSpec) -> Self {
        GaussParams { mu1: s.mu1, sigma1: s.sigma1, mu2: s.mu2, sigma2: s.sigma2, eta: s.eta, third: s.third }
    }
}

/// The CMI budget `nu = 0.5·log(1 + c²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConfig {
    pub c: f64,
}

impl TheoryConfig {
    pub fn new(c: f64) -> Result<Self> {
        let cfg = TheoryConfig { c };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        positive("c", self.c)
    }

    pub fn nu(&self) -> f64 {
        0.5 * (1.0 + self.c * self.c).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ClosedForm,
    NumericalOracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSolution {
    pub w: Vec<f64>,
    pub provenance: Provenance,
    pub binding: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl LinearSolution {
    pub(crate) fn closed(w: Vec<f64>, binding: bool) -> Self {
        LinearSolution { w, provenance: Provenance::ClosedForm, binding, warnings: Vec::new() }
    }
}

/// `E(w·X − y)²` in closed form.
pub fn population_mse(p: &GaussParams, w: &[f64]) -> Result<f64> {
    p.validate()?;
    if w.len() != p.features() {
        return Err(Error::Shape { op: "population_mse", shapes: vec![vec![w.len()], vec![p.features()]] });
    }
    let (w1, w2) = (w[0], w[1]);
    let m2 = p.mu2p();
    let mut loss = w1 * w1 * (p.sigma1.powi(2) + p.mu1.powi(2)) + w2 * w2 * (p.sigma2.powi(2) + p.mu2.powi(2)) + 1.0
        - 2.0 * w1 * p.mu1
        - 2.0 * w2 * m2
        + 2.0 * w1 * w2 * p.mu1 * m2;
    if let Some(t) = &p.third {
        let (w3, m3) = (w[2], p.mu3p()?);
        loss += w3 * w3 * (t.sigma3.powi(2) + t.mu3.powi(2)) - 2.0 * w3 * m3 + 2.0 * w1 * w3 * p.mu1 * m3
            + 2.0 * w2 * w3 * m2 * m3;
    }
    Ok(loss)
}

/// Unconstrained least-squares solution over all linear models.
pub fn erm_closed_form(p: &GaussParams) -> Result<LinearSolution> {
    p.validate()?;
    let mut snr = p.mu1.powi(2) / p.sigma1.powi(2) + p.mu2p().powi(2) / p.sigma2p_sq();
    if p.third.is_some() {
        snr += p.mu3p()?.powi(2) / p.sigma3p_sq()?;
    }
    let factor = 1.0 / (snr + 1.0);
    let mut w = vec![p.mu1 / p.sigma1.powi(2) * factor, p.mu2p() / p.sigma2p_sq() * factor];
    if p.third.is_some() {
        w.push(p.mu3p()? / p.sigma3p_sq()? * factor);
    }
    Ok(LinearSolution::closed(w, false))
}

/// Best single-feature model among features 1 and 2.
pub fn simple_erm(p: &GaussParams) -> Result<LinearSolution> {
    p.validate()?;
    let (s1, s2p) = (p.sigma1.powi(2), p.sigma2p_sq());
    let loss1 = s1 / (s1 + p.mu1.powi(2));
    let loss2 = s2p / (s2p + p.mu2p().powi(2));
    let w = if loss2 < loss1 {
        vec![0.0, p.mu2p() / (p.sigma2.powi(2) + p.mu2.powi(2))]
    } else {
        vec![p.mu1 / (s1 + p.mu1.powi(2)), 0.0]
    };
    Ok(LinearSolution::closed(w, false))
}

/// `I(w1·X1 + w2·X2; w2*·X2 | y)` for the two-feature model.
pub fn gaussian_cmi(p: &GaussParams, w: &[f64], w2_star: f64) -> Result<f64> {
    p.validate()?;
    if w.len() != 2 {
        return Err(Error::Shape { op: "gaussian_cmi", shapes: vec![vec![w.len()], vec![2]] });
    }
    if w2_star == 0.0 {
        return Err(Error::validation("w2_star", "a zero conditioner carries no information"));
    }
    if w[0] == 0.0 {
        return Err(Error::InfiniteCmi("w1 = 0 makes the prediction a function of the conditioner".into()));
    }
    let a = (w[0] * p.sigma1).powi(2);
    let b = (w[1] * p.sigma2).powi(2);
    Ok(0.5 * ((a + b) / a).ln())
}

/// The two equivalent forms of the test for whether the unconstrained ERM
/// solution already satisfies the CMI bound; `feasible` is `proof_ratio < c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thm1Check {
    pub statement_ratio: f64,
    pub statement_threshold: f64,
    pub proof_ratio: f64,
    pub feasible: bool,
}

pub fn thm1_check(p: &GaussParams, cfg: &TheoryConfig) -> Thm1Check {
    let (m2, s2p) = (p.mu2p(), p.sigma2p_sq());
    let proof_ratio = m2 / p.mu1 * (p.sigma1 * p.sigma2 / s2p);
    Thm1Check {
        statement_ratio: p.mu1 / m2 * (s2p / (p.sigma1 * p.sigma2)),
        statement_threshold: 1.0 / cfg.c,
        proof_ratio,
        feasible: proof_ratio < cfg.c,
    }
}

/// CMI-constrained least squares with two features.
pub fn cmid_closed_form_2f(p: &GaussParams, cfg: &TheoryConfig) -> Result<LinearSolution> {
    p.validate()?;
    cfg.validate()?;
    let two = GaussParams { third: None, ..*p };
    if thm1_check(&two, cfg).feasible {
        return erm_closed_form(&two);
    }
    let (mu1, s1, mu2, s2, m2, c) = (p.mu1, p.sigma1, p.mu2, p.sigma2, p.mu2p(), cfg.c);
    let num = 1.0 + m2 * s1 / (mu1 * s2) * c;
    let den = mu1 * mu1 / (s1 * s1) + 1.0 + c * c * (mu2 * mu2 / (s2 * s2) + 1.0) + 2.0 * c * mu1 * m2 / (s1 * s2);
    let w1 = mu1 / (s1 * s1) * num / den;
    Ok(LinearSolution::closed(vec![w1, c * s1 / s2 * w1], true))
}

/// `c' = 2c·sqrt(mu2'²/sigma2² + mu3'²/sigma3²)`.
pub fn c_prime(p: &GaussParams, cfg: &TheoryConfig) -> Result<f64> {
    let t = p.third()?;
    Ok(2.0 * cfg.c * (p.mu2p().powi(2) / p.sigma2.powi(2) + p.mu3p()?.powi(2) / t.sigma3.powi(2)).sqrt())
}

/// Checks the hypothesis `sigma2²/sigma2'² = sigma3²/sigma3'²`.
pub fn sigma_ratio_gap(p: &GaussParams) -> Result<f64> {
    let t = p.third()?;
    Ok(p.sigma2.powi(2) / p.sigma2p_sq() - t.sigma3.powi(2) / p.sigma3p_sq()?)
}

/// CMI-constrained least squares with two spurious features, conditioning on
/// the optimal model over features 2 and 3.
pub fn cmid_closed_form_3f(p: &GaussParams, cfg: &TheoryConfig) -> Result<LinearSolution> {
    p.validate()?;
    cfg.validate()?;
    let t = p.third()?;
    let gap = sigma_ratio_gap(p)?;
    if gap.abs() > 1e-9 {
        return Err(Error::validation("sigma3", format!("sigma2²/sigma2'² and sigma3²/sigma3'² differ by {gap:e}")));
    }
    let cp = c_prime(p, cfg)?;
    let (mu1, s1) = (p.mu1, p.sigma1);
    let (m2, m3) = (p.mu2p(), p.mu3p()?);
    let (s2p, s3p) = (p.sigma2p_sq(), p.sigma3p_sq()?);
    let r = m2 * m2 / s2p + m3 * m3 / s3p;
    let mut sol = if r / (mu1 / s1) <= cp {
        erm_closed_form(p)?
    } else {
        let q2 = m2 * m2 / (p.sigma2.powi(2) + p.mu2.powi(2));
        let q3 = m3 * m3 / (t.sigma3.powi(2) + t.mu3.powi(2));
        let d = q2 + q3 - 2.0 * q2 * q3;
        let w1 = mu1 / (s1 * s1) * (1.0 + cp * s1 / mu1)
            / (1.0 + mu1 * mu1 / (s1 * s1) + 2.0 * cp * mu1 / s1 + cp * cp * (1.0 - q2 * q3) / d);
        let w2 = cp * s1 * w1 * (m2 / (p.sigma2.powi(2) + p.mu2.powi(2))) * (1.0 - q3) / d;
        let w3 = cp * s1 * w1 * (m3 / (t.sigma3.powi(2) + t.mu3.powi(2))) * (1.0 - q2) / d;
        LinearSolution::closed(vec![w1, w2, w3], true)
    };
    if let Some(limit) = smallness_limit(p, &sol.w)? {
        if cfg.c > limit {
            sol.warnings.push(format!("c = {} exceeds the small-c gate {limit}", cfg.c));
        }
    }
    Ok(sol)
}

/// Upper bound on `c` under which the three-feature reduction is valid, or
/// `None` when the bound is infinite.
pub fn smallness_limit(p: &GaussParams, w: &[f64]) -> Result<Option<f64>> {
    let t = p.third()?;
    let (ws2, ws3) = (p.mu2p() / p.sigma2p_sq(), p.mu3p()? / p.sigma3p_sq()?);
    let (s2, s3) = (p.sigma2.powi(2), t.sigma3.powi(2));
    let cross = (w[1] * ws3 - w[2] * ws2).abs();
    let scale = ws2.abs().max(ws3.abs()) * w[1].abs().max(w[2].abs());
    if cross <= 1e-12 * scale {
        return Ok(None);
    }
    Ok(Some(3f64.sqrt() * (w[1] * ws2 * s2 + w[2] * ws3 * s3).abs() / (2.0 * p.sigma2 * t.sigma3 * cross)))
}

/// Monte Carlo estimate of the population MSE from `n` generated samples.
pub fn monte_carlo_mse(p: &GaussParams, w: &[f64], n: usize, seed: u64) -> Result<f64> {
    if w.len() != p.features() {
        return Err(Error::Shape { op: "monte_carlo_mse", shapes: vec![vec![w.len()], vec![p.features()]] });
    }
    let ds = gen_gaussian(&p.to_spec(n), seed)?;
    let y = ds.extra("y_pm").expect("gaussian data carries y_pm");
    let total: f64 = (0..n)
        .map(|i| {
            let pred: f64 = ds.x.row(i).iter().zip(w).map(|(x, w)| x * w).sum();
            (pred - y[i] as f64).powi(2)
        })
        .sum();
    Ok(total / n as f64)
}

/// Monte Carlo estimate of `gaussian_cmi` from sample correlations of the two
/// projections within each `(y, a)` cell. Given `y` alone `X2` is a two-point
/// mixture; the closed form treats it as Gaussian with variance `sigma2²`,
/// which holds once the attribute is fixed.
pub fn monte_carlo_cmi(p: &GaussParams, w: &[f64], w2_star: f64, n: usize, seed: u64) -> Result<f64> {
    let ds = gen_gaussian(&GaussParams { third: None, ..*p }.to_spec(n), seed)?;
    let a = ds.extra("a").expect("gaussian data carries a");
    let mut total = 0.0;
    for (class, attr) in [(0, -1), (0, 1), (1, -1), (1, 1)] {
        let rows: Vec<usize> = (0..n).filter(|&i| ds.y[i] == class && a[i] == attr).collect();
        let k = rows.len() as f64;
        if rows.len() < 2 {
            continue;
        }
        let z1: Vec<f64> = rows.iter().map(|&i| w[0] * ds.x.get(i, 0) + w[1] * ds.x.get(i, 1)).collect();
        let z2: Vec<f64> = rows.iter().map(|&i| w2_star * ds.x.get(i, 1)).collect();
        let (m1, m2) = (z1.iter().sum::<f64>() / k, z2.iter().sum::<f64>() / k);
        let (mut c11, mut c22, mut c12) = (0.0, 0.0, 0.0);
        for (a, b) in z1.iter().zip(&z2) {
            c11 += (a - m1) * (a - m1);
            c22 += (b - m2) * (b - m2);
            c12 += (a - m1) * (b - m2);
        }
        let rho2 = c12 * c12 / (c11 * c22);
        total += k / n as f64 * -0.5 * (1.0 - rho2).ln();
    }
    Ok(total)
}
