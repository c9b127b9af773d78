use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::RngStream;

/// One outcome of the binary variables `(E, Y, Φc, Ψs, Ψc)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub e: usize,
    pub y: usize,
    pub phi: usize,
    pub psi_s: usize,
    pub psi_c: usize,
}

impl Cell {
    fn from_index(i: usize) -> Self {
        Cell { e: i >> 4 & 1, y: i >> 3 & 1, phi: i >> 2 & 1, psi_s: i >> 1 & 1, psi_c: i & 1 }
    }

    fn index(&self) -> usize {
        self.e << 4 | self.y << 3 | self.phi << 2 | self.psi_s << 1 | self.psi_c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Candidate {
    Zero,
    PhiC,
    PsiS,
    PsiC,
}

impl Candidate {
    pub const ALL: [Candidate; 4] = [Candidate::Zero, Candidate::PhiC, Candidate::PsiS, Candidate::PsiC];

    pub fn predict(self, cell: &Cell) -> usize {
        match self {
            Candidate::Zero => 0,
            Candidate::PhiC => cell.phi,
            Candidate::PsiS => cell.psi_s,
            Candidate::PsiC => cell.psi_c,
        }
    }
}

/// Exact joint distribution of a small discrete causal model with an
/// invariant feature `Φc`, a simple variant feature `Ψs` and a complex variant
/// feature `Ψc`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyCausalModel {
    joint: Vec<f64>,
}

const TOL: f64 = 1e-12;

fn flip(value: usize, bit: usize, p: f64) -> f64 {
    if value == bit {
        1.0 - p
    } else {
        p
    }
}

impl ToyCausalModel {
    /// Builds the table from a probability for each cell.
    pub fn from_fn(f: impl Fn(Cell) -> f64) -> Result<Self> {
        let joint: Vec<f64> = (0..32).map(|i| f(Cell::from_index(i))).collect();
        let model = ToyCausalModel { joint };
        model.validate()?;
        Ok(model)
    }

    /// `Y ~ Bern(0.5)`, `Φc = Y` flipped w.p. `phi_flip`, a latent `a = Y`
    /// flipped w.p. `a_flip[e]`, `Ψs = a` and `Ψc = a` flipped w.p. `c_flip`.
    pub fn latent_attribute(env_weights: [f64; 2], phi_flip: f64, a_flip: [f64; 2], c_flip: f64) -> Result<Self> {
        Self::from_fn(|cell| {
            // Ψs is the latent attribute itself
            let a = cell.psi_s;
            env_weights[cell.e] * 0.5 * flip(cell.phi, cell.y, phi_flip) * flip(a, cell.y, a_flip[cell.e])
                * flip(cell.psi_c, a, c_flip)
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.joint.len() != 32 || self.joint.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return Err(Error::validation("joint", "need 32 nonnegative finite cell probabilities"));
        }
        let total: f64 = self.joint.iter().sum();
        if (total - 1.0).abs() > TOL {
            return Err(Error::validation("joint", format!("probabilities sum to {total}")));
        }
        Ok(())
    }

    pub fn prob(&self, cell: Cell) -> f64 {
        self.joint[cell.index()]
    }

    fn cells(&self) -> impl Iterator<Item = (Cell, f64)> + '_ {
        self.joint.iter().enumerate().map(|(i, &p)| (Cell::from_index(i), p))
    }

    /// Shannon entropy (nats) of the variable `key(cell)`; keys must be < 64.
    pub fn entropy(&self, key: impl Fn(&Cell) -> usize) -> f64 {
        let mut mass = [0.0; 64];
        for (cell, p) in self.cells() {
            mass[key(&cell)] += p;
        }
        mass.iter().filter(|&&p| p > 0.0).map(|p| -p * p.ln()).sum()
    }

    /// `I(A; B | C)` with each argument a binary or small-integer function of the cell.
    pub fn cmi(&self, a: impl Fn(&Cell) -> usize, b: impl Fn(&Cell) -> usize, c: impl Fn(&Cell) -> usize) -> f64 {
        let ac = self.entropy(|x| a(x) << 4 | c(x));
        let bc = self.entropy(|x| b(x) << 4 | c(x));
        let abc = self.entropy(|x| a(x) << 5 | b(x) << 4 | c(x));
        (ac + bc - abc - self.entropy(&c)).max(0.0)
    }

    pub fn sample(&self, n: usize, seed: u64) -> Vec<Cell> {
        let mut rng = RngStream::new(seed);
        let mut cdf = Vec::with_capacity(32);
        let mut acc = 0.0;
        for p in &self.joint {
            acc += p;
            cdf.push(acc);
        }
        (0..n)
            .map(|_| {
                let u = rng.next_f64() * acc;
                Cell::from_index(cdf.iter().position(|&c| u < c).unwrap_or(31))
            })
            .collect()
    }
}

impl Default for ToyCausalModel {
    fn default() -> Self {
        Self::latent_attribute([0.5, 0.5], 0.1, [0.2, 0.45], 0.1).expect("default table is normalized")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    /// `H(Y|Ψs) − H(Y|Ψs,E)`; positive when the simple feature is variant.
    pub psi_s_variation: f64,
    pub simple_is_variant: bool,
    pub i_phi_psi_s_given_y: f64,
    pub i_phi_psi_c_given_y: f64,
    pub i_psi_given_y: f64,
    pub i_psi_given_y_e: f64,
    pub invariant_independent: bool,
    pub variant_dependence_drops: bool,
}

impl AssumptionReport {
    /// Complexity assumption: the simple class holds only variant predictors.
    pub fn assumption3(&self) -> bool {
        self.simple_is_variant
    }

    pub fn assumption4(&self) -> bool {
        self.invariant_independent && self.variant_dependence_drops
    }
}

pub fn check_assumptions(toy: &ToyCausalModel) -> Result<AssumptionReport> {
    toy.validate()?;
    let y = |c: &Cell| c.y;
    let ye = |c: &Cell| c.y << 1 | c.e;
    let h_y_s = toy.entropy(|c| c.y << 1 | c.psi_s) - toy.entropy(|c| c.psi_s);
    let h_y_s_e = toy.entropy(|c| c.y << 2 | c.psi_s << 1 | c.e) - toy.entropy(|c| c.psi_s << 1 | c.e);
    let i_phi_s = toy.cmi(|c| c.phi, |c| c.psi_s, y);
    let i_phi_c = toy.cmi(|c| c.phi, |c| c.psi_c, y);
    let i_psi_y = toy.cmi(|c| c.psi_s, |c| c.psi_c, y);
    let i_psi_ye = toy.cmi(|c| c.psi_s, |c| c.psi_c, ye);
    Ok(AssumptionReport {
        psi_s_variation: h_y_s - h_y_s_e,
        simple_is_variant: h_y_s - h_y_s_e > TOL,
        i_phi_psi_s_given_y: i_phi_s,
        i_phi_psi_c_given_y: i_phi_c,
        i_psi_given_y: i_psi_y,
        i_psi_given_y_e: i_psi_ye,
        invariant_independent: i_phi_s <= TOL && i_phi_c <= TOL,
        variant_dependence_drops: i_psi_y > i_psi_ye + TOL,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateReport {
    pub candidate: Candidate,
    /// 0-1 risk of predicting `Y` with the candidate.
    pub risk: f64,
    pub cmi_with_simple: f64,
    pub h_y_given: f64,
    pub h_y_given_env: f64,
    pub invariant: bool,
    pub info_y: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MipResult {
    pub feasible: Vec<Candidate>,
    pub selected: Option<Candidate>,
    pub candidates: Vec<CandidateReport>,
    pub assumptions: AssumptionReport,
    pub notes: Vec<String>,
}

/// Enumerates the candidate predictors, keeps those with zero CMI against
/// the simple feature given `Y`, and selects the most informative one.
pub fn mip_enumerate(toy: &ToyCausalModel) -> Result<MipResult> {
    let assumptions = check_assumptions(toy)?;
    let mut candidates = Vec::new();
    for cand in Candidate::ALL {
        let m = move |c: &Cell| cand.predict(c);
        let risk: f64 = toy.cells().filter(|(c, _)| m(c) != c.y).map(|(_, p)| p).sum();
        let h_y_given = toy.entropy(|c| c.y << 1 | m(c)) - toy.entropy(m);
        let h_y_given_env = toy.entropy(|c| c.y << 2 | m(c) << 1 | c.e) - toy.entropy(|c| m(c) << 1 | c.e);
        let cmi = toy.cmi(m, |c| c.psi_s, |c| c.y);
        candidates.push(CandidateReport {
            candidate: cand,
            risk,
            cmi_with_simple: cmi,
            h_y_given,
            h_y_given_env,
            invariant: (h_y_given - h_y_given_env).abs() <= TOL,
            info_y: toy.cmi(|c| c.y, m, |_| 0),
            feasible: cmi <= TOL,
        });
    }
    let feasible: Vec<Candidate> = candidates.iter().filter(|r| r.feasible).map(|r| r.candidate).collect();
    let selected = candidates
        .iter()
        .filter(|r| r.feasible)
        .fold(None::<&CandidateReport>, |best, r| match best {
            Some(b) if b.info_y >= r.info_y => Some(b),
            _ => Some(r),
        })
        .map(|r| r.candidate);

    let mut notes = Vec::new();
    if !assumptions.assumption3() {
        notes.push("assumption 3 violated: the simple feature is invariant across environments".to_string());
    }
    if !assumptions.invariant_independent {
        notes.push("assumption 4 violated: I(Φ;Ψ|Y) > 0".to_string());
    }
    if !assumptions.variant_dependence_drops {
        notes.push("assumption 4 violated: I(Ψs;Ψc|Y) does not exceed I(Ψs;Ψc|Y,E)".to_string());
    }
    for r in &candidates {
        if r.feasible && r.candidate != Candidate::Zero && !r.invariant {
            notes.push(format!("{:?} is feasible but not invariant", r.candidate));
        }
        if r.candidate == Candidate::PsiS && r.feasible {
            notes.push("Ψs is feasible: the simple predictor has zero conditional entropy given Y".to_string());
        }
    }
    Ok(MipResult { feasible, selected, candidates, assumptions, notes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmi::hard_cmi;

    #[test]
    fn default_toy_selects_invariant_feature() {
        let r = mip_enumerate(&ToyCausalModel::default()).unwrap();
        assert_eq!(r.feasible, vec![Candidate::Zero, Candidate::PhiC]);
        assert_eq!(r.selected, Some(Candidate::PhiC));
        assert!(r.assumptions.assumption3() && r.assumptions.assumption4());
        assert!(r.notes.is_empty(), "{:?}", r.notes);
        let phi = &r.candidates[1];
        assert!(phi.invariant);
        assert!((phi.risk - 0.1).abs() < 1e-15);
        assert!(!r.candidates[2].invariant);
    }

    #[test]
    fn unnormalized_table_is_rejected() {
        assert!(ToyCausalModel::from_fn(|_| 0.05).is_err());
    }

    #[test]
    fn equal_environments_break_assumption4() {
        let toy = ToyCausalModel::latent_attribute([0.5, 0.5], 0.1, [0.2, 0.2], 0.1).unwrap();
        let r = mip_enumerate(&toy).unwrap();
        assert!(!r.assumptions.variant_dependence_drops);
        assert!((r.assumptions.i_psi_given_y - r.assumptions.i_psi_given_y_e).abs() < 1e-12);
        assert!(r.notes.iter().any(|n| n.contains("assumption 4")));
    }

    #[test]
    fn independent_variant_features_fail_strict_inequality() {
        let toy = ToyCausalModel::latent_attribute([0.5, 0.5], 0.1, [0.2, 0.45], 0.5).unwrap();
        let a = check_assumptions(&toy).unwrap();
        assert!(a.i_psi_given_y < 1e-12 && a.i_psi_given_y_e < 1e-12);
        assert!(!a.assumption4());
    }

    #[test]
    fn correlated_invariant_feature_fails_independence() {
        let toy = ToyCausalModel::from_fn(|c| {
            let env = [0.2, 0.45][c.e];
            0.25 * flip(c.psi_s, c.y, env) * flip(c.phi, c.psi_s, 0.1) * flip(c.psi_c, c.psi_s, 0.1)
        })
        .unwrap();
        let a = check_assumptions(&toy).unwrap();
        assert!(a.i_phi_psi_s_given_y > 0.01);
        assert!(!a.invariant_independent);
    }

    #[test]
    fn deterministic_simple_feature_joins_feasible_set() {
        let toy = ToyCausalModel::latent_attribute([0.5, 0.5], 0.1, [0.0, 0.0], 0.1).unwrap();
        let r = mip_enumerate(&toy).unwrap();
        assert!(r.feasible.contains(&Candidate::PsiS));
        assert!(r.notes.iter().any(|n| n.contains("Ψs is feasible")));
        assert!(!r.assumptions.assumption3());
    }

    #[test]
    fn sampled_cmi_matches_exact_table() {
        let toy = ToyCausalModel::default();
        let rows = toy.sample(100_000, 17);
        let col = |f: fn(&Cell) -> usize| rows.iter().map(f).collect::<Vec<_>>();
        let y = col(|c| c.y);
        let est = hard_cmi(&col(|c| c.psi_c), &col(|c| c.psi_s), &y, 2).unwrap();
        let exact = toy.cmi(|c| c.psi_c, |c| c.psi_s, |c| c.y);
        assert!((est - exact).abs() < 0.01, "{est} vs {exact}");
        let est = hard_cmi(&col(|c| c.phi), &col(|c| c.psi_s), &y, 2).unwrap();
        assert!(est < 0.01);
    }
}
