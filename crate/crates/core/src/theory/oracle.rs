use super::gaussian::{c_prime, population_mse, GaussParams, LinearSolution, Provenance, TheoryConfig};
use crate::error::{Error, Result};

const GRID: usize = 400;
const GOLDEN_TOL: f64 = 1e-8;

/// `L(w) = 1 − 2·b·w + w·A·w`, recovered by probing `population_mse` at
/// unit vectors and their pairwise sums.
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub b: Vec<f64>,
    pub a: Vec<Vec<f64>>,
}

impl Quadratic {
    pub fn probe(p: &GaussParams, d: usize) -> Result<Self> {
        let at = |w: &[f64]| -> Result<f64> {
            let mut full = vec![0.0; p.features()];
            full[..d].copy_from_slice(w);
            population_mse(p, &full)
        };
        let unit = |i: usize, s: f64| {
            let mut w = vec![0.0; d];
            w[i] = s;
            w
        };
        let base = at(&vec![0.0; d])?;
        let mut b = vec![0.0; d];
        let mut a = vec![vec![0.0; d]; d];
        let mut plus = vec![0.0; d];
        for i in 0..d {
            plus[i] = at(&unit(i, 1.0))?;
            let minus = at(&unit(i, -1.0))?;
            b[i] = (minus - plus[i]) / 4.0;
            a[i][i] = (plus[i] + minus - 2.0 * base) / 2.0;
        }
        for i in 0..d {
            for j in i + 1..d {
                let mut w = unit(i, 1.0);
                w[j] = 1.0;
                a[i][j] = (at(&w)? - plus[i] - plus[j] + base) / 2.0;
                a[j][i] = a[i][j];
            }
        }
        Ok(Quadratic { b, a })
    }

    pub fn eval(&self, w: &[f64]) -> f64 {
        let mut v = 1.0;
        for i in 0..w.len() {
            v -= 2.0 * self.b[i] * w[i];
            for j in 0..w.len() {
                v += w[i] * self.a[i][j] * w[j];
            }
        }
        v
    }

    /// Stationary point `A·w = b` by Gaussian elimination with partial pivoting.
    pub fn minimizer(&self) -> Result<Vec<f64>> {
        let d = self.b.len();
        let mut m: Vec<Vec<f64>> = self.a.iter().zip(&self.b).map(|(row, &bi)| [row.as_slice(), &[bi]].concat()).collect();
        for col in 0..d {
            let pivot = (col..d).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).expect("nonempty");
            if m[pivot][col].abs() < 1e-300 {
                return Err(Error::Numerical("singular second-moment matrix".into()));
            }
            m.swap(col, pivot);
            for r in col + 1..d {
                let f = m[r][col] / m[col][col];
                for k in col..=d {
                    m[r][k] -= f * m[col][k];
                }
            }
        }
        let mut w = vec![0.0; d];
        for r in (0..d).rev() {
            let tail: f64 = (r + 1..d).map(|k| m[r][k] * w[k]).sum();
            w[r] = (m[r][d] - tail) / m[r][r];
        }
        Ok(w)
    }
}

/// Minimizes a unimodal function on `[lo, hi]`.
pub fn golden_section(mut lo: f64, mut hi: f64, tol: f64, f: impl Fn(f64) -> f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    (lo + hi) / 2.0
}

fn oracle(w: Vec<f64>, binding: bool) -> LinearSolution {
    LinearSolution { w, provenance: Provenance::NumericalOracle, binding, warnings: Vec::new() }
}

/// Independent numerical minimizer of the CMI-constrained problem, working
/// on the reduced (tight-constraint) form. `features` is 2 or 3.
pub fn constrained_oracle(p: &GaussParams, cfg: &TheoryConfig, features: usize) -> Result<LinearSolution> {
    p.validate()?;
    cfg.validate()?;
    match features {
        2 => oracle_2f(p, cfg),
        3 => oracle_3f(p, cfg),
        _ => Err(Error::validation("features", format!("{features} must be 2 or 3"))),
    }
}

fn oracle_2f(p: &GaussParams, cfg: &TheoryConfig) -> Result<LinearSolution> {
    let q = Quadratic::probe(p, 2)?;
    let erm = q.minimizer()?;
    if (erm[1] * p.sigma2).abs() <= cfg.c * (erm[0] * p.sigma1).abs() {
        return Ok(oracle(erm, false));
    }
    let k = cfg.c * p.sigma1 / p.sigma2;
    let mut best = (q.eval(&[0.0, 0.0]), vec![0.0, 0.0]);
    for sign in [1.0, -1.0] {
        let line = |t: f64| q.eval(&[t, sign * k * t]);
        // exact vertex of the parabola through three evaluations
        let (l0, lp, lm) = (line(0.0), line(1.0), line(-1.0));
        let t = (lm - lp) / (2.0 * (lp + lm - 2.0 * l0));
        let w = vec![t, sign * k * t];
        let v = q.eval(&w);
        if v < best.0 {
            best = (v, w);
        }
    }
    Ok(oracle(best.1, true))
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn oracle_3f(p: &GaussParams, cfg: &TheoryConfig) -> Result<LinearSolution> {
    if p.third.is_none() {
        return Err(Error::validation("third", "three-feature oracle needs a third feature"));
    }
    let q = Quadratic::probe(p, 3)?;
    let erm = q.minimizer()?;
    let cp = c_prime(p, cfg)?;
    let (m2, m3) = (p.mu2p(), p.mu3p()?);
    if (erm[1] * m2 + erm[2] * m3).abs() <= cp * p.sigma1 * erm[0].abs() {
        return Ok(oracle(erm, false));
    }
    let mut best = (q.eval(&[0.0; 3]), vec![0.0; 3]);
    for sign in [1.0, -1.0] {
        // plane {w : w2·μ2' + w3·μ3' = sign·c'·σ1·w1}
        let normal = normalize([sign * cp * p.sigma1, -m2, -m3]);
        let seed = if normal[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        let e1 = normalize(cross(normal, seed));
        let e2 = cross(normal, e1);
        let point = |r: f64, phi: f64| {
            let (s, c) = phi.sin_cos();
            vec![r * (c * e1[0] + s * e2[0]), r * (c * e1[1] + s * e2[1]), r * (c * e1[2] + s * e2[2])]
        };
        // Points with loss above 1 (the loss at w = 0) cannot be minimizers,
        // which bounds the radius along each direction by 2|b·u| / (u·A·u).
        let rmax = |phi: f64| {
            let u = point(1.0, phi);
            let bu: f64 = (0..3).map(|i| q.b[i] * u[i]).sum();
            2.0 * bu.abs() / (q.eval(&u) - 1.0 + 2.0 * bu) * 1.01
        };
        let dphi = std::f64::consts::PI / GRID as f64;
        let mut grid_best = (f64::INFINITY, 0.0);
        for i in 0..GRID {
            let phi = i as f64 * dphi;
            let r = rmax(phi);
            for j in 0..GRID {
                let v = q.eval(&point(-r + j as f64 * 2.0 * r / (GRID - 1) as f64, phi));
                if v < grid_best.0 {
                    grid_best = (v, phi);
                }
            }
        }
        let radial = |phi: f64| {
            let r = rmax(phi);
            golden_section(-r, r, GOLDEN_TOL, |t| q.eval(&point(t, phi)))
        };
        let phi = golden_section(grid_best.1 - 2.0 * dphi, grid_best.1 + 2.0 * dphi, GOLDEN_TOL, |phi| {
            q.eval(&point(radial(phi), phi))
        });
        let w = point(radial(phi), phi);
        let v = q.eval(&w);
        if v < best.0 {
            best = (v, w);
        }
    }
    Ok(oracle(best.1, true))
}
