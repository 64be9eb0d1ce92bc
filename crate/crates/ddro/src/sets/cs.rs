use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{SetKind, SetParams, SupportEval, UncertaintySet};
use crate::data::{bootstrap_replicates, upper_order_statistic, Dataset, RandomSource};
use crate::error::{DdroError, Result};

/// Mean/covariance set parameters. `chol` is row-major lower-triangular L
/// with L·Lᵀ = Σ̂ + Γ₂·I.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsParams {
    pub mu_hat: Vec<f64>,
    pub sigma_hat: Vec<f64>,
    pub gamma1: f64,
    pub gamma2: f64,
    pub chol: Vec<f64>,
}

/// Lower Cholesky factor of a symmetric PSD matrix. A zero matrix gives a
/// zero factor; otherwise a failed factorization is retried once with a
/// 1e−10·trace ridge.
fn cholesky_psd(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = a.nrows();
    let trace = a.trace();
    if trace == 0.0 && a.iter().all(|&x| x == 0.0) {
        return Ok(DMatrix::zeros(d, d));
    }
    if let Some(c) = a.clone().cholesky() {
        return Ok(c.l());
    }
    let ridge = a + DMatrix::identity(d, d) * (1e-10 * trace.abs());
    ridge
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| DdroError::numeric("Cholesky factorization failed after regularization"))
}

impl CsParams {
    pub fn new(mu_hat: Vec<f64>, sigma_hat: Vec<f64>, gamma1: f64, gamma2: f64) -> Result<Self> {
        let d = mu_hat.len();
        if d == 0 || sigma_hat.len() != d * d {
            return Err(DdroError::validation("cs", "need a d-vector mean and a d×d covariance"));
        }
        if !(gamma1 >= 0.0 && gamma2 >= 0.0) || mu_hat.iter().chain(&sigma_hat).any(|x| !x.is_finite()) {
            return Err(DdroError::validation("cs", "parameters must be finite with non-negative thresholds"));
        }
        let a = DMatrix::from_row_slice(d, d, &sigma_hat) + DMatrix::identity(d, d) * gamma2;
        let l = cholesky_psd(&a)?;
        let chol = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| l[(i, j)]).collect();
        Ok(CsParams {
            mu_hat,
            sigma_hat,
            gamma1,
            gamma2,
            chol,
        })
    }

    fn d(&self) -> usize {
        self.mu_hat.len()
    }

    /// Lᵀv.
    fn lt_v(&self, v: &[f64]) -> Vec<f64> {
        let d = self.d();
        (0..d)
            .map(|j| (j..d).map(|i| self.chol[i * d + j] * v[i]).sum())
            .collect()
    }

    /// (Σ̂ + Γ₂I)v computed as L(Lᵀv).
    fn a_v(&self, v: &[f64]) -> Vec<f64> {
        let d = self.d();
        let w = self.lt_v(v);
        (0..d)
            .map(|i| (0..=i).map(|j| self.chol[i * d + j] * w[j]).sum())
            .collect()
    }

    /// (μ̂ᵀv, ‖v‖, √(vᵀ(Σ̂+Γ₂I)v)).
    fn parts(&self, v: &[f64]) -> (f64, f64, f64) {
        let lin = super::dot(&self.mu_hat, v);
        let norm = super::dot(v, v).sqrt();
        let w = self.lt_v(v);
        (lin, norm, super::dot(&w, &w).sqrt())
    }

    pub(crate) fn support(&self, v: &[f64], eps: f64) -> SupportEval {
        let (lin, norm, q) = self.parts(v);
        let k = (1.0 / eps - 1.0).sqrt();
        let value = lin + self.gamma1 * norm + k * q;
        let mut u = self.mu_hat.clone();
        if norm > 0.0 {
            for (ui, vi) in u.iter_mut().zip(v) {
                *ui += self.gamma1 * vi / norm;
            }
        }
        if q > 0.0 {
            let av = self.a_v(v);
            for (ui, ai) in u.iter_mut().zip(&av) {
                *ui += k * ai / q;
            }
        }
        SupportEval::exact(value, u)
    }

    pub(crate) fn eps_lower_bound(&self, v: &[f64], t: f64) -> Result<f64> {
        let (lin, norm, q) = self.parts(v);
        let slack = t - lin - self.gamma1 * norm;
        if slack < 0.0 {
            return Err(DdroError::Unattainable(format!(
                "support stays above {} > t = {t} for every eps",
                lin + self.gamma1 * norm
            )));
        }
        if q == 0.0 {
            return Ok(0.0);
        }
        Ok(1.0 / (slack * slack / (q * q) + 1.0))
    }

    pub(crate) fn eps_gradient(&self, v: &[f64], eps: f64) -> f64 {
        let (_, _, q) = self.parts(v);
        -q / (2.0 * eps * eps * (1.0 / eps - 1.0).sqrt())
    }

    /// Splits u − μ̂ − y into L·w for the given ball part y and returns ‖w‖;
    /// used to check maximizers against the set's definition.
    pub fn ellipsoid_norm(&self, u: &[f64], y: &[f64]) -> f64 {
        let d = self.d();
        let mut r: Vec<f64> = (0..d).map(|i| u[i] - self.mu_hat[i] - y[i]).collect();
        // Forward substitution L w = r.
        for i in 0..d {
            let mut s = r[i];
            for j in 0..i {
                s -= self.chol[i * d + j] * r[j];
            }
            let lii = self.chol[i * d + i];
            r[i] = if lii != 0.0 { s / lii } else { 0.0 };
        }
        super::dot(&r, &r).sqrt()
    }
}

/// Sample mean and (N−1)-normalized covariance of rows weighted by counts.
fn moments(flat: &[f64], d: usize, weights: Option<&[u32]>) -> (Vec<f64>, Vec<f64>) {
    let n_rows = flat.len() / d;
    let w = |j: usize| weights.map_or(1.0, |c| c[j] as f64);
    let total: f64 = (0..n_rows).map(w).sum();
    let mut mu = vec![0.0; d];
    for j in 0..n_rows {
        let wj = w(j);
        if wj == 0.0 {
            continue;
        }
        for i in 0..d {
            mu[i] += wj * flat[j * d + i];
        }
    }
    mu.iter_mut().for_each(|m| *m /= total);
    let mut cov = vec![0.0; d * d];
    for j in 0..n_rows {
        let wj = w(j);
        if wj == 0.0 {
            continue;
        }
        let row = &flat[j * d..(j + 1) * d];
        for a in 0..d {
            let da = row[a] - mu[a];
            for b in a..d {
                cov[a * d + b] += wj * da * (row[b] - mu[b]);
            }
        }
    }
    let denom = (total - 1.0).max(1.0);
    for a in 0..d {
        for b in a..d {
            let v = cov[a * d + b] / denom;
            cov[a * d + b] = v;
            cov[b * d + a] = v;
        }
    }
    (mu, cov)
}

/// Fits the mean/covariance set with bootstrapped Γ₁ (mean) and Γ₂
/// (covariance, Frobenius norm), each at level α/2.
pub fn fit_cs(data: &Dataset, alpha: f64, n_b: usize, rng: &RandomSource) -> Result<UncertaintySet> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(DdroError::validation("alpha", format!("must lie in (0,1), got {alpha}")));
    }
    if n_b < 100 {
        return Err(DdroError::validation("n_b", format!("need at least 100 resamples, got {n_b}")));
    }
    let d = data.d();
    let flat = data.flat();
    let (mu, cov) = moments(flat, d, None);
    let mut stats = bootstrap_replicates(data.n(), n_b, 2, rng, |counts| {
        let (m, c) = moments(flat, d, Some(counts));
        let g1: f64 = m.iter().zip(&mu).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let g2: f64 = c.iter().zip(&cov).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        vec![g1, g2]
    })?;
    let gamma1 = upper_order_statistic(&mut stats[0], alpha / 2.0);
    let gamma2 = upper_order_statistic(&mut stats[1], alpha / 2.0);
    let params = CsParams::new(mu, cov, gamma1, gamma2)?;
    Ok(UncertaintySet::new(SetKind::Cs, alpha, data.fingerprint(), d, SetParams::Cs(params)))
}
