use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{SetKind, SetParams, SupportEval, UncertaintySet};
use crate::data::{bootstrap_replicates, upper_order_statistic, Dataset, RandomSource};
use crate::error::{DdroError, Result};
use crate::scalar::{deviations_weighted, sup_scaled_log_mgf_arg};

/// Per-coordinate mean and deviation bounds of the forward/backward set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbParams {
    pub m_b: Vec<f64>,
    pub m_f: Vec<f64>,
    pub sigma_f: Vec<f64>,
    pub sigma_b: Vec<f64>,
    /// Mean bounds came from t-test intervals rather than the bootstrap.
    #[serde(default)]
    pub refined: bool,
    #[serde(default = "nan", with = "super::nan_as_null")]
    pub alpha_marginal: f64,
}

fn nan() -> f64 {
    f64::NAN
}

impl FbParams {
    pub fn new(m_b: Vec<f64>, m_f: Vec<f64>, sigma_f: Vec<f64>, sigma_b: Vec<f64>) -> Result<Self> {
        let d = m_b.len();
        if d == 0 || m_f.len() != d || sigma_f.len() != d || sigma_b.len() != d {
            return Err(DdroError::validation("fb", "parameter vectors must be non-empty and of equal length"));
        }
        for i in 0..d {
            let ok = [m_b[i], m_f[i], sigma_f[i], sigma_b[i]].iter().all(|x| x.is_finite())
                && m_b[i] <= m_f[i]
                && sigma_f[i] >= 0.0
                && sigma_b[i] >= 0.0;
            if !ok {
                return Err(DdroError::validation(
                    "fb",
                    format!("coordinate {i}: need m_b <= m_f and non-negative deviations"),
                ));
            }
        }
        Ok(FbParams {
            m_b,
            m_f,
            sigma_f,
            sigma_b,
            refined: false,
            alpha_marginal: f64::NAN,
        })
    }

    /// (linear part, Σ σ̄² v²) of the support function.
    fn parts(&self, v: &[f64]) -> (f64, f64) {
        let mut lin = 0.0;
        let mut s = 0.0;
        for (i, &vi) in v.iter().enumerate() {
            if vi >= 0.0 {
                lin += self.m_f[i] * vi;
                s += self.sigma_f[i].powi(2) * vi * vi;
            } else {
                lin += self.m_b[i] * vi;
                s += self.sigma_b[i].powi(2) * vi * vi;
            }
        }
        (lin, s)
    }

    pub(crate) fn support(&self, v: &[f64], eps: f64) -> SupportEval {
        let (lin, s) = self.parts(v);
        let log_inv = (1.0 / eps).ln();
        let value = lin + (2.0 * log_inv * s).sqrt();
        let lam = (s / (2.0 * log_inv)).sqrt();
        let u = v
            .iter()
            .enumerate()
            .map(|(i, &vi)| {
                let (m, sig) = if vi > 0.0 {
                    (self.m_f[i], self.sigma_f[i])
                } else {
                    (self.m_b[i], self.sigma_b[i])
                };
                if lam > 0.0 {
                    m + vi * sig * sig / lam
                } else {
                    m
                }
            })
            .collect();
        SupportEval::exact(value, u)
    }

    /// Membership in U_eps up to `tol` on the quadratic budget.
    pub fn contains(&self, u: &[f64], eps: f64, tol: f64) -> bool {
        let mut budget = 0.0;
        for (i, &ui) in u.iter().enumerate() {
            let (excess, sig) = if ui > self.m_f[i] {
                (ui - self.m_f[i], self.sigma_f[i])
            } else if ui < self.m_b[i] {
                (self.m_b[i] - ui, self.sigma_b[i])
            } else {
                continue;
            };
            if sig == 0.0 {
                if excess > tol {
                    return false;
                }
                continue;
            }
            budget += excess * excess / (2.0 * sig * sig);
        }
        budget <= (1.0 / eps).ln() + tol
    }

    pub(crate) fn eps_lower_bound(&self, v: &[f64], t: f64) -> Result<f64> {
        let (lin, s) = self.parts(v);
        let slack = t - lin;
        if slack < 0.0 {
            return Err(DdroError::Unattainable(format!(
                "support stays above {lin} > t = {t} for every eps"
            )));
        }
        if s == 0.0 {
            return Ok(0.0);
        }
        Ok((-(slack * slack) / (2.0 * s)).exp())
    }

    pub(crate) fn eps_gradient(&self, v: &[f64], eps: f64) -> f64 {
        let (_, s) = self.parts(v);
        -s.sqrt() / (eps * (2.0 * (1.0 / eps).ln()).sqrt())
    }
}

/// Bootstrap of σ_f for one coordinate and direction, evaluated on a small
/// ln x grid around the full-sample maximizer.
struct DevGrid {
    z: Vec<f64>,
    xs: Vec<f64>,
    shifts: Vec<f64>,
    /// exp(x_g·z_j − shift_g), row j contiguous.
    table: Vec<f64>,
    /// The full-sample maximum sits at x → 0 (variance regime).
    at_zero: bool,
}

const GRID: usize = 9;

impl DevGrid {
    fn new(z: &[f64]) -> Self {
        let (y_star, _) = sup_scaled_log_mgf_arg(z, None);
        let n = z.len() as f64;
        let sd = (z.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
        // A maximizer with x·sd this small is the x → 0 limit plus rounding
        // noise; grid points there would amplify that noise by 1/x².
        let at_zero = y_star.exp() * sd < 0.05;
        let (center, h) = if at_zero { ((0.3 / sd).ln(), 0.3) } else { (y_star, 0.15) };
        let xs: Vec<f64> = (0..GRID)
            .map(|g| (center + h * (g as f64 - (GRID / 2) as f64)).exp())
            .collect();
        let shifts: Vec<f64> = xs
            .iter()
            .map(|&x| z.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(x * v)))
            .collect();
        let mut table = Vec::with_capacity(z.len() * GRID);
        for &zj in z {
            for g in 0..GRID {
                table.push((xs[g] * zj - shifts[g]).exp());
            }
        }
        DevGrid {
            z: z.to_vec(),
            xs,
            shifts,
            table,
            at_zero,
        }
    }

    /// σ² of the resample with multiplicities `counts`, given the resample's
    /// mean shift `delta` and variance `var`. None asks for an exact solve.
    fn eval(&self, counts: &[u32], delta: f64, var: f64) -> Option<f64> {
        let mut s = [0.0f64; GRID];
        for (j, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let c = c as f64;
            let row = &self.table[j * GRID..(j + 1) * GRID];
            for g in 0..GRID {
                s[g] += c * row[g];
            }
        }
        let n: f64 = counts.iter().map(|&c| c as f64).sum();
        let mut f = [0.0f64; GRID];
        for g in 0..GRID {
            let x = self.xs[g];
            f[g] = 2.0 * (self.shifts[g] + (s[g] / n).ln() - x * delta) / (x * x);
        }
        let (best, &fb) = f
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("grid is non-empty");
        if best == 0 && self.at_zero {
            return Some(fb.max(var));
        }
        if best == 0 || best == GRID - 1 {
            return None;
        }
        // Parabola through the three grid points around the best value, then
        // a second, exact parabola on a quarter step around its vertex.
        let h = (self.xs[1] / self.xs[0]).ln();
        let y0 = self.xs[best].ln() + vertex(f[best - 1], fb, f[best + 1]) * h;
        let h2 = 0.25 * h;
        let g: Vec<f64> = [-h2, 0.0, h2]
            .iter()
            .map(|dy| self.exact(counts, n, delta, (y0 + dy).exp()))
            .collect();
        let y1 = y0 + vertex(g[0], g[1], g[2]) * h2;
        let peak = self.exact(counts, n, delta, y1.exp());
        Some(peak.max(g[0]).max(g[1]).max(g[2]).max(fb).max(var))
    }

    /// 2(ln E_w e^{xz} − xδ)/x² for the resample.
    fn exact(&self, counts: &[u32], n: f64, delta: f64, x: f64) -> f64 {
        let shift = self.z.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(x * v));
        let s: f64 = counts
            .iter()
            .zip(&self.z)
            .filter(|(&c, _)| c > 0)
            .map(|(&c, &zj)| c as f64 * (x * zj - shift).exp())
            .sum();
        2.0 * (shift + (s / n).ln() - x * delta) / (x * x)
    }
}

/// Offset (in steps, within [−1, 1]) of the vertex of the parabola through
/// three equally spaced values, or 0 when it is not concave.
fn vertex(a: f64, b: f64, c: f64) -> f64 {
    let denom = a - 2.0 * b + c;
    if denom < 0.0 {
        (0.5 * (a - c) / denom).clamp(-1.0, 1.0)
    } else {
        0.0
    }
}

pub fn fit_fb(
    data: &Dataset,
    alpha: f64,
    n_b: usize,
    refined: bool,
    rng: &RandomSource,
) -> Result<UncertaintySet> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(DdroError::validation("alpha", format!("must lie in (0,1), got {alpha}")));
    }
    if n_b < 100 {
        return Err(DdroError::validation("n_b", format!("need at least 100 resamples, got {n_b}")));
    }
    let d = data.d();
    let n = data.n();
    let nf = n as f64;
    let alpha_marginal = 1.0 - (1.0 - alpha).powf(1.0 / d as f64);
    let cols: Vec<Vec<f64>> = (0..d).map(|i| data.column(i)).collect();
    let means: Vec<f64> = cols.iter().map(|c| c.iter().sum::<f64>() / nf).collect();
    let centered: Vec<Vec<f64>> = cols
        .iter()
        .zip(&means)
        .map(|(c, m)| c.iter().map(|x| x - m).collect())
        .collect();
    let degenerate: Vec<bool> = centered
        .iter()
        .zip(&means)
        .map(|(z, m)| z.iter().all(|v| v.abs() <= 1e-14 * m.abs().max(1.0)))
        .collect();
    let grids: Vec<Option<(DevGrid, DevGrid)>> = centered
        .iter()
        .zip(&degenerate)
        .map(|(z, &deg)| {
            if deg {
                None
            } else {
                let zn: Vec<f64> = z.iter().map(|v| -v).collect();
                Some((DevGrid::new(z), DevGrid::new(&zn)))
            }
        })
        .collect();

    let stats = bootstrap_replicates(n, n_b, 3 * d, rng, |counts| {
        let mut out = Vec::with_capacity(3 * d);
        for i in 0..d {
            let z = &centered[i];
            let Some((gf, gb)) = &grids[i] else {
                out.extend([0.0, 0.0, 0.0]);
                continue;
            };
            let mut m1 = 0.0;
            let mut m2 = 0.0;
            for (&c, &zj) in counts.iter().zip(z) {
                if c > 0 {
                    let c = c as f64;
                    m1 += c * zj;
                    m2 += c * zj * zj;
                }
            }
            let delta = m1 / nf;
            let var = (m2 / nf - delta * delta).max(0.0);
            let exact = || {
                let w: Vec<f64> = counts.iter().map(|&c| c as f64 / nf).collect();
                deviations_weighted(&cols[i], Some(&w)).expect("non-empty column")
            };
            let sf2 = match gf.eval(counts, delta, var) {
                Some(v) => v,
                None => exact().sigma_f.powi(2),
            };
            let sb2 = match gb.eval(counts, -delta, var) {
                Some(v) => v,
                None => exact().sigma_b.powi(2),
            };
            out.push(delta.abs());
            out.push(sf2.sqrt());
            out.push(sb2.sqrt());
        }
        out
    })?;

    let mut m_b = Vec::with_capacity(d);
    let mut m_f = Vec::with_capacity(d);
    let mut sigma_f = Vec::with_capacity(d);
    let mut sigma_b = Vec::with_capacity(d);
    for i in 0..d {
        if degenerate[i] {
            m_b.push(means[i]);
            m_f.push(means[i]);
            sigma_f.push(0.0);
            sigma_b.push(0.0);
            continue;
        }
        let mut s0 = stats[3 * i].clone();
        let mut s1 = stats[3 * i + 1].clone();
        let mut s2 = stats[3 * i + 2].clone();
        let half_width = if refined {
            if n < 2 {
                return Err(DdroError::validation("samples", "t-test bounds need N >= 2"));
            }
            let sd = (centered[i].iter().map(|v| v * v).sum::<f64>() / (nf - 1.0)).sqrt();
            let t = StudentsT::new(0.0, 1.0, nf - 1.0)
                .map_err(|e| DdroError::numeric(e.to_string()))?
                .inverse_cdf(1.0 - alpha_marginal / 4.0);
            t * sd / nf.sqrt()
        } else {
            upper_order_statistic(&mut s0, alpha_marginal / 2.0)
        };
        m_b.push(means[i] - half_width);
        m_f.push(means[i] + half_width);
        sigma_f.push(upper_order_statistic(&mut s1, alpha_marginal / 4.0));
        sigma_b.push(upper_order_statistic(&mut s2, alpha_marginal / 4.0));
    }
    let mut params = FbParams::new(m_b, m_f, sigma_f, sigma_b)?;
    params.refined = refined;
    params.alpha_marginal = alpha_marginal;
    Ok(UncertaintySet::new(SetKind::Fb, alpha, data.fingerprint(), d, SetParams::Fb(params)))
}
