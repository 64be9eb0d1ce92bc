use serde::{Deserialize, Serialize};

use super::{SetKind, SetParams, SupportEval, UncertaintySet};
use crate::data::{ks_threshold, order_statistics, Dataset};
use crate::error::{DdroError, Result};
use crate::scalar::{golden_min, Bracket};

/// Parameters of the independent-marginals KS set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsParams {
    /// Per coordinate: û^(0), û^(1), …, û^(N+1) (sentinels from the support box).
    pub order_stats: Vec<Vec<f64>>,
    pub gamma: f64,
    pub alpha_marginal: f64,
    /// Left-boundary weights on û^(0..=N+1); the right boundary is its reversal.
    pub q_left: Vec<f64>,
}

/// q^L(Γ) on N+2 points.
pub fn q_left(n: usize, gamma: f64) -> Vec<f64> {
    let gamma = gamma.clamp(0.0, 1.0);
    let nf = n as f64;
    let mut q = vec![0.0; n + 2];
    q[0] = gamma;
    let k = ((nf * (1.0 - gamma)) + 1e-12).floor() as usize;
    let k = k.min(n);
    for qj in q.iter_mut().take(k + 1).skip(1) {
        *qj = 1.0 / nf;
    }
    let rest = (1.0 - gamma - k as f64 / nf).max(0.0);
    if k < n + 1 {
        q[k + 1] = rest;
    }
    q
}

pub fn fit_ks_independent(data: &Dataset, alpha: f64) -> Result<UncertaintySet> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(DdroError::validation("alpha", format!("must lie in (0,1), got {alpha}")));
    }
    if data.support_box().is_none() {
        return Err(DdroError::SupportBoxRequired);
    }
    let d = data.d();
    let n = data.n();
    let alpha_marginal = 1.0 - (1.0 - alpha).powf(1.0 / d as f64);
    let gamma = ks_threshold(n, alpha_marginal)?;
    let stats = order_statistics(data);
    let order_stats = (0..d).map(|i| stats.with_sentinels(i)).collect::<Result<Vec<_>>>()?;
    let params = KsParams {
        order_stats,
        gamma,
        alpha_marginal,
        q_left: q_left(n, gamma),
    };
    Ok(UncertaintySet::new(SetKind::Ks, alpha, data.fingerprint(), d, SetParams::Ks(params)))
}

/// One coordinate's branch: weights and the values v_i·û^(j) on their support.
struct Branch {
    q: Vec<f64>,
    x: Vec<f64>,
    xmax: f64,
}

impl Branch {
    fn new(q: &[f64], pts: &[f64], vi: f64) -> Self {
        let mut qq = Vec::new();
        let mut xx = Vec::new();
        for (&w, &p) in q.iter().zip(pts) {
            if w > 0.0 {
                qq.push(w);
                xx.push(vi * p);
            }
        }
        let xmax = xx.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Branch { q: qq, x: xx, xmax }
    }

    /// λ·ln Σ q_j e^{x_j/λ}.
    fn scaled_log_mgf(&self, lam: f64) -> f64 {
        let s: f64 = self
            .q
            .iter()
            .zip(&self.x)
            .map(|(q, x)| q * ((x - self.xmax) / lam).exp())
            .sum();
        self.xmax + lam * s.ln()
    }

    /// Gibbs-tilted weights ∝ q_j e^{x_j/λ}.
    fn tilt(&self, lam: f64) -> Vec<f64> {
        let w: Vec<f64> = self
            .q
            .iter()
            .zip(&self.x)
            .map(|(q, x)| q * ((x - self.xmax) / lam).exp())
            .collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|v| v / s).collect()
    }
}

impl KsParams {
    fn q_right(&self) -> Vec<f64> {
        self.q_left.iter().rev().cloned().collect()
    }

    pub(crate) fn support(&self, v: &[f64], eps: f64) -> SupportEval {
        let d = v.len();
        let qr = self.q_right();
        let branches: Vec<(Branch, Branch, Vec<f64>)> = (0..d)
            .map(|i| {
                let pts = &self.order_stats[i];
                (Branch::new(&self.q_left, pts, v[i]), Branch::new(&qr, pts, v[i]), pts.clone())
            })
            .collect();
        let log_inv = (1.0 / eps).ln();
        let f = |lam: f64| -> f64 {
            let mut s = lam * log_inv;
            for (l, r, _) in &branches {
                s += l.scaled_log_mgf(lam).max(r.scaled_log_mgf(lam));
            }
            s
        };
        // λ → 0: the largest reachable v_i·û_i on either branch.
        let limit: f64 = branches.iter().map(|(l, r, _)| l.xmax.max(r.xmax)).sum();
        let scale: f64 = (0..d)
            .map(|i| {
                let p = &self.order_stats[i];
                v[i].abs() * (p[p.len() - 1] - p[0])
            })
            .fold(0.0, f64::max);

        let mut u = vec![0.0; d];
        if scale <= 0.0 {
            for (i, (_, _, pts)) in branches.iter().enumerate() {
                u[i] = mean_on_support(&self.q_left, pts);
            }
            return SupportEval::exact(limit, u);
        }
        let lo = (1e-8 * scale).ln();
        let hi = (1e4 * scale).ln();
        let (y, fy) = golden_min(|y| f(y.exp()), Bracket::new(lo, hi).with_tol(1e-12));
        if limit <= fy {
            for (i, (_, _, pts)) in branches.iter().enumerate() {
                u[i] = if v[i] > 0.0 {
                    pts[pts.len() - 1].max(pts[0])
                } else if v[i] < 0.0 {
                    pts[0].min(pts[pts.len() - 1])
                } else {
                    mean_on_support(&self.q_left, pts)
                };
            }
            return SupportEval::exact(limit, u);
        }
        let lam = y.exp();
        for (i, (l, r, pts)) in branches.iter().enumerate() {
            if v[i] == 0.0 {
                u[i] = mean_on_support(&self.q_left, pts);
                continue;
            }
            let (br, q) = if l.scaled_log_mgf(lam) >= r.scaled_log_mgf(lam) {
                (l, &self.q_left)
            } else {
                (r, &qr)
            };
            let w = br.tilt(lam);
            let support_pts: Vec<f64> = q
                .iter()
                .zip(pts)
                .filter(|(w, _)| **w > 0.0)
                .map(|(_, p)| *p)
                .collect();
            u[i] = w.iter().zip(&support_pts).map(|(a, b)| a * b).sum();
        }
        SupportEval::exact(fy, u)
    }
}

fn mean_on_support(q: &[f64], pts: &[f64]) -> f64 {
    q.iter().zip(pts).map(|(a, b)| a * b).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SupportBox;
    use approx::assert_abs_diff_eq;

    #[test]
    fn q_left_sums_to_one_integral_and_fractional() {
        for (n, g) in [(10usize, 0.2), (10, 0.25), (7, 0.33), (100, 0.1073), (5, 0.0)] {
            let q = q_left(n, g);
            let direct: f64 = q.iter().sum();
            assert_abs_diff_eq!(direct, 1.0, epsilon = 1e-12);
            assert!(q.iter().all(|&x| x >= 0.0));
        }
        let q = q_left(4, 0.0);
        assert_eq!(q, vec![0.0, 0.25, 0.25, 0.25, 0.25, 0.0]);
    }

    #[test]
    fn two_point_support_matches_grid() {
        let ds = Dataset::from_rows(&[vec![0.0], vec![1.0]])
            .unwrap()
            .with_support_box(SupportBox::new(vec![0.0], vec![1.0]).unwrap())
            .unwrap();
        let s = fit_ks_independent(&ds, 0.2).unwrap();
        let SetParams::Ks(p) = s.params() else { panic!() };
        for v in [1.0, -1.0, 0.3] {
            let got = s.support(&[v], 0.5).unwrap();
            // Dense grid over ln λ with both branches.
            let qr: Vec<f64> = p.q_left.iter().rev().cloned().collect();
            let pts = &p.order_stats[0];
            let mut best = f64::INFINITY;
            for k in 0..=400_000 {
                let lam = (-12.0 + 20.0 * k as f64 / 400_000.0f64).exp();
                let branch = |q: &[f64]| -> f64 {
                    let m = q
                        .iter()
                        .zip(pts)
                        .filter(|(w, _)| **w > 0.0)
                        .map(|(_, x)| v * x)
                        .fold(f64::NEG_INFINITY, f64::max);
                    let s: f64 = q.iter().zip(pts).map(|(w, x)| w * ((v * x - m) / lam).exp()).sum();
                    m + lam * s.ln()
                };
                let val = lam * 2f64.ln() + branch(&p.q_left).max(branch(&qr));
                best = best.min(val);
            }
            let limit = (v * 1.0f64).max(0.0);
            best = best.min(limit);
            assert_abs_diff_eq!(got.value, best, epsilon = 1e-4);
            assert!(v * got.maximizer[0] >= got.value - 1e-6 * (1.0 + got.value.abs()));
        }
    }

    #[test]
    fn ks_requires_box() {
        let ds = Dataset::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        assert_eq!(fit_ks_independent(&ds, 0.2).unwrap_err(), DdroError::SupportBoxRequired);
    }
}
