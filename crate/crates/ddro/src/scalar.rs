//! One-dimensional minimization, discrete CVaR, worst-case expectations over
//! φ-divergence balls, and forward/backward deviations.

use serde::{Deserialize, Serialize};

use crate::error::{DdroError, Result};

/// Search interval and stopping rule for [`golden_min`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    pub tol_rel: f64,
    pub max_iter: usize,
}

impl Bracket {
    pub fn new(lo: f64, hi: f64) -> Self {
        Bracket {
            lo,
            hi,
            tol_rel: 1e-9,
            max_iter: 200,
        }
    }

    pub fn with_tol(mut self, tol_rel: f64) -> Self {
        self.tol_rel = tol_rel;
        self
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section search for the minimum of a unimodal function.
///
/// Stops once the bracket width falls below `tol_rel·max(1, |x|)`. Endpoint
/// values are compared at the end so monotone functions return the boundary.
pub fn golden_min<F: FnMut(f64) -> f64>(mut f: F, b: Bracket) -> (f64, f64) {
    let (mut a, mut c) = (b.lo, b.hi);
    let mut x1 = c - INV_PHI * (c - a);
    let mut x2 = a + INV_PHI * (c - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..b.max_iter {
        if (c - a) <= b.tol_rel * x1.abs().max(1.0) {
            break;
        }
        if f1 <= f2 {
            c = x2;
            x2 = x1;
            f2 = f1;
            x1 = c - INV_PHI * (c - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (c - a);
            f2 = f(x2);
        }
    }
    let mut best = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    for x in [b.lo, b.hi] {
        let fx = f(x);
        if fx < best.1 {
            best = (x, fx);
        }
    }
    best
}

/// Root of a non-decreasing function on [lo, hi] with g(lo) ≤ 0 ≤ g(hi),
/// by bisection.
pub fn bisect_increasing<F: FnMut(f64) -> f64>(mut g: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= tol {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// min_t t + (1/ε) Σ p_j (c_j − t)⁺, computed exactly by filling the upper
/// tail with mass ε. Returns the value and the tail weights q (q ≤ p/ε, Σq = 1).
pub fn cvar_filling(p: &[f64], c: &[f64], eps: f64) -> (f64, Vec<f64>) {
    let mut order: Vec<usize> = (0..c.len()).collect();
    order.sort_by(|&i, &j| c[j].total_cmp(&c[i]).then(i.cmp(&j)));
    let mut q = vec![0.0; c.len()];
    let mut remaining = eps;
    let mut total = 0.0;
    for &i in &order {
        if remaining <= 0.0 {
            break;
        }
        let take = p[i].min(remaining);
        total += take * c[i];
        q[i] = take / eps;
        remaining -= take;
    }
    (total / eps, q)
}

/// Discrete CVaR_ε of c under p.
pub fn cvar_discrete(p: &[f64], c: &[f64], eps: f64) -> f64 {
    cvar_filling(p, c, eps).0
}

/// Result of a worst-case expectation over a divergence ball.
#[derive(Debug, Clone, PartialEq)]
pub struct WorstCase {
    pub value: f64,
    /// A maximizing distribution p in the ball.
    pub p: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Divergence {
    Chi2,
    Kl,
}

/// max pᵀc over Σ (p_i − p̂_i)²/(2 p_i) ≤ ρ.
pub fn wce_chi2(p_hat: &[f64], c: &[f64], rho: f64) -> Result<WorstCase> {
    wce(p_hat, c, rho, Divergence::Chi2)
}

/// max pᵀc over Σ p̂_i ln(p̂_i/p_i) ≤ ρ.
pub fn wce_g(p_hat: &[f64], c: &[f64], rho: f64) -> Result<WorstCase> {
    wce(p_hat, c, rho, Divergence::Kl)
}

fn divergence(kind: Divergence, p_hat: &[f64], p: &[f64]) -> f64 {
    match kind {
        Divergence::Chi2 => p_hat
            .iter()
            .zip(p)
            .map(|(&q, &x)| (x - q) * (x - q) / (2.0 * x))
            .sum(),
        Divergence::Kl => p_hat.iter().zip(p).map(|(&q, &x)| q * (q / x).ln()).sum(),
    }
}

/// Optimal η for fixed λ in the dual
///   chi2: η + 2λρ + 2λ − 2 Σ p̂_i √(λ(λ+η−c_i)),
///   kl:   η + λρ − λ Σ p̂_i ln((λ+η−c_i)/λ),
/// i.e. the root of 1 − Σ p_i(η), written in the slack t = λ + η − c_max ∈ (0, λ].
/// Returns (η, p) where p is the induced primal distribution.
fn inner_eta(kind: Divergence, p_hat: &[f64], c: &[f64], cmax: f64, lam: f64) -> (f64, Vec<f64>) {
    let weights = |t: f64| -> Vec<f64> {
        p_hat
            .iter()
            .zip(c)
            .map(|(&p, &ci)| {
                let s = t + (cmax - ci);
                match kind {
                    Divergence::Chi2 => p * (lam / s).sqrt(),
                    Divergence::Kl => p * lam / s,
                }
            })
            .collect()
    };
    // Σ p_i(t) is decreasing in t, infinite at 0+ and at most 1 at t = λ.
    let excess = |t: f64| -> f64 { weights(t).iter().sum::<f64>() - 1.0 };
    let mut lo = 0.0;
    let mut hi = lam;
    let mut t = lam;
    // Safeguarded Newton on the convex decreasing function excess(t).
    for _ in 0..200 {
        let w = weights(t);
        let e: f64 = w.iter().sum::<f64>() - 1.0;
        if e > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        if e.abs() <= 1e-15 || (hi - lo) <= 1e-16 * hi {
            break;
        }
        let de: f64 = w
            .iter()
            .zip(c)
            .map(|(&wi, &ci)| {
                let s = t + (cmax - ci);
                match kind {
                    Divergence::Chi2 => -0.5 * wi / s,
                    Divergence::Kl => -wi / s,
                }
            })
            .sum();
        let next = t - e / de;
        t = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
    }
    let t = if excess(t) > 1e-12 { hi } else { t };
    let mut w = weights(t);
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    (t - lam + cmax, w)
}

fn wce(p_hat: &[f64], c: &[f64], rho: f64, kind: Divergence) -> Result<WorstCase> {
    if p_hat.len() != c.len() || p_hat.is_empty() {
        return Err(DdroError::validation("p_hat", "must match c in length and be non-empty"));
    }
    if p_hat.iter().any(|&p| !(p > 0.0)) {
        return Err(DdroError::validation(
            "p_hat",
            "entries must be positive (smooth empty cells first)",
        ));
    }
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(DdroError::validation("rho", "must be finite and nonnegative"));
    }
    let cmax = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let cmin = c.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean: f64 = p_hat.iter().zip(c).map(|(p, x)| p * x).sum();
    let scale = cmax - cmin;
    if rho == 0.0 || scale <= 1e-300 {
        return Ok(WorstCase {
            value: mean,
            p: p_hat.to_vec(),
        });
    }
    // p(λ) is the inner maximizer for multiplier λ; its divergence decreases
    // in λ, so the optimal λ solves divergence(p(λ)) = ρ.
    let excess = |ln_lam: f64| -> f64 {
        let (_, p) = inner_eta(kind, p_hat, c, cmax, ln_lam.exp());
        divergence(kind, p_hat, &p) - rho
    };
    let mut hi = (scale * 1e4f64.max(10.0 / rho.sqrt())).ln();
    let mut expand = 0;
    while excess(hi) > 0.0 {
        hi += 10.0;
        expand += 1;
        if expand > 60 {
            return Err(DdroError::numeric("worst-case expectation: multiplier bracket overflow"));
        }
    }
    let lo = (scale * 1e-14).ln();
    let p = if excess(lo) <= 0.0 {
        inner_eta(kind, p_hat, c, cmax, lo.exp()).1
    } else {
        let ln_lam = bisect_increasing(|y| -excess(y), lo, hi, 1e-14);
        // Keep the feasible side of the bracket.
        let mut y = ln_lam;
        while excess(y) > 0.0 {
            y += 1e-13 * y.abs().max(1.0);
        }
        inner_eta(kind, p_hat, c, cmax, y.exp()).1
    };
    let value: f64 = p.iter().zip(c).map(|(pi, ci)| pi * ci).sum();
    let value = value.clamp(mean, cmax);
    Ok(WorstCase { value, p })
}

/// Forward/backward deviations and mean of an empirical distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationPair {
    pub sigma_f: f64,
    pub sigma_b: f64,
    pub mu: f64,
}

/// ln E exp(x z) for centered values z with weights w (Σw = 1), stable for
/// small and large x.
pub(crate) fn log_mgf_centered(z: &[f64], w: Option<&[f64]>, x: f64) -> f64 {
    let zmax = z.iter().fold(0.0f64, |m, &v| m.max((x * v).abs()));
    let n = z.len() as f64;
    let weight = |j: usize| w.map_or(1.0 / n, |w| w[j]);
    if zmax < 0.5 {
        let s: f64 = z.iter().enumerate().map(|(j, &v)| weight(j) * (x * v).exp_m1()).sum();
        s.ln_1p()
    } else {
        let m = z.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(x * v));
        let s: f64 = z.iter().enumerate().map(|(j, &v)| weight(j) * (x * v - m).exp()).sum();
        m + s.ln()
    }
}

/// sup over x > 0 of 2 ln E exp(x z)/x², searched on ln x ∈ [−20, 20].
pub(crate) fn sup_scaled_log_mgf(z: &[f64], w: Option<&[f64]>) -> f64 {
    sup_scaled_log_mgf_arg(z, w).1
}

/// As [`sup_scaled_log_mgf`], also returning the maximizing ln x.
pub(crate) fn sup_scaled_log_mgf_arg(z: &[f64], w: Option<&[f64]>) -> (f64, f64) {
    let f = |y: f64| {
        let x = y.exp();
        -(2.0 * log_mgf_centered(z, w, x) / (x * x))
    };
    // Coarse scan first so the golden stage starts in the right basin.
    let (lo, hi) = (-20.0f64, 20.0f64);
    let steps = 80;
    let h = (hi - lo) / steps as f64;
    let mut best = (lo, f(lo));
    for k in 1..=steps {
        let y = lo + h * k as f64;
        let fy = f(y);
        if fy < best.1 {
            best = (y, fy);
        }
    }
    let a = (best.0 - h).max(lo);
    let b = (best.0 + h).min(hi);
    let (y, v) = golden_min(f, Bracket::new(a, b).with_tol(1e-10));
    if v <= best.1 {
        (y, (-v).max(0.0))
    } else {
        (best.0, (-best.1).max(0.0))
    }
}

/// σ_f, σ_b and μ of the empirical distribution of `samples`.
pub fn deviations(samples: &[f64]) -> Result<DeviationPair> {
    deviations_weighted(samples, None)
}

/// As [`deviations`] with probability weights on the samples.
pub fn deviations_weighted(samples: &[f64], weights: Option<&[f64]>) -> Result<DeviationPair> {
    if samples.is_empty() {
        return Err(DdroError::validation("samples", "must be non-empty"));
    }
    if let Some(w) = weights {
        if w.len() != samples.len() {
            return Err(DdroError::validation("weights", "length must match samples"));
        }
    }
    let n = samples.len() as f64;
    let mu: f64 = match weights {
        Some(w) => samples.iter().zip(w).map(|(x, p)| x * p).sum(),
        None => samples.iter().sum::<f64>() / n,
    };
    let z: Vec<f64> = samples.iter().map(|x| x - mu).collect();
    if z.iter().all(|&v| v.abs() <= 1e-14 * mu.abs().max(1.0)) {
        return Ok(DeviationPair {
            sigma_f: 0.0,
            sigma_b: 0.0,
            mu,
        });
    }
    let zn: Vec<f64> = z.iter().map(|v| -v).collect();
    let sf = sup_scaled_log_mgf(&z, weights).sqrt();
    let sb = sup_scaled_log_mgf(&zn, weights).sqrt();
    Ok(DeviationPair {
        sigma_f: sf,
        sigma_b: sb,
        mu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn golden_quadratic_and_kink() {
        let (x, _) = golden_min(|x| (x - 2.0) * (x - 2.0), Bracket::new(0.0, 5.0));
        assert_abs_diff_eq!(x, 2.0, epsilon = 1e-8);
        let (x, _) = golden_min(|x| (x - 1.0).abs(), Bracket::new(0.0, 3.0));
        assert_abs_diff_eq!(x, 1.0, epsilon = 1e-6);
        let (x, _) = golden_min(|x| x * 10f64.ln() + 1.0 / x, Bracket::new(1e-3, 10.0));
        assert_abs_diff_eq!(x, 1.0 / 10f64.ln().sqrt(), epsilon = 1e-7);
    }

    #[test]
    fn cvar_examples() {
        assert_abs_diff_eq!(cvar_discrete(&[0.5, 0.5], &[0.0, 1.0], 1.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(cvar_discrete(&[0.9, 0.1], &[0.0, 1.0], 0.1), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cvar_discrete(&[0.5, 0.5], &[0.0, 1.0], 0.5), 1.0, epsilon = 1e-12);
    }

    fn cvar_by_t_grid(p: &[f64], c: &[f64], eps: f64) -> f64 {
        // The minimum over t is attained at one of the c values.
        c.iter()
            .map(|&t| t + p.iter().zip(c).map(|(pi, ci)| pi * (ci - t).max(0.0)).sum::<f64>() / eps)
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn cvar_matches_t_grid() {
        let p = [0.1, 0.25, 0.05, 0.3, 0.3];
        let c = [3.0, -1.0, 7.5, 0.2, 2.0];
        for &eps in &[0.03, 0.1, 0.2, 0.5, 0.77, 1.0] {
            assert_abs_diff_eq!(cvar_discrete(&p, &c, eps), cvar_by_t_grid(&p, &c, eps), epsilon = 1e-12);
        }
    }

    fn chi2_div(p: &[f64], q: &[f64]) -> f64 {
        p.iter().zip(q).map(|(pi, qi)| (pi - qi) * (pi - qi) / (2.0 * pi)).sum()
    }

    #[test]
    fn wce_chi2_matches_simplex_grid() {
        let ph = [1.0 / 3.0; 3];
        let c = [0.0, 1.0, 2.0];
        let rho = 0.05;
        let m = 1000;
        let mut best = f64::NEG_INFINITY;
        for i in 0..=m {
            for j in 0..=(m - i) {
                let p = [i as f64 / m as f64, j as f64 / m as f64, (m - i - j) as f64 / m as f64];
                if p.iter().all(|&x| x > 0.0) && chi2_div(&p, &ph) <= rho {
                    best = best.max(p[1] + 2.0 * p[2]);
                }
            }
        }
        let w = wce_chi2(&ph, &c, rho).unwrap();
        assert!((w.value - best).abs() < 1e-3, "{} vs {best}", w.value);
        assert!(chi2_div(&w.p, &ph) <= rho + 1e-9);
        assert_abs_diff_eq!(w.p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn wce_g_matches_line_grid() {
        let ph = [0.5, 0.5];
        let rho = 0.02;
        let mut best = f64::NEG_INFINITY;
        for k in 1..1_000_000 {
            let p1 = k as f64 / 1e6;
            let d = 0.5 * (0.5 / (1.0 - p1)).ln() + 0.5 * (0.5 / p1).ln();
            if d <= rho {
                best = best.max(p1);
            }
        }
        let w = wce_g(&ph, &[0.0, 1.0], rho).unwrap();
        assert!((w.value - best).abs() < 1e-3);
    }

    #[test]
    fn wce_limits() {
        let ph = [0.2, 0.3, 0.5];
        let c = [1.0, -2.0, 0.5];
        let mean = 0.2 - 0.6 + 0.25;
        assert_eq!(wce_chi2(&ph, &c, 0.0).unwrap().value, mean);
        assert_eq!(wce_g(&ph, &c, 0.0).unwrap().value, mean);
        // The chi-square ball never reaches a vertex; the deficit scales like 1/ρ.
        assert_abs_diff_eq!(wce_chi2(&ph, &c, 1e8).unwrap().value, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(wce_g(&ph, &c, 50.0).unwrap().value, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn deviations_rademacher_and_constant() {
        let s: Vec<f64> = (0..1000).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let d = deviations(&s).unwrap();
        assert_abs_diff_eq!(d.sigma_f, 1.0, epsilon = 1e-3);
        assert_abs_diff_eq!(d.sigma_b, 1.0, epsilon = 1e-3);
        let d = deviations(&[2.5; 10]).unwrap();
        assert_eq!((d.sigma_f, d.sigma_b, d.mu), (0.0, 0.0, 2.5));
    }

    #[test]
    fn deviations_skewed_two_point() {
        let hi = (6.0f64 / 11.0 * 5.0 / 11.0).sqrt() / (6.0 / 11.0);
        let lo = -(6.0f64 / 11.0 * 5.0 / 11.0).sqrt() / (5.0 / 11.0);
        let s: Vec<f64> = (0..11).map(|k| if k < 6 { hi } else { lo }).collect();
        let d = deviations(&s).unwrap();
        // Grid evaluation of both suprema.
        let grid = |sign: f64| {
            (1..20_000)
                .map(|k| {
                    let x = k as f64 * 1e-3;
                    let m: f64 = s.iter().map(|v| (sign * x * v).exp()).sum::<f64>() / 11.0;
                    2.0 * m.ln() / (x * x)
                })
                .fold(0.0f64, f64::max)
                .sqrt()
        };
        assert!((d.sigma_f - grid(1.0)).abs() < 1e-4);
        assert!((d.sigma_b - grid(-1.0)).abs() < 1e-4);
        assert!(d.sigma_f < d.sigma_b);
    }
}
