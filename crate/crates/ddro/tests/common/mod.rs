//! Instances and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use ddro::data::{Dataset, DiscreteDistribution, RandomSource};
use ddro::lp::{solve_lp, Constraint, LinearProgram, Sense};
use ddro::robust::{RobustLinearProgram, UncertainConstraint};
use ddro::sets::UncertaintySet;
use rand::Rng;
use rand_distr::StandardNormal;

/// Eight points on the unit circle with uneven weights.
pub fn octagon() -> DiscreteDistribution {
    let probs = vec![0.05, 0.10, 0.20, 0.15, 0.05, 0.15, 0.20, 0.10];
    let support = (0..8)
        .map(|k| {
            let a = PI / 8.0 + k as f64 * PI / 4.0;
            vec![a.cos(), a.sin()]
        })
        .collect();
    DiscreteDistribution::new(support, probs).unwrap()
}

/// Standard normal rows in dimension `d`, rejected outside the ball of `radius`.
pub fn truncated_normal(n: usize, d: usize, radius: f64, rng: &mut impl Rng) -> Dataset {
    let mut flat = Vec::with_capacity(n * d);
    let mut kept = 0;
    while kept < n {
        let row: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        if row.iter().map(|x| x * x).sum::<f64>() <= radius * radius {
            flat.extend(row);
            kept += 1;
        }
    }
    Dataset::from_flat(n, d, flat).unwrap()
}

pub fn random_unit(d: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// CVaR by checking every breakpoint of t + (1/ε) E(c − t)⁺.
pub fn cvar_breakpoints(p: &[f64], c: &[f64], eps: f64) -> f64 {
    c.iter()
        .map(|&t| t + p.iter().zip(c).map(|(pi, ci)| pi * (ci - t).max(0.0)).sum::<f64>() / eps)
        .fold(f64::INFINITY, f64::min)
}

/// CVaR by a coarse grid on t followed by a fine grid around the best point.
pub fn cvar_t_grid(p: &[f64], c: &[f64], eps: f64) -> f64 {
    let obj = |t: f64| t + p.iter().zip(c).map(|(pi, ci)| pi * (ci - t).max(0.0)).sum::<f64>() / eps;
    let lo = c.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mut a, mut b) = (lo, hi);
    let mut best = f64::INFINITY;
    for _ in 0..3 {
        let m = 20_000;
        let h = (b - a) / m as f64;
        let mut arg = a;
        for k in 0..=m {
            let t = a + h * k as f64;
            let f = obj(t);
            if f < best {
                best = f;
                arg = t;
            }
        }
        a = (arg - 2.0 * h).max(lo);
        b = (arg + 2.0 * h).min(hi);
    }
    best
}

pub fn chi2_divergence(p_hat: &[f64], p: &[f64]) -> f64 {
    p.iter().zip(p_hat).map(|(pi, qi)| (pi - qi) * (pi - qi) / (2.0 * pi)).sum()
}

pub fn kl_divergence(p_hat: &[f64], p: &[f64]) -> f64 {
    p_hat
        .iter()
        .zip(p)
        .filter(|(q, _)| **q > 0.0)
        .map(|(q, pi)| q * (q / pi).ln())
        .sum()
}

/// max over the 3-simplex ball {div(p) ≤ ρ} of CVaR_ε^p(c), by a zooming grid.
pub fn ball_cvar_simplex_grid(p_hat: &[f64], c: &[f64], rho: f64, eps: f64, div: fn(&[f64], &[f64]) -> f64) -> f64 {
    assert_eq!(p_hat.len(), 3);
    let mut center = [p_hat[0], p_hat[1]];
    let mut half = 0.5;
    let mut best = f64::NEG_INFINITY;
    for _ in 0..10 {
        let m = 400;
        let h = 2.0 * half / m as f64;
        let mut arg = center;
        for i in 0..=m {
            for j in 0..=m {
                let p0 = center[0] - half + h * i as f64;
                let p1 = center[1] - half + h * j as f64;
                let p2 = 1.0 - p0 - p1;
                if p0 <= 0.0 || p1 <= 0.0 || p2 <= 0.0 {
                    continue;
                }
                let p = [p0, p1, p2];
                if div(p_hat, &p) > rho {
                    continue;
                }
                let f = cvar_breakpoints(&p, c, eps);
                if f > best {
                    best = f;
                    arg = [p0, p1];
                }
            }
        }
        center = arg;
        half = 20.0 * h;
    }
    best
}

/// Worst-case M-set robust LP written out with interval coefficients:
/// min cᵀx, x in the box, Σ_i max(ℓ_i (Fx + f_u)_i, h_i (Fx + f_u)_i) + f_xᵀx + f₀ ≤ 0.
pub fn interval_lp(rlp: &RobustLinearProgram, lower: &[f64], upper: &[f64]) -> f64 {
    assert_eq!(rlp.uncertain.len(), 1);
    let uc = &rlp.uncertain[0];
    let k = rlp.k();
    let d = uc.f_u.len();
    let mut obj = rlp.objective.clone();
    obj.extend(vec![0.0; d]);
    let mut lp = LinearProgram::new(Sense::Min, obj);
    for j in 0..k {
        lp.set_bounds(j, rlp.lower[j], rlp.upper[j]);
    }
    for i in 0..d {
        lp.set_bounds(k + i, -1e6, 1e6);
        for bound in [lower[i], upper[i]] {
            // w_i ≥ b·(F x)_i + b·f_u_i
            let mut row = vec![0.0; k + d];
            for j in 0..k {
                row[j] = bound * uc.f[i * k + j];
            }
            row[k + i] = -1.0;
            lp.push(Constraint::le(row, -bound * uc.f_u[i]));
        }
    }
    let mut row = uc.f_x.clone();
    row.extend(vec![1.0; d]);
    lp.push(Constraint::le(row, -uc.f0));
    let s = solve_lp(&lp).unwrap();
    assert!(s.is_optimal());
    s.objective
}

/// min cᵀx over a 2-D box subject to one uncertain constraint, by a zooming
/// grid that only calls the set's support function for feasibility.
pub fn grid_2d(rlp: &RobustLinearProgram) -> f64 {
    assert_eq!(rlp.k(), 2);
    let feasible = |x: &[f64]| {
        rlp.uncertain.iter().all(|c| {
            let v = c.direction(x);
            c.set.support(&v, c.eps).unwrap().value <= c.budget(x)
        })
    };
    let (mut lo, mut hi) = ([rlp.lower[0], rlp.lower[1]], [rlp.upper[0], rlp.upper[1]]);
    let mut best = f64::INFINITY;
    let mut arg = None;
    for _ in 0..12 {
        let m = 200;
        let h = [(hi[0] - lo[0]) / m as f64, (hi[1] - lo[1]) / m as f64];
        for i in 0..=m {
            for j in 0..=m {
                let x = [lo[0] + h[0] * i as f64, lo[1] + h[1] * j as f64];
                let f = dot(&rlp.objective, &x);
                if f < best && feasible(&x) {
                    best = f;
                    arg = Some(x);
                }
            }
        }
        let Some(x) = arg else { break };
        for t in 0..2 {
            lo[t] = (x[t] - 20.0 * h[t]).max(rlp.lower[t]);
            hi[t] = (x[t] + 20.0 * h[t]).min(rlp.upper[t]);
        }
    }
    best
}

/// max x₁ + 2x₂ (as a min) over [0, 5]² with uᵀx ≤ 4 robustly.
pub fn two_var_program(set: UncertaintySet, eps: f64) -> RobustLinearProgram {
    let mut rlp = RobustLinearProgram::new(vec![-1.0, -2.0], vec![0.0, 0.0], vec![5.0, 5.0]);
    rlp.uncertain.push(UncertainConstraint::new(
        vec![1.0, 0.0, 0.0, 1.0],
        vec![0.0, 0.0],
        vec![0.0, 0.0],
        -4.0,
        Arc::new(set),
        eps,
    ));
    rlp
}

pub fn seeded(seed: u64) -> rand_chacha::ChaCha8Rng {
    RandomSource::new(seed).rng()
}
