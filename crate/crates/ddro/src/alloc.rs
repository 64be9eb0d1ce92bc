//! Alternating optimization of per-constraint ε under a joint budget
//! Σ ε_j ≤ ε̄, driven by shadow prices and a trust-region LP.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{DdroError, Result};
use crate::lp::{solve_lp, Constraint, LinearProgram, Sense};
use crate::robust::{solve_cutting_plane, RobustLinearProgram, RobustSolution, SolveOptions};

pub const DEFAULT_KAPPA: f64 = 0.05;
const MIN_KAPPA: f64 = 1e-4;
const REL_IMPROVEMENT: f64 = 1e-6;
const EPS_CEIL: f64 = 1.0 - 1e-9;
const EPS_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationRound {
    pub round: usize,
    pub eps: Vec<f64>,
    pub objective: f64,
    pub accepted: bool,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonAllocation {
    pub eps: Vec<f64>,
    pub eps_bar: f64,
    pub kappa: f64,
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
    pub trace: Vec<AllocationRound>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocOptions {
    pub kappa: f64,
    pub max_rounds: usize,
    pub solve: SolveOptions,
}

impl Default for AllocOptions {
    fn default() -> Self {
        AllocOptions {
            kappa: DEFAULT_KAPPA,
            max_rounds: 50,
            solve: SolveOptions::default(),
        }
    }
}

fn with_eps(rlp: &RobustLinearProgram, eps: &[f64]) -> RobustLinearProgram {
    let mut out = rlp.clone();
    for (c, &e) in out.uncertain.iter_mut().zip(eps) {
        c.eps = e;
    }
    out
}

/// The trust-region step: min Σ coef_j ε_j over lower ≤ ε ≤ upper,
/// Σ ε ≤ ε̄ and ‖ε − ε′‖₁ ≤ κ.
fn eps_step(coef: &[f64], current: &[f64], lower: &[f64], upper: &[f64], eps_bar: f64, kappa: f64) -> Result<Vec<f64>> {
    let m = coef.len();
    let mut obj = vec![0.0; 3 * m];
    obj[..m].copy_from_slice(coef);
    let mut lp = LinearProgram::new(Sense::Min, obj);
    for j in 0..m {
        lp.set_bounds(j, lower[j], upper[j]);
        let mut row = vec![0.0; 3 * m];
        row[j] = 1.0;
        row[m + j] = -1.0;
        row[2 * m + j] = 1.0;
        lp.push(Constraint::eq(row, current[j]));
    }
    let mut trust = vec![0.0; 3 * m];
    trust[m..].iter_mut().for_each(|v| *v = 1.0);
    lp.push(Constraint::le(trust, kappa));
    let mut budget = vec![0.0; 3 * m];
    budget[..m].iter_mut().for_each(|v| *v = 1.0);
    lp.push(Constraint::le(budget, eps_bar));
    let sol = solve_lp(&lp)?;
    if !sol.is_optimal() {
        return Err(DdroError::numeric(format!("allocation LP ended {:?}", sol.status)));
    }
    Ok(sol.x[..m].iter().zip(lower.iter().zip(upper)).map(|(e, (l, u))| e.clamp(*l, *u)).collect())
}

pub fn optimize_allocation(
    rlp: &RobustLinearProgram,
    eps_bar: f64,
    opts: &AllocOptions,
) -> Result<(RobustSolution, EpsilonAllocation)> {
    crate::sets::check_eps(eps_bar).map_err(|_| {
        DdroError::validation("eps_bar", format!("must lie in (0,1), got {eps_bar}"))
    })?;
    if !(opts.kappa > 0.0 && opts.kappa.is_finite()) {
        return Err(DdroError::validation("kappa", "must be positive"));
    }
    let m = rlp.uncertain.len();
    if m == 0 {
        return Err(DdroError::validation("uncertain", "need at least one uncertain constraint"));
    }
    for (j, c) in rlp.uncertain.iter().enumerate() {
        if !c.set.simultaneous() {
            return Err(DdroError::validation(
                format!("uncertain[{j}]"),
                "an M set does not hold simultaneously over eps and cannot be reallocated",
            ));
        }
    }
    let upper: Vec<f64> = rlp
        .uncertain
        .iter()
        .map(|c| c.set.kind().eps_upper().min(EPS_CEIL))
        .collect();
    let mut eps: Vec<f64> = upper.iter().map(|u| (eps_bar / m as f64).min(*u)).collect();
    let mut sol = solve_cutting_plane(&with_eps(rlp, &eps), &opts.solve)?;
    let mut kappa = opts.kappa;
    let mut lower = vec![EPS_FLOOR; m];
    let mut trace = vec![AllocationRound {
        round: 0,
        eps: eps.clone(),
        objective: sol.objective,
        accepted: true,
        kappa,
    }];
    for round in 1..=opts.max_rounds {
        if sol.shadow_prices.iter().all(|&l| l == 0.0) {
            break;
        }
        let mut coef = vec![0.0; m];
        for (j, c) in rlp.uncertain.iter().enumerate() {
            let v = c.direction(&sol.x);
            let t = c.budget(&sol.x);
            let lam = sol.shadow_prices[j];
            coef[j] = if lam > 0.0 { lam * c.set.eps_gradient(&v, eps[j])? } else { 0.0 };
            let lb = c.set.eps_lower_bound(&v, t).unwrap_or(eps[j]);
            lower[j] = lb.clamp(EPS_FLOOR, eps[j]);
        }
        let next = eps_step(&coef, &eps, &lower, &upper, eps_bar, kappa)?;
        let cand = solve_cutting_plane(&with_eps(rlp, &next), &opts.solve)?;
        let accepted = cand.objective <= sol.objective;
        trace.push(AllocationRound {
            round,
            eps: next.clone(),
            objective: cand.objective,
            accepted,
            kappa,
        });
        if accepted {
            let gain = sol.objective - cand.objective;
            eps = next;
            sol = cand;
            if gain <= REL_IMPROVEMENT * (1.0 + sol.objective.abs()) {
                break;
            }
        } else {
            kappa *= 0.5;
            if kappa < MIN_KAPPA {
                break;
            }
        }
    }
    let alloc = EpsilonAllocation {
        eps,
        eps_bar,
        kappa,
        upper,
        lower,
        trace,
    };
    Ok((sol, alloc))
}

/// Convenience: the same problem solved at ε_j = ε̄/m.
pub fn solve_uniform(rlp: &RobustLinearProgram, eps_bar: f64, opts: &SolveOptions) -> Result<RobustSolution> {
    let m = rlp.uncertain.len().max(1);
    let eps: Vec<f64> = rlp
        .uncertain
        .iter()
        .map(|c| (eps_bar / m as f64).min(c.set.kind().eps_upper().min(EPS_CEIL)))
        .collect();
    solve_cutting_plane(&with_eps(rlp, &eps), opts)
}

/// Shared handle type used when several constraints bind the same set.
pub type SharedSet = Arc<crate::sets::UncertaintySet>;
