//! Cutting-plane solver for linear programs with bi-affine uncertain
//! constraints δ*(F x + f_u | U_ε) + f_xᵀx + f₀ ≤ 0.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{DdroError, Result};
use crate::lp::{resolve_with_cut, solve_lp, Constraint, LinearProgram, LpSolution, LpStatus, Sense};
use crate::sets::{SupportEval, UncertaintySet};

/// One uncertain constraint. `f` is d×k row-major.
#[derive(Debug, Clone)]
pub struct UncertainConstraint {
    pub f: Vec<f64>,
    pub f_u: Vec<f64>,
    pub f_x: Vec<f64>,
    pub f0: f64,
    pub set: Arc<UncertaintySet>,
    pub eps: f64,
}

impl UncertainConstraint {
    pub fn new(f: Vec<f64>, f_u: Vec<f64>, f_x: Vec<f64>, f0: f64, set: Arc<UncertaintySet>, eps: f64) -> Self {
        UncertainConstraint {
            f,
            f_u,
            f_x,
            f0,
            set,
            eps,
        }
    }

    fn d(&self) -> usize {
        self.f_u.len()
    }

    fn k(&self) -> usize {
        self.f_x.len()
    }

    /// v = F x + f_u.
    pub fn direction(&self, x: &[f64]) -> Vec<f64> {
        let k = self.k();
        (0..self.d())
            .map(|i| self.f_u[i] + (0..k).map(|j| self.f[i * k + j] * x[j]).sum::<f64>())
            .collect()
    }

    /// t = −f_xᵀx − f₀, the budget the support function must stay under.
    pub fn budget(&self, x: &[f64]) -> f64 {
        -self.f_x.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - self.f0
    }

    fn validate(&self, k: usize, idx: usize) -> Result<()> {
        let field = format!("uncertain[{idx}]");
        let d = self.set.dim();
        if self.f_x.len() != k || self.f_u.len() != d || self.f.len() != d * k {
            return Err(DdroError::validation(
                field,
                format!("expected F {d}x{k}, f_u of length {d} and f_x of length {k}"),
            ));
        }
        if self.f.iter().chain(&self.f_u).chain(&self.f_x).any(|v| !v.is_finite()) || !self.f0.is_finite() {
            return Err(DdroError::validation(field, "non-finite coefficient"));
        }
        crate::sets::check_eps(self.eps)
    }

    /// Linear cut from a support maximizer u: (Fᵀu + f_x)ᵀx ≤ −f₀ − uᵀf_u − shift.
    fn cut(&self, u: &[f64], shift: f64) -> Constraint {
        let k = self.k();
        let coeffs: Vec<f64> = (0..k)
            .map(|j| self.f_x[j] + (0..self.d()).map(|i| self.f[i * k + j] * u[i]).sum::<f64>())
            .collect();
        let rhs = -self.f0 - u.iter().zip(&self.f_u).map(|(a, b)| a * b).sum::<f64>() - shift;
        Constraint::le(coeffs, rhs)
    }
}

/// min cᵀx over deterministic rows, finite bounds and uncertain constraints.
#[derive(Debug, Clone)]
pub struct RobustLinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Constraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub uncertain: Vec<UncertainConstraint>,
}

impl RobustLinearProgram {
    pub fn new(objective: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        RobustLinearProgram {
            objective,
            rows: Vec::new(),
            lower,
            upper,
            uncertain: Vec::new(),
        }
    }

    pub fn k(&self) -> usize {
        self.objective.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if k == 0 {
            return Err(DdroError::validation("objective", "no decision variables"));
        }
        if self.lower.len() != k || self.upper.len() != k {
            return Err(DdroError::validation("bounds", format!("need {k} lower and upper bounds")));
        }
        if self.lower.iter().chain(&self.upper).any(|b| !b.is_finite()) {
            return Err(DdroError::validation(
                "bounds",
                "every decision needs finite bounds so the master problem stays bounded",
            ));
        }
        if self.rows.is_empty() && self.uncertain.is_empty() {
            return Err(DdroError::validation("constraints", "need at least one constraint"));
        }
        for (i, u) in self.uncertain.iter().enumerate() {
            u.validate(k, i)?;
        }
        self.master().validate()
    }

    fn master(&self) -> LinearProgram {
        let mut lp = LinearProgram::new(Sense::Min, self.objective.clone());
        for j in 0..self.k() {
            lp.set_bounds(j, self.lower[j], self.upper[j]);
        }
        for r in &self.rows {
            lp.push(r.clone());
        }
        lp
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub feas_tol: f64,
    pub max_iter: usize,
    /// Break ties among optimal x by minimal ‖x‖₂.
    pub min_norm: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            feas_tol: 1e-7,
            max_iter: 500,
            min_norm: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// δ*(F x + f_u | U_ε) + f_xᵀx + f₀ per uncertain constraint.
    pub slacks: Vec<f64>,
    /// Sum of the master duals of each uncertain constraint's cuts.
    pub shadow_prices: Vec<f64>,
    pub cut_count: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Master objective after each iteration.
    pub lower_bounds: Vec<f64>,
}

fn check_master(sol: &LpSolution) -> Result<()> {
    match sol.status {
        LpStatus::Optimal => Ok(()),
        LpStatus::Infeasible => Err(DdroError::RobustInfeasible(
            "the master problem has no feasible point".into(),
        )),
        s => Err(DdroError::numeric(format!("master LP ended {s:?}"))),
    }
}

/// Evaluates one constraint at x: (slack, support answer).
fn evaluate(c: &UncertainConstraint, x: &[f64]) -> Result<(f64, SupportEval)> {
    let v = c.direction(x);
    let s = c.set.support(&v, c.eps)?;
    if !s.converged {
        return Err(DdroError::numeric("support oracle did not converge"));
    }
    Ok((s.value - c.budget(x), s))
}

/// Cut for a violated constraint. When the maximizer under-reports the
/// value, the cut is shifted so it still passes through the current value.
fn cut_for(c: &UncertainConstraint, x: &[f64], s: &SupportEval) -> Constraint {
    let v = c.direction(x);
    let at: f64 = s.maximizer.iter().zip(&v).map(|(a, b)| a * b).sum();
    c.cut(&s.maximizer, (s.value - at).max(0.0))
}

/// Worst-case slack of each uncertain constraint at x.
pub fn certify(rlp: &RobustLinearProgram, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != rlp.k() {
        return Err(DdroError::validation("x", format!("expected {} entries", rlp.k())));
    }
    rlp.uncertain.iter().map(|c| evaluate(c, x).map(|(s, _)| s)).collect()
}

pub fn solve_cutting_plane(rlp: &RobustLinearProgram, opts: &SolveOptions) -> Result<RobustSolution> {
    rlp.validate()?;
    let mut lp = rlp.master();
    let base_rows = lp.rows.len();
    let mut owner: Vec<usize> = Vec::new();
    let mut sol = solve_lp(&lp)?;
    check_master(&sol)?;
    let mut lower_bounds = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut slacks = vec![0.0; rlp.uncertain.len()];
    while iterations < opts.max_iter {
        iterations += 1;
        lower_bounds.push(sol.objective);
        let mut new_cuts = Vec::new();
        for (j, c) in rlp.uncertain.iter().enumerate() {
            let (slack, s) = evaluate(c, &sol.x)?;
            slacks[j] = slack;
            if slack > opts.feas_tol {
                new_cuts.push((j, cut_for(c, &sol.x, &s)));
            }
        }
        if new_cuts.is_empty() {
            converged = true;
            break;
        }
        for (j, cut) in new_cuts {
            owner.push(j);
            sol = resolve_with_cut(&mut lp, &sol, cut)?;
            check_master(&sol)?;
        }
    }
    if !converged {
        for (j, c) in rlp.uncertain.iter().enumerate() {
            slacks[j] = evaluate(c, &sol.x)?.0;
        }
    }
    let mut shadow_prices = vec![0.0; rlp.uncertain.len()];
    for (r, &j) in owner.iter().enumerate() {
        shadow_prices[j] -= sol.y[base_rows + r];
    }
    for p in shadow_prices.iter_mut() {
        *p = p.max(0.0);
    }
    let objective = sol.objective;
    let mut x = sol.x.clone();
    if opts.min_norm && converged {
        if let Some(y) = min_norm_polish(rlp, &mut lp, objective, opts)? {
            x = y;
            for (j, c) in rlp.uncertain.iter().enumerate() {
                slacks[j] = evaluate(c, &x)?.0;
            }
        }
    }
    Ok(RobustSolution {
        objective: rlp.objective.iter().zip(&x).map(|(a, b)| a * b).sum(),
        x,
        slacks,
        shadow_prices,
        cut_count: owner.len(),
        iterations,
        converged,
        lower_bounds,
    })
}

/// Secondary solve: min ‖x‖² over the optimal face, by Kelley cuts on the
/// quadratic in variables (x, t). Robust cuts are added when the iterate
/// leaves the uncertain constraints.
fn min_norm_polish(
    rlp: &RobustLinearProgram,
    master: &mut LinearProgram,
    objective: f64,
    opts: &SolveOptions,
) -> Result<Option<Vec<f64>>> {
    let k = rlp.k();
    let tie_tol = 1e-9 * (1.0 + objective.abs());
    let mut obj = vec![0.0; k + 1];
    obj[k] = 1.0;
    let mut lp = LinearProgram::new(Sense::Min, obj);
    for j in 0..k {
        lp.set_bounds(j, rlp.lower[j], rlp.upper[j]);
    }
    let t_hi: f64 = (0..k).map(|j| rlp.lower[j].powi(2).max(rlp.upper[j].powi(2))).sum();
    lp.set_bounds(k, 0.0, t_hi);
    let widen = |c: &Constraint| {
        let mut coeffs = c.coeffs.clone();
        coeffs.push(0.0);
        Constraint {
            coeffs,
            relation: c.relation,
            rhs: c.rhs,
        }
    };
    for r in &master.rows {
        lp.push(widen(r));
    }
    let mut level = rlp.objective.clone();
    level.push(0.0);
    lp.push(Constraint::le(level, objective + tie_tol));
    let mut sol = solve_lp(&lp)?;
    let mut best: Option<Vec<f64>> = None;
    for _ in 0..400 {
        if !sol.is_optimal() {
            return Ok(best);
        }
        let x = sol.x[..k].to_vec();
        let norm2: f64 = x.iter().map(|v| v * v).sum();
        let mut cut = None;
        for c in &rlp.uncertain {
            let (slack, s) = evaluate(c, &x)?;
            if slack > opts.feas_tol {
                cut = Some(widen(&cut_for(c, &x, &s)));
                break;
            }
        }
        let row = match cut {
            Some(r) => r,
            None => {
                if norm2 - sol.x[k] <= 1e-12 * (1.0 + norm2) {
                    return Ok(Some(x));
                }
                best = Some(x.clone());
                // t ≥ ‖x_k‖² + 2x_kᵀ(x − x_k).
                let mut c: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
                c.push(-1.0);
                Constraint::le(c, norm2)
            }
        };
        sol = resolve_with_cut(&mut lp, &sol, row)?;
    }
    Ok(best)
}
