//! Dense two-phase primal simplex with a warm-started dual simplex for
//! re-solving after a cut is appended.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{DdroError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

/// One linear row `coeffs·x (relation) rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn le(coeffs: Vec<f64>, rhs: f64) -> Self {
        Constraint { coeffs, relation: Relation::Le, rhs }
    }
    pub fn ge(coeffs: Vec<f64>, rhs: f64) -> Self {
        Constraint { coeffs, relation: Relation::Ge, rhs }
    }
    pub fn eq(coeffs: Vec<f64>, rhs: f64) -> Self {
        Constraint { coeffs, relation: Relation::Eq, rhs }
    }
}

/// `sense cᵀx` subject to rows and `lower ≤ x ≤ upper` (bounds may be infinite).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub rows: Vec<Constraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    /// Variables default to `x ≥ 0`.
    pub fn new(sense: Sense, objective: Vec<f64>) -> Self {
        let n = objective.len();
        LinearProgram {
            sense,
            objective,
            rows: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn push(&mut self, row: Constraint) {
        self.rows.push(row);
    }

    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        self.lower[j] = lower;
        self.upper[j] = upper;
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        if n == 0 {
            return Err(DdroError::validation("lp", "no variables"));
        }
        if self.lower.len() != n || self.upper.len() != n {
            return Err(DdroError::validation("lp", "bound vectors must match objective length"));
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(DdroError::validation("lp", "objective has non-finite entries"));
        }
        for (j, (&l, &u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if l.is_nan() || u.is_nan() || l > u || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(DdroError::validation("lp", format!("bad bounds on x{j}: [{l}, {u}]")));
            }
        }
        for (i, r) in self.rows.iter().enumerate() {
            if r.coeffs.len() != n {
                return Err(DdroError::validation(
                    "lp",
                    format!("row {i} has {} coefficients, expected {n}", r.coeffs.len()),
                ));
            }
            if !r.rhs.is_finite() || r.coeffs.iter().any(|v| !v.is_finite()) {
                return Err(DdroError::validation("lp", format!("row {i} has non-finite entries")));
            }
        }
        Ok(())
    }

    /// Largest violation of rows or bounds at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for r in &self.rows {
            let lhs: f64 = r.coeffs.iter().zip(x).map(|(a, b)| a * b).sum();
            let v = match r.relation {
                Relation::Le => lhs - r.rhs,
                Relation::Ge => r.rhs - lhs,
                Relation::Eq => (lhs - r.rhs).abs(),
            };
            worst = worst.max(v);
        }
        for (j, &xj) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - xj).max(xj - self.upper[j]);
        }
        worst
    }

    fn scale(&self) -> f64 {
        let mut s: f64 = 1.0;
        for r in &self.rows {
            s = s.max(r.rhs.abs());
            for a in &r.coeffs {
                s = s.max(a.abs());
            }
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    /// ∂objective/∂rhs for each row, in the program's own sense.
    pub y: Vec<f64>,
    /// `c − Aᵀy`; nonzero only for variables sitting at a bound.
    pub reduced_costs: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    warm: Option<Arc<Tableau>>,
}

impl LpSolution {
    fn failed(status: LpStatus, n: usize, m: usize, iterations: usize) -> Self {
        LpSolution {
            status,
            x: vec![f64::NAN; n],
            y: vec![f64::NAN; m],
            reduced_costs: vec![f64::NAN; n],
            objective: f64::NAN,
            iterations,
            warm: None,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// x = lo + x'
    Shift { col: usize, lo: f64 },
    /// x = hi − x'
    Reflect { col: usize, hi: f64 },
    /// x = x⁺ − x⁻
    Split { pos: usize, neg: usize },
}

impl VarMap {
    fn offset(&self) -> f64 {
        match *self {
            VarMap::Shift { lo, .. } => lo,
            VarMap::Reflect { hi, .. } => hi,
            VarMap::Split { .. } => 0.0,
        }
    }
}

/// Standard-form tableau `B⁻¹[A | I]` for `min cᵀx', A x' = b, x' ≥ 0`.
#[derive(Debug, Clone)]
struct Tableau {
    t: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    cost: Vec<f64>,
    d: Vec<f64>,
    /// Column that started as +e_i for row i; B⁻¹ is read off these.
    init_col: Vec<usize>,
    /// ±1: the multiplier applied to row i to make its rhs non-negative.
    row_sign: Vec<f64>,
    /// Artificial columns never re-enter after phase I.
    blocked: Vec<bool>,
    maps: Vec<VarMap>,
    n_struct: usize,
    /// Number of user rows; the remaining rows are upper-bound rows or cuts.
    user_rows: Vec<Option<usize>>,
}

const PIVOT_TOL: f64 = 1e-9;
const MAX_ITER_FACTOR: usize = 50;

fn build(lp: &LinearProgram) -> Tableau {
    let n = lp.n_vars();
    let mut maps = Vec::with_capacity(n);
    let mut n_struct = 0;
    for j in 0..n {
        let (l, u) = (lp.lower[j], lp.upper[j]);
        if l.is_finite() {
            maps.push(VarMap::Shift { col: n_struct, lo: l });
            n_struct += 1;
        } else if u.is_finite() {
            maps.push(VarMap::Reflect { col: n_struct, hi: u });
            n_struct += 1;
        } else {
            maps.push(VarMap::Split { pos: n_struct, neg: n_struct + 1 });
            n_struct += 2;
        }
    }
    // rows in structural variables: (coeffs, relation, rhs, user index)
    let mut srows: Vec<(Vec<f64>, Relation, f64, Option<usize>)> = Vec::new();
    for (i, r) in lp.rows.iter().enumerate() {
        let (a, b) = map_row(&maps, n_struct, &r.coeffs, r.rhs);
        srows.push((a, r.relation, b, Some(i)));
    }
    for (j, m) in maps.iter().enumerate() {
        if let VarMap::Shift { col, lo } = *m {
            if lp.upper[j].is_finite() {
                let mut a = vec![0.0; n_struct];
                a[col] = 1.0;
                srows.push((a, Relation::Le, lp.upper[j] - lo, None));
            }
        }
    }
    let m = srows.len();
    let n_slack = srows.iter().filter(|r| r.1 != Relation::Eq).count();
    let mut row_sign = Vec::with_capacity(m);
    let mut need_art = Vec::with_capacity(m);
    for (_, rel, b, _) in &srows {
        let s = if *b < 0.0 { -1.0 } else { 1.0 };
        row_sign.push(s);
        let slack_coef = match rel {
            Relation::Le => s,
            Relation::Ge => -s,
            Relation::Eq => 0.0,
        };
        need_art.push(slack_coef != 1.0);
    }
    let n_art = need_art.iter().filter(|&&v| v).count();
    let ncols = n_struct + n_slack + n_art;
    let mut t = vec![vec![0.0; ncols]; m];
    let mut rhs = vec![0.0; m];
    let mut basis = vec![0; m];
    let mut init_col = vec![0; m];
    let mut blocked = vec![false; ncols];
    let mut next_slack = n_struct;
    let mut next_art = n_struct + n_slack;
    for (i, (a, rel, b, _)) in srows.iter().enumerate() {
        let s = row_sign[i];
        for (k, &v) in a.iter().enumerate() {
            t[i][k] = s * v;
        }
        rhs[i] = s * b;
        if *rel != Relation::Eq {
            let coef = if *rel == Relation::Le { s } else { -s };
            t[i][next_slack] = coef;
            if coef == 1.0 {
                basis[i] = next_slack;
                init_col[i] = next_slack;
            }
            next_slack += 1;
        }
        if need_art[i] {
            t[i][next_art] = 1.0;
            blocked[next_art] = true;
            basis[i] = next_art;
            init_col[i] = next_art;
            next_art += 1;
        }
    }
    let mut cost = vec![0.0; ncols];
    let sgn = if lp.sense == Sense::Max { -1.0 } else { 1.0 };
    for (j, m) in maps.iter().enumerate() {
        let c = sgn * lp.objective[j];
        match *m {
            VarMap::Shift { col, .. } => cost[col] = c,
            VarMap::Reflect { col, .. } => cost[col] = -c,
            VarMap::Split { pos, neg } => {
                cost[pos] = c;
                cost[neg] = -c;
            }
        }
    }
    Tableau {
        t,
        rhs,
        basis,
        cost,
        d: vec![0.0; ncols],
        init_col,
        row_sign,
        blocked,
        maps,
        n_struct,
        user_rows: srows.iter().map(|r| r.3).collect(),
    }
}

fn map_row(maps: &[VarMap], n_struct: usize, coeffs: &[f64], rhs: f64) -> (Vec<f64>, f64) {
    let mut a = vec![0.0; n_struct];
    let mut b = rhs;
    for (j, m) in maps.iter().enumerate() {
        let v = coeffs[j];
        if v == 0.0 {
            continue;
        }
        b -= v * m.offset();
        match *m {
            VarMap::Shift { col, .. } => a[col] = v,
            VarMap::Reflect { col, .. } => a[col] = -v,
            VarMap::Split { pos, neg } => {
                a[pos] = v;
                a[neg] = -v;
            }
        }
    }
    (a, b)
}

impl Tableau {
    fn m(&self) -> usize {
        self.rhs.len()
    }

    fn ncols(&self) -> usize {
        self.cost.len()
    }

    fn price(&mut self, cost: &[f64]) {
        let mut d = cost.to_vec();
        for (k, row) in self.t.iter().enumerate() {
            let cb = cost[self.basis[k]];
            if cb != 0.0 {
                for (dj, &a) in d.iter_mut().zip(row) {
                    *dj -= cb * a;
                }
            }
        }
        for &b in &self.basis {
            d[b] = 0.0;
        }
        self.d = d;
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let p = self.t[r][q];
        {
            let row = &mut self.t[r];
            for v in row.iter_mut() {
                *v /= p;
            }
            row[q] = 1.0;
        }
        self.rhs[r] /= p;
        let prow = self.t[r].clone();
        let prhs = self.rhs[r];
        for i in 0..self.m() {
            if i == r {
                continue;
            }
            let f = self.t[i][q];
            if f != 0.0 {
                for (v, &a) in self.t[i].iter_mut().zip(&prow) {
                    *v -= f * a;
                }
                self.t[i][q] = 0.0;
                self.rhs[i] -= f * prhs;
            }
        }
        let f = self.d[q];
        if f != 0.0 {
            for (v, &a) in self.d.iter_mut().zip(&prow) {
                *v -= f * a;
            }
            self.d[q] = 0.0;
        }
        self.basis[r] = q;
    }

    /// Lexicographic minimum ratio row for entering column `q`; `bland`
    /// breaks the remaining ties by smallest basic index instead.
    fn ratio_row(&self, q: usize, bland: bool) -> Option<usize> {
        let mut best = f64::INFINITY;
        let mut cands: Vec<usize> = Vec::new();
        for i in 0..self.m() {
            let a = self.t[i][q];
            if a > PIVOT_TOL {
                let ratio = self.rhs[i].max(0.0) / a;
                let tol = 1e-12 * (1.0 + best.abs().min(ratio.abs()));
                if ratio < best - tol {
                    best = ratio;
                    cands.clear();
                    cands.push(i);
                } else if ratio <= best + tol {
                    cands.push(i);
                }
            }
        }
        if cands.len() <= 1 {
            return cands.first().copied();
        }
        if bland {
            return cands.into_iter().min_by_key(|&i| self.basis[i]);
        }
        for &col in &self.init_col {
            if cands.len() == 1 {
                break;
            }
            let mut lo = f64::INFINITY;
            for &i in &cands {
                lo = lo.min(self.t[i][col] / self.t[i][q]);
            }
            cands.retain(|&i| self.t[i][col] / self.t[i][q] <= lo + 1e-12 * (1.0 + lo.abs()));
        }
        cands.into_iter().min_by_key(|&i| self.basis[i])
    }

    /// Primal simplex on the current cost; returns Ok(true) if optimal,
    /// Ok(false) if unbounded, Err(()) at the iteration limit.
    fn primal(&mut self, opt_tol: f64, iters: &mut usize, limit: usize) -> std::result::Result<bool, ()> {
        let bland_after = 10 * (self.m() + self.ncols());
        let mut local = 0;
        loop {
            let bland = local >= bland_after;
            let mut q = None;
            let mut best = -opt_tol;
            for j in 0..self.ncols() {
                if self.blocked[j] {
                    continue;
                }
                let dj = self.d[j];
                if dj < best {
                    q = Some(j);
                    if bland {
                        break;
                    }
                    best = dj;
                }
            }
            let Some(q) = q else { return Ok(true) };
            let Some(r) = self.ratio_row(q, bland) else { return Ok(false) };
            if *iters >= limit {
                return Err(());
            }
            self.pivot(r, q);
            *iters += 1;
            local += 1;
        }
    }

    /// Dual simplex from a dual-feasible basis. Ok(true) optimal, Ok(false)
    /// primal infeasible, Err(()) iteration limit.
    fn dual(&mut self, feas_tol: f64, iters: &mut usize, limit: usize) -> std::result::Result<bool, ()> {
        loop {
            let mut r = None;
            let mut worst = -feas_tol;
            for i in 0..self.m() {
                if self.rhs[i] < worst {
                    worst = self.rhs[i];
                    r = Some(i);
                }
            }
            let Some(r) = r else { return Ok(true) };
            let mut q = None;
            let mut best = f64::INFINITY;
            let mut best_mag = 0.0;
            for j in 0..self.ncols() {
                let a = self.t[r][j];
                if self.blocked[j] || a >= -PIVOT_TOL {
                    continue;
                }
                let ratio = self.d[j].max(0.0) / -a;
                let tol = 1e-12 * (1.0 + ratio.abs());
                if ratio < best - tol || (ratio <= best + tol && -a > best_mag) {
                    best = best.min(ratio);
                    best_mag = -a;
                    q = Some(j);
                }
            }
            let Some(q) = q else { return Ok(false) };
            if *iters >= limit {
                return Err(());
            }
            self.pivot(r, q);
            *iters += 1;
        }
    }

    fn extract(&self, lp: &LinearProgram, iterations: usize, warm: bool) -> LpSolution {
        let mut xs = vec![0.0; self.ncols()];
        for (i, &b) in self.basis.iter().enumerate() {
            xs[b] = self.rhs[i];
        }
        let x: Vec<f64> = self
            .maps
            .iter()
            .map(|m| match *m {
                VarMap::Shift { col, lo } => lo + xs[col].max(0.0),
                VarMap::Reflect { col, hi } => hi - xs[col].max(0.0),
                VarMap::Split { pos, neg } => xs[pos] - xs[neg],
            })
            .collect();
        let sgn = if lp.sense == Sense::Max { -1.0 } else { 1.0 };
        let mut y = vec![0.0; lp.rows.len()];
        for (i, u) in self.user_rows.iter().enumerate() {
            if let Some(u) = *u {
                y[u] = sgn * self.row_sign[i] * -self.d[self.init_col[i]];
            }
        }
        let mut reduced_costs = lp.objective.clone();
        for (r, &yi) in lp.rows.iter().zip(&y) {
            if yi != 0.0 {
                for (z, &a) in reduced_costs.iter_mut().zip(&r.coeffs) {
                    *z -= a * yi;
                }
            }
        }
        let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        LpSolution {
            status: LpStatus::Optimal,
            x,
            y,
            reduced_costs,
            objective,
            iterations,
            warm: if warm { Some(Arc::new(self.clone())) } else { None },
        }
    }
}

/// Solves `lp` from scratch. Validation errors are returned as `Err`;
/// infeasible, unbounded and iteration-limit outcomes are reported in the status.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    lp.validate()?;
    Ok(solve_cold(lp))
}

fn solve_cold(lp: &LinearProgram) -> LpSolution {
    let n = lp.n_vars();
    let m_user = lp.rows.len();
    let mut tab = build(lp);
    let limit = MAX_ITER_FACTOR * (tab.m() + tab.ncols()) + 1000;
    let mut iters = 0;
    let scale = lp.scale();

    // Phase I: minimize the sum of artificials.
    if tab.blocked.iter().any(|&b| b) {
        let phase1: Vec<f64> = tab.blocked.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let saved = std::mem::take(&mut tab.blocked);
        tab.blocked = vec![false; saved.len()];
        tab.price(&phase1);
        match tab.primal(1e-11, &mut iters, limit) {
            Ok(_) => {}
            Err(()) => return LpSolution::failed(LpStatus::IterationLimit, n, m_user, iters),
        }
        tab.blocked = saved;
        let infeas: f64 = tab
            .basis
            .iter()
            .zip(&tab.rhs)
            .filter(|(b, _)| tab.blocked[**b])
            .map(|(_, v)| v.max(0.0))
            .sum();
        if infeas > 1e-9 * scale {
            return LpSolution::failed(LpStatus::Infeasible, n, m_user, iters);
        }
        // Drive remaining artificials out of the basis where possible.
        for r in 0..tab.m() {
            if !tab.blocked[tab.basis[r]] {
                continue;
            }
            let mut q = None;
            let mut mag = PIVOT_TOL;
            for j in 0..tab.ncols() {
                if !tab.blocked[j] && tab.t[r][j].abs() > mag {
                    mag = tab.t[r][j].abs();
                    q = Some(j);
                }
            }
            if let Some(q) = q {
                tab.pivot(r, q);
                iters += 1;
            }
        }
    }

    let cost = tab.cost.clone();
    tab.price(&cost);
    let opt_tol = 1e-9 * cost.iter().fold(1.0f64, |a, c| a.max(c.abs()));
    match tab.primal(opt_tol, &mut iters, limit) {
        Ok(true) => tab.extract(lp, iters, true),
        Ok(false) => LpSolution::failed(LpStatus::Unbounded, n, m_user, iters),
        Err(()) => LpSolution::failed(LpStatus::IterationLimit, n, m_user, iters),
    }
}

/// Appends `cut` to `lp` and re-optimizes from the basis stored in `prev`
/// with the dual simplex. Falls back to a cold solve when no warm basis is
/// available, the cut is an equality, or the warm result fails verification.
pub fn resolve_with_cut(lp: &mut LinearProgram, prev: &LpSolution, cut: Constraint) -> Result<LpSolution> {
    if cut.coeffs.len() != lp.n_vars() || !cut.rhs.is_finite() || cut.coeffs.iter().any(|v| !v.is_finite()) {
        return Err(DdroError::validation("cut", "wrong length or non-finite entries"));
    }
    lp.push(cut);
    let warm = match (&prev.warm, prev.status, lp.rows.last().map(|c| c.relation)) {
        (Some(w), LpStatus::Optimal, Some(Relation::Le | Relation::Ge)) => w.clone(),
        _ => return solve_lp(lp),
    };
    match warm_step(lp, &warm) {
        Some(sol) => Ok(sol),
        None => solve_lp(lp),
    }
}

fn warm_step(lp: &LinearProgram, prev: &Tableau) -> Option<LpSolution> {
    let cut = lp.rows.last()?;
    let user_idx = lp.rows.len() - 1;
    let mut tab = prev.clone();
    let (mut a, mut b) = map_row(&tab.maps, tab.n_struct, &cut.coeffs, cut.rhs);
    let sign = if cut.relation == Relation::Ge { -1.0 } else { 1.0 };
    if sign < 0.0 {
        a.iter_mut().for_each(|v| *v = -*v);
        b = -b;
    }
    let slack = tab.ncols();
    for row in tab.t.iter_mut() {
        row.push(0.0);
    }
    tab.cost.push(0.0);
    tab.d.push(0.0);
    tab.blocked.push(false);
    let mut row = vec![0.0; slack + 1];
    row[..tab.n_struct].copy_from_slice(&a);
    row[slack] = 1.0;
    let mut rhs = b;
    for k in 0..tab.m() {
        let bk = tab.basis[k];
        let f = row[bk];
        if f != 0.0 {
            for (v, &w) in row.iter_mut().zip(&tab.t[k]) {
                *v -= f * w;
            }
            row[bk] = 0.0;
            rhs -= f * tab.rhs[k];
        }
    }
    tab.t.push(row);
    tab.rhs.push(rhs);
    tab.basis.push(slack);
    tab.init_col.push(slack);
    tab.row_sign.push(sign);
    tab.user_rows.push(Some(user_idx));

    let scale = lp.scale();
    let limit = MAX_ITER_FACTOR * (tab.m() + tab.ncols()) + 1000;
    let mut iters = 0;
    match tab.dual(1e-10 * scale, &mut iters, limit) {
        Ok(true) => {}
        Ok(false) => {
            // Confirm infeasibility with a cold solve rather than trusting
            // an accumulated tableau.
            return None;
        }
        Err(()) => return None,
    }
    // Clean up any dual infeasibility introduced by round-off.
    let opt_tol = 1e-9 * tab.cost.iter().fold(1.0f64, |a, c| a.max(c.abs()));
    match tab.primal(opt_tol, &mut iters, limit) {
        Ok(true) => {}
        _ => return None,
    }
    let sol = tab.extract(lp, iters, true);
    if lp.max_violation(&sol.x) > 1e-7 * scale {
        return None;
    }
    Some(sol)
}
