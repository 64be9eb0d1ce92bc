use super::{dot, SupportEval, UncertaintySet};
use crate::data::SupportBox;
use crate::error::{DdroError, Result};
use crate::lp::{resolve_with_cut, solve_lp, Constraint, LinearProgram, Sense};

const MAX_ITERS: usize = 500;
const GAP_TOL: f64 = 1e-7;

/// δ*(v | U ∩ B) = min_w δ*(w | U) + δ*(v − w | B), by Kelley's method on
/// the first term. Variables are (w, θ, s) with s_i bounding the box part.
pub(crate) fn support(set: &UncertaintySet, b: &SupportBox, v: &[f64], eps: f64) -> Result<SupportEval> {
    let d = v.len();
    let nv = 2 * d + 1;
    let th = d;
    let radius = 1e3 * v.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let mut obj = vec![0.0; nv];
    obj[th] = 1.0;
    for o in obj.iter_mut().skip(d + 1) {
        *o = 1.0;
    }
    let mut lp = LinearProgram::new(Sense::Min, obj);
    for i in 0..d {
        lp.set_bounds(i, -radius, radius);
    }
    for j in d..nv {
        lp.set_bounds(j, f64::NEG_INFINITY, f64::INFINITY);
    }
    for i in 0..d {
        for bound in [b.lower[i], b.upper[i]] {
            let mut c = vec![0.0; nv];
            c[d + 1 + i] = 1.0;
            c[i] = bound;
            lp.push(Constraint::ge(c, bound * v[i]));
        }
    }
    let n_box_rows = lp.rows.len();
    let total = |w: &[f64]| -> Result<(f64, Vec<f64>)> {
        let e = set.support_unclipped(w, eps)?;
        let rest: Vec<f64> = v.iter().zip(w).map(|(a, c)| a - c).collect();
        Ok((e.value + b.support(&rest), e.maximizer))
    };
    let cut_row = |u: &[f64]| {
        let mut c = vec![0.0; nv];
        for i in 0..d {
            c[i] = -u[i];
        }
        c[th] = 1.0;
        Constraint::ge(c, 0.0)
    };
    let mut cuts: Vec<Vec<f64>> = Vec::new();
    let mut best_ub = f64::INFINITY;
    for w0 in [v.to_vec(), vec![0.0; d]] {
        let (f, u) = total(&w0)?;
        best_ub = best_ub.min(f);
        lp.push(cut_row(&u));
        cuts.push(u);
    }
    let mut sol = solve_lp(&lp)?;
    let mut converged = false;
    for _ in 0..MAX_ITERS {
        if !sol.is_optimal() {
            return Err(DdroError::numeric(format!("intersection master LP ended {:?}", sol.status)));
        }
        let lb = sol.objective;
        let w = sol.x[..d].to_vec();
        let (f, u) = total(&w)?;
        best_ub = best_ub.min(f);
        if best_ub - lb <= GAP_TOL * (1.0 + best_ub.abs()) {
            converged = true;
            break;
        }
        let row = cut_row(&u);
        cuts.push(u);
        sol = resolve_with_cut(&mut lp, &sol, row)?;
    }
    let mut x = vec![0.0; d];
    let mut mass = 0.0;
    for (k, u) in cuts.iter().enumerate() {
        let mu = sol.y.get(n_box_rows + k).copied().unwrap_or(0.0).max(0.0);
        mass += mu;
        for (xi, ui) in x.iter_mut().zip(u) {
            *xi += mu * ui;
        }
    }
    if mass > 0.0 {
        x.iter_mut().for_each(|xi| *xi /= mass);
    }
    for i in 0..d {
        x[i] = x[i].clamp(b.lower[i], b.upper[i]);
    }
    debug_assert!(dot(&x, v).is_finite());
    Ok(SupportEval {
        value: best_ub,
        maximizer: x,
        converged,
    })
}
