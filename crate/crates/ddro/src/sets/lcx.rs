use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{check_eps, dot, SetKind, SetParams, SupportEval, UncertaintySet};
use crate::data::{bootstrap_replicates, upper_order_statistic, Dataset, RandomSource};
use crate::error::{DdroError, Result};
use crate::lp::{resolve_with_cut, solve_lp, Constraint, LinearProgram, Sense};

/// Number of ℓ1-sphere directions used when bootstrapping Γ_LCX.
pub const DEFAULT_CUT_GRID: usize = 200;

const DIRECTION_SEED: u64 = 0x6c63_785f_6772_6964;
const GAMMA_FLOOR: f64 = 1e-12;
const MAX_KELLEY_ITERS: usize = 1000;
const STOP_GAP: f64 = 1e-9;
const ACCEPT_GAP: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LcxParams {
    pub d: usize,
    /// Row-major N×d sample.
    pub samples: Vec<f64>,
    pub gamma_lcx: f64,
    pub gamma_sigma: f64,
    pub cut_grid_size: usize,
}

/// Deterministic directions on the ℓ1 sphere: ±e_i first, then random
/// directions with their negations.
fn grid_directions(d: usize, size: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(size.max(2 * d));
    for i in 0..d {
        for s in [1.0, -1.0] {
            let mut a = vec![0.0; d];
            a[i] = s;
            out.push(a);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(DIRECTION_SEED);
    while out.len() + 1 < size {
        let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n1: f64 = g.iter().map(|x: &f64| x.abs()).sum();
        if n1 == 0.0 {
            continue;
        }
        let a: Vec<f64> = g.iter().map(|x| x / n1).collect();
        out.push(a.iter().map(|x| -x).collect());
        out.push(a);
    }
    out
}

/// Projections of the sample on one direction, sorted descending, with
/// the original row of each.
struct Projection {
    order: Vec<usize>,
    values: Vec<f64>,
}

impl Projection {
    fn new(flat: &[f64], d: usize, a: &[f64]) -> Self {
        let n = flat.len() / d;
        let p: Vec<f64> = (0..n).map(|j| dot(&flat[j * d..(j + 1) * d], a)).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&x, &y| p[y].total_cmp(&p[x]));
        let values = order.iter().map(|&j| p[j]).collect();
        Projection { order, values }
    }

    /// sup over β of [full mean (p−β)⁺ − weighted mean (p−β)⁺] / (1+|β|),
    /// over breakpoints at the data and at β = 0.
    fn discrepancy(&self, counts: &[u32]) -> f64 {
        let n = self.values.len() as f64;
        let (mut s1, mut s1p, mut sc, mut scp) = (0.0, 0.0, 0.0, 0.0);
        let mut best: f64 = 0.0;
        for (k, &beta) in self.values.iter().enumerate() {
            let c = counts[self.order[k]] as f64;
            s1 += 1.0;
            s1p += beta;
            sc += c;
            scp += c * beta;
            let diff = ((s1p - beta * s1) - (scp - beta * sc)) / n;
            best = best.max(diff / (1.0 + beta.abs()));
        }
        let (mut f, mut r) = (0.0, 0.0);
        for (k, &p) in self.values.iter().enumerate() {
            if p <= 0.0 {
                break;
            }
            f += p;
            r += counts[self.order[k]] as f64 * p;
        }
        best.max((f - r) / n)
    }
}

/// Fits the LCX set. Γ_LCX is the α/2 bootstrap threshold of the sup
/// discrepancy over `cut_grid` directions crossed with data breakpoints;
/// Γ_σ the α/2 threshold of the drop in mean squared norm.
pub fn fit_lcx(
    data: &Dataset,
    alpha: f64,
    n_b: usize,
    cut_grid: usize,
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
    let flat = data.flat();
    let projections: Vec<Projection> = grid_directions(d, cut_grid)
        .iter()
        .map(|a| Projection::new(flat, d, a))
        .collect();
    let sq: Vec<f64> = data.rows().map(|r| dot(r, r)).collect();
    let full_sq = sq.iter().sum::<f64>() / n as f64;
    let mut stats = bootstrap_replicates(n, n_b, 2, rng, |counts| {
        let lcx = projections
            .iter()
            .map(|p| p.discrepancy(counts))
            .fold(0.0, f64::max);
        let res_sq = sq.iter().zip(counts).map(|(s, &c)| s * c as f64).sum::<f64>() / n as f64;
        vec![lcx, full_sq - res_sq]
    })?;
    let gamma_lcx = upper_order_statistic(&mut stats[0], alpha / 2.0).max(GAMMA_FLOOR);
    let gamma_sigma = upper_order_statistic(&mut stats[1], alpha / 2.0).max(0.0);
    let params = LcxParams {
        d,
        samples: flat.to_vec(),
        gamma_lcx,
        gamma_sigma,
        cut_grid_size: cut_grid,
    };
    Ok(UncertaintySet::new(SetKind::Lcx, alpha, data.fingerprint(), d, SetParams::Lcx(params)))
}

/// One evaluation of the dual objective at x = (h, β₁, β₂, β₃).
struct DualPoint {
    value: f64,
    grad: Vec<f64>,
    /// ∂/∂v: a maximizer candidate.
    u: Vec<f64>,
    /// ∂/∂z.
    dz: f64,
}

fn l1(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).sum()
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl LcxParams {
    fn n(&self) -> usize {
        self.samples.len() / self.d
    }

    fn row(&self, j: usize) -> &[f64] {
        &self.samples[j * self.d..(j + 1) * self.d]
    }

    /// φ(a, b) = (1/N) Σ (aᵀû_j − b)⁺.
    #[cfg(test)]
    fn phi(&self, a: &[f64], b: f64) -> f64 {
        self.hinge(a, b).0
    }

    /// (φ(a, b), ∇_a φ, −∇_b φ).
    fn hinge(&self, a: &[f64], b: f64) -> (f64, Vec<f64>, f64) {
        let n = self.n();
        let mut val = 0.0;
        let mut grad = vec![0.0; self.d];
        let mut cnt = 0usize;
        for j in 0..n {
            let r = self.row(j);
            let s = dot(r, a) - b;
            if s > 0.0 {
                val += s;
                cnt += 1;
                for (g, x) in grad.iter_mut().zip(r) {
                    *g += x;
                }
            }
        }
        let nf = n as f64;
        grad.iter_mut().for_each(|g| *g /= nf);
        (val / nf, grad, cnt as f64 / nf)
    }

    fn scale(&self) -> f64 {
        self.samples.iter().fold(1.0f64, |m, x| m.max(x.abs()))
    }

    /// The support function equals the minimum over x = (h, β₁, β₂, β₃) of
    ///
    ///   z[φ(h,β₁) + φ(−h,β₂) + φ(v−h,β₃) + Γ(‖h‖₁+|β₁| + ‖h‖₁+|β₂| + ‖v−h‖₁+|β₃|) + β₁ + β₂] − β₂ + β₃
    ///
    /// with z = 1/ε, obtained by dualizing the three separation problems.
    fn dual_point(&self, v: &[f64], z: f64, x: &[f64]) -> DualPoint {
        let d = self.d;
        let g = self.gamma_lcx;
        let h = &x[..d];
        let (b1, b2, b3) = (x[d], x[d + 1], x[d + 2]);
        let hn: Vec<f64> = h.iter().map(|t| -t).collect();
        let h3: Vec<f64> = v.iter().zip(h).map(|(a, b)| a - b).collect();
        let (p1, s1, m1) = self.hinge(h, b1);
        let (p2, s2, m2) = self.hinge(&hn, b2);
        let (p3, s3, m3) = self.hinge(&h3, b3);
        let bracket = p1 + p2 + p3 + g * (2.0 * l1(h) + b1.abs() + b2.abs() + l1(&h3) + b3.abs()) + b1 + b2;
        let mut grad = vec![0.0; d + 3];
        let mut u = vec![0.0; d];
        for i in 0..d {
            u[i] = z * (s3[i] + g * sgn(h3[i]));
            grad[i] = z * (s1[i] - s2[i] + 2.0 * g * sgn(h[i])) - u[i];
        }
        grad[d] = z * (1.0 - m1 + g * sgn(b1));
        grad[d + 1] = z * (1.0 - m2 + g * sgn(b2)) - 1.0;
        grad[d + 2] = 1.0 - z * (m3 - g * sgn(b3));
        DualPoint {
            value: z * bracket - b2 + b3,
            grad,
            u,
            dz: bracket,
        }
    }

    /// Support value with maximizer and τ = ∂δ*/∂z at z = 1/ε.
    ///
    /// Kelley's method on the dual objective above; the value reported is
    /// the best dual objective found, an upper bound within the gap.
    pub(crate) fn support(&self, v: &[f64], eps: f64) -> Result<(SupportEval, f64)> {
        check_eps(eps)?;
        let d = self.d;
        let z = 1.0 / eps;
        let vn = l1(v);
        if vn == 0.0 {
            let mean = (0..d)
                .map(|i| (0..self.n()).map(|j| self.row(j)[i]).sum::<f64>() / self.n() as f64)
                .collect();
            return Ok((SupportEval::exact(0.0, mean), 0.0));
        }
        // A minimizer on the box is fine as long as a larger box does not
        // lower the value; with Γ = 0 the minimizers can form a ray.
        let mut radius = 10.0 * vn * (1.0 + self.scale());
        let (mut out, mut on_box) = self.kelley(v, z, radius)?;
        for _ in 0..4 {
            if !on_box {
                return Ok(out);
            }
            radius *= 100.0;
            let (next, nb) = self.kelley(v, z, radius)?;
            let improved = next.0.value < out.0.value - 1e-9 * (1.0 + out.0.value.abs());
            out = next;
            on_box = nb;
            if !improved {
                return Ok(out);
            }
        }
        Err(DdroError::numeric("LCX dual minimizer keeps hitting its bounding box"))
    }

    /// Returns the answer and whether the minimizer sits on the box.
    fn kelley(&self, v: &[f64], z: f64, radius: f64) -> Result<((SupportEval, f64), bool)> {
        let d = self.d;
        let nx = d + 3;
        let mut obj = vec![0.0; nx + 1];
        obj[nx] = 1.0;
        let mut lp = LinearProgram::new(Sense::Min, obj);
        for i in 0..nx {
            lp.set_bounds(i, -radius, radius);
        }
        lp.set_bounds(nx, f64::NEG_INFINITY, f64::INFINITY);
        let cut_row = |p: &DualPoint, x: &[f64]| {
            let mut c: Vec<f64> = p.grad.iter().map(|g| -g).collect();
            c.push(1.0);
            Constraint::ge(c, p.value - dot(&p.grad, x))
        };
        let mut points: Vec<DualPoint> = Vec::new();
        let x0 = vec![0.0; nx];
        let p0 = self.dual_point(v, z, &x0);
        lp.push(cut_row(&p0, &x0));
        let mut best = (p0.value, p0.u.clone(), p0.dz, x0);
        points.push(p0);
        let n_box = 0;
        let mut sol = solve_lp(&lp)?;
        let mut gap = f64::INFINITY;
        for _ in 0..MAX_KELLEY_ITERS {
            if !sol.is_optimal() {
                return Err(DdroError::numeric(format!("LCX dual master ended {:?}", sol.status)));
            }
            let lb = sol.objective;
            let x = sol.x[..nx].to_vec();
            let p = self.dual_point(v, z, &x);
            if p.value < best.0 {
                best = (p.value, p.u.clone(), p.dz, x.clone());
            }
            gap = best.0 - lb;
            if gap <= STOP_GAP * (1.0 + best.0.abs()) {
                break;
            }
            let row = cut_row(&p, &x);
            points.push(p);
            sol = resolve_with_cut(&mut lp, &sol, row)?;
        }
        // The master LP resolves gaps only down to its own tolerance.
        let converged = gap <= ACCEPT_GAP * (1.0 + best.0.abs());
        let on_box = best.3.iter().any(|x| x.abs() >= 0.99 * radius);
        // Maximizer from the cut multipliers, which sum to one at an
        // interior optimum of the master.
        let mut u = vec![0.0; d];
        let mut mass = 0.0;
        for (k, p) in points.iter().enumerate() {
            let lam = sol.y.get(n_box + k).copied().unwrap_or(0.0).max(0.0);
            mass += lam;
            for (ui, pi) in u.iter_mut().zip(&p.u) {
                *ui += lam * pi;
            }
        }
        if mass > 0.0 {
            u.iter_mut().for_each(|x| *x /= mass);
        } else {
            u = best.1;
        }
        let tau = best.2.max(0.0);
        Ok((
            (
                SupportEval {
                    value: best.0,
                    maximizer: u,
                    converged,
                },
                tau,
            ),
            on_box,
        ))
    }
}
