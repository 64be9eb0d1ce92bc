//! Portfolio allocation on a synthetic two-point factor market: robust
//! solve, exact VaR by enumeration, holdout quantiles and k-fold selection.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DiscreteDistribution, RandomSource, SupportBox};
use crate::error::{DdroError, Result};
use crate::robust::{solve_cutting_plane, RobustLinearProgram, RobustSolution, SolveOptions, UncertainConstraint};
use crate::sets::{FitSpec, UncertaintySet};

pub const N_ASSETS: usize = 10;
/// Bound on the auxiliary return level z; far outside any return the
/// market can produce.
const Z_BOUND: f64 = 1e4;

/// Independent assets; asset i returns √(β(1−β))/β with probability β and
/// −√(β(1−β))/(1−β) otherwise, so each has mean 0 and variance 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorMarket {
    pub beta: Vec<f64>,
}

impl Default for FactorMarket {
    fn default() -> Self {
        FactorMarket {
            beta: (1..=N_ASSETS).map(|i| (1.0 + i as f64 / 11.0) / 2.0).collect(),
        }
    }
}

impl FactorMarket {
    pub fn new(beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() || beta.iter().any(|b| !(*b > 0.0 && *b < 1.0)) {
            return Err(DdroError::validation("beta", "need at least one probability in (0,1)"));
        }
        Ok(FactorMarket { beta })
    }

    pub fn d(&self) -> usize {
        self.beta.len()
    }

    pub fn high(&self, i: usize) -> f64 {
        let b = self.beta[i];
        (b * (1.0 - b)).sqrt() / b
    }

    pub fn low(&self, i: usize) -> f64 {
        let b = self.beta[i];
        -(b * (1.0 - b)).sqrt() / (1.0 - b)
    }

    /// The box spanned by each asset's two outcomes.
    pub fn support_box(&self) -> SupportBox {
        let d = self.d();
        SupportBox::new((0..d).map(|i| self.low(i)).collect(), (0..d).map(|i| self.high(i)).collect())
            .expect("low < high")
    }

    /// All 2^d joint outcomes with their probabilities.
    pub fn distribution(&self) -> DiscreteDistribution {
        let d = self.d();
        let mut support = Vec::with_capacity(1 << d);
        let mut probs = Vec::with_capacity(1 << d);
        for mask in 0u32..(1 << d) {
            let mut p = 1.0;
            let r: Vec<f64> = (0..d)
                .map(|i| {
                    if mask >> i & 1 == 1 {
                        p *= self.beta[i];
                        self.high(i)
                    } else {
                        p *= 1.0 - self.beta[i];
                        self.low(i)
                    }
                })
                .collect();
            support.push(r);
            probs.push(p);
        }
        // Products of the βs sum to one only up to round-off.
        let s: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= s);
        DiscreteDistribution::new(support, probs).expect("valid market")
    }
}

pub fn sample_returns(market: &FactorMarket, n: usize, rng: &RandomSource) -> Result<Dataset> {
    if n == 0 {
        return Err(DdroError::validation("n", "need at least one sample"));
    }
    let d = market.d();
    let mut r = rng.rng();
    let mut flat = Vec::with_capacity(n * d);
    for _ in 0..n {
        for i in 0..d {
            let up = r.gen::<f64>() < market.beta[i];
            flat.push(if up { market.high(i) } else { market.low(i) });
        }
    }
    Dataset::from_flat(n, d, flat)?.with_support_box(market.support_box())
}

fn check_holdings(x: &[f64], d: usize) -> Result<()> {
    if x.len() != d || x.iter().any(|v| !(*v >= -1e-9)) || (x.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
        return Err(DdroError::validation("x", format!("holdings must be a point of the {d}-simplex")));
    }
    Ok(())
}

/// Largest z with P(rᵀx ≥ z) ≥ 1 − ε, i.e. −VaR_ε(−x), by enumeration.
pub fn exact_var(market: &FactorMarket, x: &[f64], eps: f64) -> Result<f64> {
    check_holdings(x, market.d())?;
    crate::sets::check_eps(eps)?;
    let neg: Vec<f64> = x.iter().map(|v| -v).collect();
    Ok(-market.distribution().value_at_risk(&neg, eps))
}

/// Lower empirical ε-quantile of rᵀx: the ⌈εM⌉-th smallest of M values.
pub fn holdout_quantile(data: &Dataset, x: &[f64], eps: f64) -> Result<f64> {
    check_holdings(x, data.d())?;
    crate::sets::check_eps(eps)?;
    let mut r: Vec<f64> = data.rows().map(|row| crate::data::dot(row, x)).collect();
    r.sort_by(f64::total_cmp);
    let m = r.len();
    let k = ((eps * m as f64) - 1e-9).ceil().max(1.0) as usize;
    Ok(r[k.min(m) - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioResult {
    pub x: Vec<f64>,
    pub z_in: f64,
    /// Holdout ε-quantile, when a holdout sample was supplied.
    pub holdout: Option<f64>,
    /// Exact ε-quantile under the true market, when it is known.
    pub z_out: Option<f64>,
    pub solution: RobustSolution,
}

/// max z over x ∈ Δ_d subject to rᵀx ≥ z for all r ∈ U_ε, i.e.
/// δ*(−x | U_ε) + z ≤ 0. Ties are broken by minimal ‖x‖₂.
pub fn solve_portfolio(set: &Arc<UncertaintySet>, eps: f64) -> Result<PortfolioResult> {
    let d = set.dim();
    let k = d + 1;
    let mut objective = vec![0.0; k];
    objective[d] = -1.0;
    let mut lower = vec![0.0; k];
    let mut upper = vec![1.0; k];
    lower[d] = -Z_BOUND;
    upper[d] = Z_BOUND;
    let mut rlp = RobustLinearProgram::new(objective, lower, upper);
    let mut budget = vec![1.0; k];
    budget[d] = 0.0;
    rlp.rows.push(crate::lp::Constraint::eq(budget, 1.0));
    let mut f = vec![0.0; d * k];
    for i in 0..d {
        f[i * k + i] = -1.0;
    }
    let mut f_x = vec![0.0; k];
    f_x[d] = 1.0;
    rlp.uncertain.push(UncertainConstraint::new(f, vec![0.0; d], f_x, 0.0, set.clone(), eps));
    let opts = SolveOptions {
        min_norm: true,
        ..SolveOptions::default()
    };
    let sol = solve_cutting_plane(&rlp, &opts)?;
    if !sol.converged {
        return Err(DdroError::numeric("portfolio cutting plane did not converge"));
    }
    let mut x: Vec<f64> = sol.x[..d].iter().map(|v| v.max(0.0)).collect();
    let s: f64 = x.iter().sum();
    x.iter_mut().for_each(|v| *v /= s);
    Ok(PortfolioResult {
        x,
        z_in: sol.x[d],
        holdout: None,
        z_out: None,
        solution: sol,
    })
}

/// Deterministic k-fold assignment: a seeded shuffle dealt round-robin.
pub fn fold_assignment(n: usize, k: usize, rng: &RandomSource) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng.rng());
    let mut fold = vec![0; n];
    for (pos, &j) in idx.iter().enumerate() {
        fold[j] = pos % k;
    }
    fold
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub set: String,
    pub folds: Vec<Option<f64>>,
    pub mean: Option<f64>,
    pub failures: Vec<String>,
}

/// k-fold cross-validation of candidate set specifications: fit on k−1
/// folds, solve, score by the holdout ε-quantile on the remaining fold.
/// Returned best first; candidates with a failed fold come last, unranked.
pub fn cross_validate(specs: &[FitSpec], data: &Dataset, k: usize, eps: f64, rng: &RandomSource) -> Result<Vec<CvScore>> {
    if k < 2 {
        return Err(DdroError::validation("folds", "need at least 2 folds"));
    }
    if data.n() < k {
        return Err(DdroError::validation("folds", format!("{} rows cannot fill {k} folds", data.n())));
    }
    if specs.is_empty() {
        return Err(DdroError::validation("sets", "need at least one candidate"));
    }
    crate::sets::check_eps(eps)?;
    let fold = fold_assignment(data.n(), k, &rng.derive(0));
    let splits: Vec<(Dataset, Dataset)> = (0..k)
        .map(|f| {
            let train: Vec<usize> = (0..data.n()).filter(|&j| fold[j] != f).collect();
            let test: Vec<usize> = (0..data.n()).filter(|&j| fold[j] == f).collect();
            (data.select_rows(&train), data.select_rows(&test))
        })
        .collect();
    let mut scores: Vec<CvScore> = specs
        .iter()
        .map(|spec| {
            let runs: Vec<std::result::Result<f64, String>> = splits
                .par_iter()
                .enumerate()
                .map(|(f, (train, test))| {
                    let set = spec.fit(train, &rng.derive(1 + f as u64)).map_err(|e| e.to_string())?;
                    let p = solve_portfolio(&Arc::new(set), eps).map_err(|e| e.to_string())?;
                    holdout_quantile(test, &p.x, eps).map_err(|e| e.to_string())
                })
                .collect();
            let folds: Vec<Option<f64>> = runs.iter().map(|r| r.as_ref().ok().copied()).collect();
            let failures: Vec<String> = runs
                .iter()
                .enumerate()
                .filter_map(|(f, r)| r.as_ref().err().map(|e| format!("fold {f}: {e}")))
                .collect();
            let mean = if failures.is_empty() {
                Some(folds.iter().flatten().sum::<f64>() / k as f64)
            } else {
                None
            };
            CvScore {
                set: spec.set.name().to_string(),
                folds,
                mean,
                failures,
            }
        })
        .collect();
    // Stable sort keeps the input order among ties.
    scores.sort_by(|a, b| match (a.mean, b.mean) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    Ok(scores)
}

/// One replication of the market experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub seed: u64,
    pub set: String,
    pub z_in: f64,
    pub cv: Option<f64>,
    pub z_out: f64,
    pub x: Vec<f64>,
}

/// Runs one replication per seed: draw N returns, fit, solve, and score
/// against the true market. With `folds` set, also records the k-fold CV
/// score of the same specification. Rows come back in seed order.
pub fn replicate(
    market: &FactorMarket,
    spec: &FitSpec,
    n: usize,
    eps: f64,
    seeds: &[u64],
    folds: Option<usize>,
) -> Result<Vec<ReplicationRow>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let root = RandomSource::new(seed);
            let data = sample_returns(market, n, &root.derive(0))?;
            let set = Arc::new(spec.fit(&data, &root.derive(1))?);
            let p = solve_portfolio(&set, eps)?;
            let cv = match folds {
                Some(k) => cross_validate(std::slice::from_ref(spec), &data, k, eps, &root.derive(2))?[0].mean,
                None => None,
            };
            Ok(ReplicationRow {
                seed,
                set: spec.set.name().to_string(),
                z_in: p.z_in,
                cv,
                z_out: exact_var(market, &p.x, eps)?,
                x: p.x,
            })
        })
        .collect()
}
