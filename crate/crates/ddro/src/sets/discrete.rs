use serde::{Deserialize, Serialize};

use super::{check_eps, dot, SetKind, SetParams, SupportEval, UncertaintySet};
use crate::data::{chi2_quantile, Dataset};
use crate::error::{DdroError, Result};
use crate::scalar::{cvar_filling, golden_min, wce_chi2, wce_g, Bracket, WorstCase};

/// Parameters of the χ² and G sets over a finite support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteParams {
    pub points: Vec<Vec<f64>>,
    pub p_hat: Vec<f64>,
    pub rho: f64,
    pub n_samples: usize,
    /// True when empty cells were given mass 1/(2N) before renormalizing.
    pub smoothed: bool,
}

fn same_point(a: &[f64], b: &[f64]) -> bool {
    a.iter()
        .zip(b)
        .all(|(x, y)| (x - y).abs() <= 1e-9 * (1.0 + x.abs().max(y.abs())))
}

/// Fits the χ² or G set. `points` lists the support; when `None` the
/// distinct rows of `data` are used, in order of first appearance.
pub fn fit_discrete(
    data: &Dataset,
    points: Option<&[Vec<f64>]>,
    kind: SetKind,
    alpha: f64,
) -> Result<UncertaintySet> {
    if !matches!(kind, SetKind::Chi2 | SetKind::G) {
        return Err(DdroError::validation("kind", "discrete fit needs chi2 or g"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(DdroError::validation("alpha", format!("must lie in (0,1), got {alpha}")));
    }
    let d = data.d();
    let mut support: Vec<Vec<f64>> = match points {
        Some(p) => {
            if p.is_empty() || p.iter().any(|a| a.len() != d) {
                return Err(DdroError::validation("support", format!("need points of dimension {d}")));
            }
            p.to_vec()
        }
        None => Vec::new(),
    };
    let fixed = points.is_some();
    let mut counts = vec![0usize; support.len()];
    for (j, row) in data.rows().enumerate() {
        match support.iter().position(|a| same_point(a, row)) {
            Some(k) => counts[k] += 1,
            None if fixed => return Err(DdroError::OffSupport { row: j }),
            None => {
                support.push(row.to_vec());
                counts.push(1);
            }
        }
    }
    let n = data.n();
    let nf = n as f64;
    let smoothed = counts.iter().any(|&c| c == 0);
    let mut p_hat: Vec<f64> = counts
        .iter()
        .map(|&c| if c == 0 { 0.5 / nf } else { c as f64 / nf })
        .collect();
    let total: f64 = p_hat.iter().sum();
    p_hat.iter_mut().for_each(|p| *p /= total);
    let rho = if support.len() < 2 {
        0.0
    } else {
        chi2_quantile((support.len() - 1) as f64, 1.0 - alpha)? / (2.0 * nf)
    };
    let params = DiscreteParams {
        points: support,
        p_hat,
        rho,
        n_samples: n,
        smoothed,
    };
    Ok(UncertaintySet::new(kind, alpha, data.fingerprint(), d, SetParams::Discrete(params)))
}

impl DiscreteParams {
    fn wce(&self, kind: SetKind, c: &[f64]) -> Result<WorstCase> {
        match kind {
            SetKind::Chi2 => wce_chi2(&self.p_hat, c, self.rho),
            _ => wce_g(&self.p_hat, c, self.rho),
        }
    }

    /// max over p in the ball of CVaR_ε^p(c), as
    /// min_β β + (1/ε)·max_p E_p (c − β)⁺ with a golden search on β.
    pub(crate) fn support(&self, kind: SetKind, v: &[f64], eps: f64) -> Result<SupportEval> {
        check_eps(eps)?;
        let c: Vec<f64> = self.points.iter().map(|a| dot(a, v)).collect();
        let cmin = c.iter().cloned().fold(f64::INFINITY, f64::min);
        let cmax = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let d = v.len();
        if cmax - cmin <= 1e-15 * (1.0 + cmax.abs()) {
            let mut u = vec![0.0; d];
            for (a, &p) in self.points.iter().zip(&self.p_hat) {
                for (ui, ai) in u.iter_mut().zip(a) {
                    *ui += p * ai;
                }
            }
            return Ok(SupportEval::exact(cmax, u));
        }
        let mut err = None;
        let mut obj = |beta: f64| -> f64 {
            let w: Vec<f64> = c.iter().map(|ci| (ci - beta).max(0.0)).collect();
            match self.wce(kind, &w) {
                Ok(wc) => beta + wc.value / eps,
                Err(e) => {
                    err.get_or_insert(e);
                    f64::INFINITY
                }
            }
        };
        let (beta, value) = golden_min(&mut obj, Bracket::new(cmin, cmax).with_tol(1e-12));
        if let Some(e) = err {
            return Err(e);
        }
        let w: Vec<f64> = c.iter().map(|ci| (ci - beta).max(0.0)).collect();
        let wc = self.wce(kind, &w)?;
        let (_, q) = cvar_filling(&wc.p, &c, eps);
        let mut u = vec![0.0; d];
        for (a, &qi) in self.points.iter().zip(&q) {
            for (ui, ai) in u.iter_mut().zip(a) {
                *ui += qi * ai;
            }
        }
        Ok(SupportEval::exact(value, u))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn two_point_fit() {
        let mut rows = vec![vec![0.0]; 60];
        rows.extend(vec![vec![1.0]; 40]);
        let ds = Dataset::from_rows(&rows).unwrap();
        let s = fit_discrete(&ds, None, SetKind::Chi2, 0.1).unwrap();
        let SetParams::Discrete(p) = s.params() else { panic!() };
        assert_eq!(p.p_hat, vec![0.6, 0.4]);
        assert_abs_diff_eq!(p.rho, 2.705_543_454_095_4 / 200.0, epsilon = 1e-9);
        assert!(!p.smoothed);
    }

    #[test]
    fn off_support_row_is_reported() {
        let ds = Dataset::from_rows(&[vec![0.0], vec![2.0]]).unwrap();
        let err = fit_discrete(&ds, Some(&[vec![0.0], vec![1.0]]), SetKind::G, 0.1).unwrap_err();
        assert_eq!(err, DdroError::OffSupport { row: 1 });
    }

    #[test]
    fn alpha_to_one_shrinks_to_cvar() {
        let mut rows = vec![vec![0.0]; 60];
        rows.extend(vec![vec![1.0]; 40]);
        let ds = Dataset::from_rows(&rows).unwrap();
        let s = fit_discrete(&ds, None, SetKind::Chi2, 1.0 - 1e-9).unwrap();
        let val = s.support(&[1.0], 0.5).unwrap().value;
        assert_abs_diff_eq!(val, 0.8, epsilon = 1e-4);
    }
}
