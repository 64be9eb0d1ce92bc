use serde::{Deserialize, Serialize};

use super::{check_eps, SetKind, SetParams, SupportEval, UncertaintySet};
use crate::data::{order_statistics, quantile_index_s, Dataset};
use crate::error::{DdroError, Result};

/// Box built from marginal order statistics; valid only at `eps_fitted`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MParams {
    pub s: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub eps_fitted: f64,
}

impl MParams {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, s: usize, eps: f64) -> Result<Self> {
        check_eps(eps)?;
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(DdroError::validation("m", "bounds must be non-empty and of equal length"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l.is_finite() && u.is_finite() && l <= u)) {
            return Err(DdroError::validation("m", "need finite lower <= upper"));
        }
        Ok(MParams {
            s,
            lower,
            upper,
            eps_fitted: eps,
        })
    }

    pub(crate) fn support(&self, v: &[f64]) -> SupportEval {
        let mut value = 0.0;
        let u = v
            .iter()
            .enumerate()
            .map(|(i, &vi)| {
                let (l, h) = (self.lower[i], self.upper[i]);
                let ui = if vi > 0.0 {
                    h
                } else if vi < 0.0 {
                    l
                } else {
                    0.5 * (l + h)
                };
                value += (vi * l).max(vi * h);
                ui
            })
            .collect();
        SupportEval::exact(value, u)
    }

    pub fn contains(&self, u: &[f64], tol: f64) -> bool {
        u.iter()
            .enumerate()
            .all(|(i, &x)| x >= self.lower[i] - tol && x <= self.upper[i] + tol)
    }
}

/// Fits the marginal-quantile box at a fixed `eps`.
///
/// When the order index lands on N+1 and a support box is known, the box
/// sentinels û^(0) and û^(N+1) are used, which reduces the set to the box.
pub fn fit_marginal(data: &Dataset, alpha: f64, eps: f64) -> Result<UncertaintySet> {
    check_eps(eps)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(DdroError::validation("alpha", format!("must lie in (0,1), got {alpha}")));
    }
    let n = data.n();
    let d = data.d();
    let s = quantile_index_s(n, eps, d, alpha)?;
    let insufficient = DdroError::InsufficientData { eps, alpha, d };
    let lo_idx = n + 1 - s;
    if lo_idx >= s {
        return Err(insufficient);
    }
    if s == n + 1 && data.support_box().is_none() {
        return Err(insufficient);
    }
    let stats = order_statistics(data);
    let mut lower = Vec::with_capacity(d);
    let mut upper = Vec::with_capacity(d);
    for i in 0..d {
        lower.push(stats.order_stat(i, lo_idx)?);
        upper.push(stats.order_stat(i, s)?);
    }
    let params = MParams::new(lower, upper, s, eps)?;
    Ok(UncertaintySet::new(SetKind::M, alpha, data.fingerprint(), d, SetParams::M(params)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SupportBox;

    #[test]
    fn n29_uses_first_and_last_order_statistics() {
        let rows: Vec<Vec<f64>> = (0..29).map(|j| vec![((j * 7) % 29) as f64]).collect();
        let ds = Dataset::from_rows(&rows).unwrap();
        let s = fit_marginal(&ds, 0.1, 0.1).unwrap();
        let SetParams::M(p) = s.params() else { panic!() };
        assert_eq!(p.s, 29);
        assert_eq!((p.lower[0], p.upper[0]), (0.0, 28.0));
        assert!(!s.simultaneous());
        assert_eq!(s.support(&[0.0], 0.1).unwrap().value, 0.0);
        assert!(matches!(s.support(&[1.0], 0.2), Err(DdroError::EpsMismatch { .. })));
    }

    #[test]
    fn n10_is_insufficient_without_box() {
        let rows: Vec<Vec<f64>> = (0..10).map(|j| vec![j as f64]).collect();
        let ds = Dataset::from_rows(&rows).unwrap();
        assert_eq!(
            fit_marginal(&ds, 0.1, 0.1).unwrap_err(),
            DdroError::InsufficientData { eps: 0.1, alpha: 0.1, d: 1 }
        );
        let boxed = ds.with_support_box(SupportBox::new(vec![-1.0], vec![20.0]).unwrap()).unwrap();
        let s = fit_marginal(&boxed, 0.1, 0.1).unwrap();
        let SetParams::M(p) = s.params() else { panic!() };
        assert_eq!((p.lower[0], p.upper[0]), (-1.0, 20.0));
    }
}
