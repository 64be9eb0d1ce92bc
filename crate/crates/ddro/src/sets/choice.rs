use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{fit_cs, fit_discrete, fit_fb, fit_ks_independent, fit_lcx, fit_marginal, SetKind, UncertaintySet};
use super::DEFAULT_CUT_GRID;
use crate::data::{Dataset, RandomSource};
use crate::error::{DdroError, Result};

/// A set family as named on the command line. `Fbt` is the FB set with
/// t-test mean bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetChoice {
    Chi2,
    G,
    Ks,
    Fb,
    Fbt,
    M,
    Cs,
    Lcx,
}

impl SetChoice {
    pub const ALL: [SetChoice; 8] = [
        SetChoice::Chi2,
        SetChoice::G,
        SetChoice::Ks,
        SetChoice::Fb,
        SetChoice::Fbt,
        SetChoice::M,
        SetChoice::Cs,
        SetChoice::Lcx,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SetChoice::Fbt => "fbt",
            other => other.kind().name(),
        }
    }

    pub fn kind(&self) -> SetKind {
        match self {
            SetChoice::Chi2 => SetKind::Chi2,
            SetChoice::G => SetKind::G,
            SetChoice::Ks => SetKind::Ks,
            SetChoice::Fb | SetChoice::Fbt => SetKind::Fb,
            SetChoice::M => SetKind::M,
            SetChoice::Cs => SetKind::Cs,
            SetChoice::Lcx => SetKind::Lcx,
        }
    }
}

impl fmt::Display for SetChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SetChoice {
    type Err = DdroError;

    fn from_str(s: &str) -> Result<Self> {
        SetChoice::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| DdroError::validation("set", format!("unknown set '{s}', expected chi2|g|ks|fb|fbt|m|cs|lcx")))
    }
}

/// Everything needed to fit a set of a given family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSpec {
    pub set: SetChoice,
    pub alpha: f64,
    pub n_b: usize,
    /// Only read by the M set, whose shape depends on ε.
    pub eps: f64,
    pub cut_grid: usize,
}

impl FitSpec {
    pub fn new(set: SetChoice, alpha: f64, n_b: usize, eps: f64) -> Self {
        FitSpec {
            set,
            alpha,
            n_b,
            eps,
            cut_grid: DEFAULT_CUT_GRID,
        }
    }

    pub fn fit(&self, data: &Dataset, rng: &RandomSource) -> Result<UncertaintySet> {
        match self.set {
            SetChoice::Chi2 | SetChoice::G => fit_discrete(data, None, self.set.kind(), self.alpha),
            SetChoice::Ks => fit_ks_independent(data, self.alpha),
            SetChoice::Fb => fit_fb(data, self.alpha, self.n_b, false, rng),
            SetChoice::Fbt => fit_fb(data, self.alpha, self.n_b, true, rng),
            SetChoice::M => fit_marginal(data, self.alpha, self.eps),
            SetChoice::Cs => fit_cs(data, self.alpha, self.n_b, rng),
            SetChoice::Lcx => fit_lcx(data, self.alpha, self.n_b, self.cut_grid, rng),
        }
    }
}
