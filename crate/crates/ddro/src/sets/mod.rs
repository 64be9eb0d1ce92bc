//! Uncertainty sets fitted from data, with support-function oracles.
//!
//! Every set answers `support(v, eps)`, the value of max vᵀu over U_eps
//! together with a maximizer. Sets are immutable once fitted.

mod choice;
mod cs;
mod discrete;
mod fb;
mod intersect;
mod ks;
mod lcx;
mod marginal;

use serde::{Deserialize, Serialize};

use crate::data::SupportBox;
use crate::error::{DdroError, Result};
use crate::scalar::bisect_increasing;

pub use choice::{FitSpec, SetChoice};
pub use cs::{fit_cs, CsParams};
pub use discrete::{fit_discrete, DiscreteParams};
pub use fb::{fit_fb, FbParams};
pub use ks::{fit_ks_independent, KsParams};
pub use lcx::{fit_lcx, LcxParams, DEFAULT_CUT_GRID};
pub use marginal::{fit_marginal, MParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetKind {
    Chi2,
    G,
    Ks,
    Fb,
    M,
    Cs,
    Lcx,
}

impl SetKind {
    pub fn name(&self) -> &'static str {
        match self {
            SetKind::Chi2 => "chi2",
            SetKind::G => "g",
            SetKind::Ks => "ks",
            SetKind::Fb => "fb",
            SetKind::M => "m",
            SetKind::Cs => "cs",
            SetKind::Lcx => "lcx",
        }
    }

    /// Upper end of the ε range on which the support function is convex in ε.
    pub fn eps_upper(&self) -> f64 {
        match self {
            SetKind::Cs => 0.75,
            SetKind::Fb => (-0.5f64).exp(),
            _ => 1.0,
        }
    }
}

impl std::fmt::Display for SetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum SetParams {
    Discrete(DiscreteParams),
    Ks(KsParams),
    Fb(FbParams),
    M(MParams),
    Cs(CsParams),
    Lcx(LcxParams),
}

/// Result of a support-function query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportEval {
    pub value: f64,
    pub maximizer: Vec<f64>,
    pub converged: bool,
}

impl SupportEval {
    fn exact(value: f64, maximizer: Vec<f64>) -> Self {
        SupportEval {
            value,
            maximizer,
            converged: true,
        }
    }
}

/// A fitted uncertainty set, optionally intersected with a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySet {
    kind: SetKind,
    #[serde(with = "nan_as_null")]
    alpha: f64,
    simultaneous: bool,
    data_fingerprint: String,
    dim: usize,
    params: SetParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    clip: Option<SupportBox>,
}

/// Sets built from raw parts have no confidence level; JSON has no NaN.
pub(crate) mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_nan() {
            s.serialize_none()
        } else {
            s.serialize_f64(*x)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

pub const FORMAT_NAME: &str = "ddro-uncertainty-set";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SetDocument {
    format: String,
    version: u32,
    set: UncertaintySet,
}

pub(crate) fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(DdroError::validation("eps", format!("must lie in (0,1), got {eps}")))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl UncertaintySet {
    pub(crate) fn new(kind: SetKind, alpha: f64, fingerprint: String, dim: usize, params: SetParams) -> Self {
        UncertaintySet {
            kind,
            alpha,
            simultaneous: kind != SetKind::M,
            data_fingerprint: fingerprint,
            dim,
            params,
            clip: None,
        }
    }

    pub fn kind(&self) -> SetKind {
        self.kind
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn simultaneous(&self) -> bool {
        self.simultaneous
    }

    pub fn data_fingerprint(&self) -> &str {
        &self.data_fingerprint
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &SetParams {
        &self.params
    }

    pub fn clip(&self) -> Option<&SupportBox> {
        self.clip.as_ref()
    }

    /// CS set from explicit parameters (Σ is d×d row-major).
    pub fn cs_from_parts(mu: Vec<f64>, sigma: Vec<f64>, gamma1: f64, gamma2: f64) -> Result<Self> {
        let d = mu.len();
        let p = CsParams::new(mu, sigma, gamma1, gamma2)?;
        Ok(Self::new(SetKind::Cs, f64::NAN, String::new(), d, SetParams::Cs(p)))
    }

    /// FB set from explicit per-coordinate bounds.
    pub fn fb_from_parts(m_b: Vec<f64>, m_f: Vec<f64>, sigma_f: Vec<f64>, sigma_b: Vec<f64>) -> Result<Self> {
        let d = m_b.len();
        let p = FbParams::new(m_b, m_f, sigma_f, sigma_b)?;
        Ok(Self::new(SetKind::Fb, f64::NAN, String::new(), d, SetParams::Fb(p)))
    }

    /// M-type box set `[lower, upper]` valid only at `eps`.
    pub fn m_from_parts(lower: Vec<f64>, upper: Vec<f64>, eps: f64) -> Result<Self> {
        let d = lower.len();
        let p = MParams::new(lower, upper, 0, eps)?;
        Ok(Self::new(SetKind::M, f64::NAN, String::new(), d, SetParams::M(p)))
    }

    pub fn to_json(&self) -> String {
        let doc = SetDocument {
            format: FORMAT_NAME.to_string(),
            version: FORMAT_VERSION,
            set: self.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("sets serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: SetDocument =
            serde_json::from_str(s).map_err(|e| DdroError::validation("set-file", e.to_string()))?;
        if doc.format != FORMAT_NAME {
            return Err(DdroError::validation("set-file", format!("unknown format '{}'", doc.format)));
        }
        if doc.version != FORMAT_VERSION {
            return Err(DdroError::validation(
                "set-file",
                format!("unsupported version {} (expected {FORMAT_VERSION})", doc.version),
            ));
        }
        Ok(doc.set)
    }

    fn check_query(&self, v: &[f64], eps: f64) -> Result<()> {
        check_eps(eps)?;
        if v.len() != self.dim {
            return Err(DdroError::validation(
                "v",
                format!("has length {}, set dimension is {}", v.len(), self.dim),
            ));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(DdroError::validation("v", "non-finite entry"));
        }
        if let SetParams::M(m) = &self.params {
            if (eps - m.eps_fitted).abs() > 1e-12 {
                return Err(DdroError::EpsMismatch {
                    fitted: m.eps_fitted,
                    requested: eps,
                });
            }
        }
        Ok(())
    }

    /// δ*(v | U_eps) with a maximizer.
    pub fn support(&self, v: &[f64], eps: f64) -> Result<SupportEval> {
        self.check_query(v, eps)?;
        match &self.clip {
            Some(b) => intersect::support(self, b, v, eps),
            None => self.support_unclipped(v, eps),
        }
    }

    pub(crate) fn support_unclipped(&self, v: &[f64], eps: f64) -> Result<SupportEval> {
        match &self.params {
            SetParams::Discrete(p) => p.support(self.kind, v, eps),
            SetParams::Ks(p) => Ok(p.support(v, eps)),
            SetParams::Fb(p) => Ok(p.support(v, eps)),
            SetParams::M(p) => Ok(p.support(v)),
            SetParams::Cs(p) => Ok(p.support(v, eps)),
            SetParams::Lcx(p) => p.support(v, eps).map(|(s, _)| s),
        }
    }

    /// The same set intersected with `b`; support queries then run a
    /// cutting-plane method on the infimal convolution of the two supports.
    pub fn intersect(&self, b: &SupportBox) -> Result<Self> {
        if b.dim() != self.dim {
            return Err(DdroError::validation(
                "box",
                format!("dimension {} does not match set dimension {}", b.dim(), self.dim),
            ));
        }
        let mut out = self.clone();
        out.clip = Some(match &self.clip {
            None => b.clone(),
            Some(old) => {
                let lower: Vec<f64> = old.lower.iter().zip(&b.lower).map(|(x, y)| x.max(*y)).collect();
                let upper: Vec<f64> = old.upper.iter().zip(&b.upper).map(|(x, y)| x.min(*y)).collect();
                SupportBox::new(lower, upper)
                    .map_err(|_| DdroError::validation("box", "intersection of boxes is empty"))?
            }
        });
        Ok(out)
    }

    /// Smallest ε with δ*(v | U_ε) ≤ t.
    pub fn eps_lower_bound(&self, v: &[f64], t: f64) -> Result<f64> {
        if !t.is_finite() {
            return Err(DdroError::validation("t", "must be finite"));
        }
        if !self.simultaneous {
            return Err(DdroError::validation(
                "set",
                "an M set is calibrated for a single eps and has no eps lower bound",
            ));
        }
        if self.clip.is_none() {
            match &self.params {
                SetParams::Cs(p) => return p.eps_lower_bound(v, t),
                SetParams::Fb(p) => return p.eps_lower_bound(v, t),
                _ => {}
            }
        }
        const HI: f64 = 1.0 - 1e-9;
        const LO: f64 = 1e-12;
        let val = |e: f64| self.support(v, e).map(|s| s.value);
        let vhi = val(HI)?;
        if vhi > t {
            return Err(DdroError::Unattainable(format!(
                "support at eps -> 1 is {vhi}, above t = {t}"
            )));
        }
        if val(LO)? <= t {
            return Ok(LO);
        }
        // g(y) = t − δ*(e^y) is non-decreasing in y = ln ε.
        let mut err = None;
        let y = bisect_increasing(
            |y| match val(y.exp()) {
                Ok(s) => t - s,
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            },
            LO.ln(),
            HI.ln(),
            1e-13,
        );
        if let Some(e) = err {
            return Err(e);
        }
        // Step right until the bound actually holds.
        let mut e = y.exp();
        for _ in 0..64 {
            if val(e)? <= t || e >= HI {
                break;
            }
            e = (e * (1.0 + 1e-12)).min(HI);
        }
        Ok(e)
    }

    /// ∂δ*(v | U_ε)/∂ε.
    pub fn eps_gradient(&self, v: &[f64], eps: f64) -> Result<f64> {
        self.check_query(v, eps)?;
        if !self.simultaneous {
            return Err(DdroError::validation("set", "an M set has no eps derivative"));
        }
        if self.clip.is_none() {
            match &self.params {
                SetParams::Cs(p) => return Ok(p.eps_gradient(v, eps)),
                SetParams::Fb(p) => return Ok(p.eps_gradient(v, eps)),
                SetParams::Lcx(p) => {
                    let (_, tau) = p.support(v, eps)?;
                    return Ok(-tau / (eps * eps));
                }
                _ => {}
            }
        }
        let h = 1e-5 * eps;
        if eps + h >= 1.0 {
            return Err(DdroError::validation("eps", "too close to 1 for a central difference"));
        }
        let up = self.support(v, eps + h)?.value;
        let dn = self.support(v, eps - h)?.value;
        Ok((up - dn) / (2.0 * h))
    }
}

/// Free-function form of [`UncertaintySet::support`].
pub fn support_function(set: &UncertaintySet, v: &[f64], eps: f64) -> Result<SupportEval> {
    set.support(v, eps)
}

/// Free-function form of [`UncertaintySet::intersect`].
pub fn intersect_support(set: &UncertaintySet, b: &SupportBox) -> Result<UncertaintySet> {
    set.intersect(b)
}

pub fn eps_lower_bound(set: &UncertaintySet, v: &[f64], t: f64) -> Result<f64> {
    set.eps_lower_bound(v, t)
}

pub fn eps_gradient(set: &UncertaintySet, v: &[f64], eps: f64) -> Result<f64> {
    set.eps_gradient(v, eps)
}
