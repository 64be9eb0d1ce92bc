use std::path::Path;
use std::sync::Arc;

use ddro::lp::Constraint;
use ddro::robust::{RobustLinearProgram, UncertainConstraint};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::io::{read_set, read_text};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowRelation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowSpec {
    pub coeffs: Vec<f64>,
    pub relation: RowRelation,
    pub rhs: f64,
}

/// δ*(F x + f_u | U_ε) + f_xᵀx + f₀ ≤ 0, with F given row-major (d×k).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertainSpec {
    pub f: Vec<f64>,
    pub f_u: Vec<f64>,
    pub f_x: Vec<f64>,
    #[serde(default)]
    pub f0: f64,
    /// Set JSON file, relative to the problem file.
    pub set: String,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_eps() -> f64 {
    0.1
}

/// JSON description of a robust linear program (minimization).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default)]
    pub rows: Vec<RowSpec>,
    #[serde(default)]
    pub uncertain: Vec<UncertainSpec>,
}

impl ProblemFile {
    pub fn load(path: &Path) -> Result<ProblemFile, CliError> {
        serde_json::from_str(&read_text(path)?).map_err(|source| CliError::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn build(&self, base: &Path) -> Result<RobustLinearProgram, CliError> {
        let mut rlp = RobustLinearProgram::new(self.objective.clone(), self.lower.clone(), self.upper.clone());
        for r in &self.rows {
            let c = r.coeffs.clone();
            rlp.rows.push(match r.relation {
                RowRelation::Le => Constraint::le(c, r.rhs),
                RowRelation::Ge => Constraint::ge(c, r.rhs),
                RowRelation::Eq => Constraint::eq(c, r.rhs),
            });
        }
        for u in &self.uncertain {
            let set = read_set(&base.join(&u.set))?;
            rlp.uncertain.push(UncertainConstraint::new(
                u.f.clone(),
                u.f_u.clone(),
                u.f_x.clone(),
                u.f0,
                Arc::new(set),
                u.eps,
            ));
        }
        rlp.validate()?;
        Ok(rlp)
    }
}
