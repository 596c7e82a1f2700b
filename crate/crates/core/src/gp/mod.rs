//! Geometric programs and their log-domain interior-point solver.
//!
//! A GP is
//!
//! ```txt
//!   minimize    f0(x)
//!   subject to  f_i(x) <= 1    (posynomials)
//!               h_j(x)  = 1    (monomials)
//! ```
//!
//! With `y = log x` every posynomial becomes a log-sum-exp of affine forms
//! and every monomial an affine form, which is a convex program. It is
//! solved with a path-following barrier method whose Newton systems carry
//! the affine equalities explicitly.

mod convex;
mod kkt;
mod linsys;
mod solver;

pub use convex::{to_log_convex, AffineRow, ConvexLogProblem, LseForm};
pub use kkt::{kkt_report, KktReport};
pub use solver::{solve, GpSolution, GpStatus, SolverSettings, StageTrace};

use thiserror::Error;

use crate::algebra::{Assignment, ExprError, Monomial, Posynomial, Signomial, VarTable, MIN_COEFFICIENT};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("GP lint: {0}")]
    Lint(String),
    #[error("start point: {0}")]
    Start(ExprError),
    #[error("invalid solver settings: {0}")]
    Settings(String),
}

/// A geometric program in standard form over `num_vars` positive variables.
#[derive(Debug, Clone, PartialEq)]
pub struct GpProblem {
    pub num_vars: usize,
    pub objective: Posynomial,
    /// Each entry is constrained `<= 1`.
    pub inequalities: Vec<Posynomial>,
    /// Each entry is constrained `= 1`.
    pub equalities: Vec<Monomial>,
}

impl GpProblem {
    pub fn new(
        num_vars: usize,
        objective: Posynomial,
        inequalities: Vec<Posynomial>,
        equalities: Vec<Monomial>,
    ) -> Self {
        Self {
            num_vars,
            objective,
            inequalities,
            equalities,
        }
    }

    /// Structural checks: every coefficient positive and finite, every
    /// exponent finite, every variable in range.
    pub fn lint(&self) -> Result<(), GpError> {
        let check = |m: &Monomial, what: &str| -> Result<(), GpError> {
            if !(m.coefficient().is_finite() && m.coefficient() >= MIN_COEFFICIENT) {
                return Err(GpError::Lint(format!(
                    "{what}: coefficient {} not positive",
                    m.coefficient()
                )));
            }
            for &(v, a) in m.exponents() {
                if v.index() >= self.num_vars {
                    return Err(GpError::Lint(format!("{what}: variable {v} out of range")));
                }
                if !a.is_finite() {
                    return Err(GpError::Lint(format!("{what}: exponent {a} of {v}")));
                }
            }
            Ok(())
        };
        for t in self.objective.terms() {
            check(t, "objective")?;
        }
        for (i, p) in self.inequalities.iter().enumerate() {
            for t in p.terms() {
                check(t, &format!("inequality {i}"))?;
            }
        }
        for (j, m) in self.equalities.iter().enumerate() {
            check(m, &format!("equality {j}"))?;
        }
        Ok(())
    }

    /// Largest violation `max(f_i(x) - 1, |h_j(x) - 1|)` at `x`.
    pub fn max_violation(&self, x: &Assignment) -> Result<f64, ExprError> {
        let mut worst: f64 = 0.0;
        for p in &self.inequalities {
            worst = worst.max(p.eval(x)? - 1.0);
        }
        for m in &self.equalities {
            worst = worst.max((m.eval(x)? - 1.0).abs());
        }
        Ok(worst)
    }

    /// Canonical text dump, one line per objective/constraint.
    pub fn dump(&self, vars: &VarTable) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "minimize {}\n",
            Signomial::from(self.objective.clone()).canonical(vars)
        ));
        for p in &self.inequalities {
            out.push_str(&format!(
                "{} <= 1\n",
                Signomial::from(p.clone()).canonical(vars)
            ));
        }
        for m in &self.equalities {
            out.push_str(&format!(
                "{} = 1\n",
                Signomial::from(m.clone()).canonical(vars)
            ));
        }
        out
    }
}
