use serde::Serialize;

use super::convex::to_log_convex;
use super::solver::{GpSolution, GpStatus};
use super::GpProblem;

/// Optimality residuals of a GP solution, measured on the log problem
/// except for primal feasibility, which is reported in the original space.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct KktReport {
    /// `max(0, max_i f_i(x) - 1)`.
    pub primal_inequality: f64,
    /// `max_j |h_j(x) - 1|`.
    pub primal_equality: f64,
    /// Max-norm of `grad F0 + sum lambda_i grad F_i + A^T nu`.
    pub stationarity: f64,
    /// `max_i lambda_i |F_i(y)|`.
    pub complementarity: f64,
    /// Smallest multiplier; negative values violate dual feasibility.
    pub min_multiplier: f64,
    /// Set when the solve ended unbounded; no optimum is claimed.
    pub unbounded: bool,
}

impl KktReport {
    pub fn max_residual(&self) -> f64 {
        if self.unbounded {
            return f64::INFINITY;
        }
        self.primal_inequality
            .max(self.primal_equality)
            .max(self.stationarity)
            .max(self.complementarity)
            .max(-self.min_multiplier.min(0.0))
    }
}

pub fn kkt_report(gp: &GpProblem, solution: &GpSolution) -> KktReport {
    let x = &solution.assignment;
    let mut report = KktReport {
        unbounded: solution.status == GpStatus::Unbounded,
        ..KktReport::default()
    };
    let values = x.values();
    if values.len() != gp.num_vars || values.iter().any(|v| !(*v > 0.0)) {
        report.primal_inequality = f64::NAN;
        report.primal_equality = f64::NAN;
        report.stationarity = f64::NAN;
        report.complementarity = f64::NAN;
        return report;
    }
    for p in &gp.inequalities {
        let v = p.eval(x).unwrap_or(f64::INFINITY);
        report.primal_inequality = report.primal_inequality.max(v - 1.0);
    }
    for m in &gp.equalities {
        let v = m.eval(x).unwrap_or(f64::INFINITY);
        report.primal_equality = report.primal_equality.max((v - 1.0).abs());
    }

    let conv = to_log_convex(gp);
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let mut r = vec![0.0; gp.num_vars];
    let mut grad = Vec::new();
    let mut add = |f: &super::LseForm, w: f64, r: &mut [f64]| -> f64 {
        grad.resize(f.vars().len(), 0.0);
        let v = f.eval_local(&y, &mut grad, None);
        for (j, &var) in f.vars().iter().enumerate() {
            r[var] += w * grad[j];
        }
        v
    };
    add(&conv.objective, 1.0, &mut r);
    let lambdas = &solution.inequality_multipliers;
    report.min_multiplier = lambdas.iter().copied().fold(0.0, f64::min);
    for (i, f) in conv.inequalities.iter().enumerate() {
        let l = lambdas.get(i).copied().unwrap_or(0.0);
        let v = add(f, l, &mut r);
        report.complementarity = report.complementarity.max(l * v.abs());
    }
    for (j, row) in conv.equalities.iter().enumerate() {
        let nu = solution.equality_multipliers.get(j).copied().unwrap_or(0.0);
        for &(var, a) in &row.coeffs {
            r[var] += nu * a;
        }
    }
    report.stationarity = r.iter().fold(0.0, |a: f64, v| a.max(v.abs()));
    report
}
