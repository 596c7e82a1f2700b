use crate::algebra::{Monomial, Posynomial};

use super::GpProblem;

/// `log sum_k exp(a_k . y + b_k)` over a small set of variables.
///
/// Variables are stored once per form (`vars`), and term exponents refer to
/// positions in that list, so gradients and Hessians come out as small dense
/// blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct LseForm {
    vars: Vec<usize>,
    terms: Vec<(Vec<(usize, f64)>, f64)>,
}

impl LseForm {
    pub fn from_posynomial(p: &Posynomial) -> Self {
        let mut vars: Vec<usize> = p.variables().into_iter().map(|v| v.index()).collect();
        vars.sort_unstable();
        let terms = p
            .terms()
            .iter()
            .map(|m| {
                let local = m
                    .exponents()
                    .iter()
                    .map(|&(v, a)| (vars.binary_search(&v.index()).expect("variable listed"), a))
                    .collect();
                (local, m.coefficient().ln())
            })
            .collect();
        Self { vars, terms }
    }

    /// A single affine term `sum coeffs . y + offset`.
    pub fn affine(coeffs: &[(usize, f64)], offset: f64) -> Self {
        let mut vars: Vec<usize> = coeffs.iter().map(|&(v, _)| v).collect();
        vars.sort_unstable();
        vars.dedup();
        let local = coeffs
            .iter()
            .map(|&(v, a)| (vars.binary_search(&v).expect("variable listed"), a))
            .collect();
        Self {
            vars,
            terms: vec![(local, offset)],
        }
    }

    pub fn vars(&self) -> &[usize] {
        &self.vars
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_affine(&self) -> bool {
        self.terms.len() == 1
    }

    fn exponents(&self, y: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.terms.iter().map(|(a, b)| {
            b + a.iter().map(|&(j, aj)| aj * y[self.vars[j]]).sum::<f64>()
        }));
    }

    /// The same form minus `y[s]` in every term (`s` beyond all current
    /// variables), as used by the phase-1 problem.
    pub(crate) fn shifted(&self, s: usize) -> Self {
        debug_assert!(self.vars.last().is_none_or(|&v| v < s));
        let mut vars = self.vars.clone();
        vars.push(s);
        let k = self.vars.len();
        let terms = self
            .terms
            .iter()
            .map(|(a, b)| {
                let mut a = a.clone();
                a.push((k, -1.0));
                (a, *b)
            })
            .collect();
        Self { vars, terms }
    }

    /// Value with max-shift stabilization.
    pub fn value(&self, y: &[f64]) -> f64 {
        let mut z = Vec::with_capacity(self.terms.len());
        self.exponents(y, &mut z);
        lse(&z)
    }

    /// Value, local gradient (length `vars().len()`), and optionally the
    /// local dense Hessian (row-major, `k * k`).
    pub fn eval_local(&self, y: &[f64], grad: &mut [f64], hess: Option<&mut [f64]>) -> f64 {
        let k = self.vars.len();
        grad[..k].fill(0.0);
        if self.terms.len() == 1 {
            let (a, b) = &self.terms[0];
            let mut v = *b;
            for &(j, aj) in a {
                v += aj * y[self.vars[j]];
                grad[j] += aj;
            }
            if let Some(h) = hess {
                h[..k * k].fill(0.0);
            }
            return v;
        }
        let mut z = Vec::with_capacity(self.terms.len());
        self.exponents(y, &mut z);
        let value = lse(&z);
        // softmax weights
        for zk in &mut z {
            *zk = (*zk - value).exp();
        }
        for ((a, _), &p) in self.terms.iter().zip(&z) {
            for &(j, aj) in a {
                grad[j] += p * aj;
            }
        }
        if let Some(h) = hess {
            let h = &mut h[..k * k];
            for i in 0..k {
                for j in 0..k {
                    h[i * k + j] = -grad[i] * grad[j];
                }
            }
            for ((a, _), &p) in self.terms.iter().zip(&z) {
                for &(i, ai) in a {
                    for &(j, aj) in a {
                        h[i * k + j] += p * ai * aj;
                    }
                }
            }
        }
        value
    }
}

fn lse(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + z.iter().map(|zk| (zk - m).exp()).sum::<f64>().ln()
}

/// `a . y + offset = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineRow {
    pub coeffs: Vec<(usize, f64)>,
    pub offset: f64,
}

impl AffineRow {
    pub fn from_monomial(m: &Monomial) -> Self {
        Self {
            coeffs: m.exponents().iter().map(|&(v, a)| (v.index(), a)).collect(),
            offset: m.coefficient().ln(),
        }
    }

    pub fn residual(&self, y: &[f64]) -> f64 {
        self.offset + self.coeffs.iter().map(|&(j, a)| a * y[j]).sum::<f64>()
    }
}

/// The convex program obtained from a GP by `y = log x`:
/// minimize `F0(y)` subject to `F_i(y) <= 0` and `A y + b = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexLogProblem {
    pub num_vars: usize,
    pub objective: LseForm,
    pub inequalities: Vec<LseForm>,
    pub equalities: Vec<AffineRow>,
}

pub fn to_log_convex(gp: &GpProblem) -> ConvexLogProblem {
    ConvexLogProblem {
        num_vars: gp.num_vars,
        objective: LseForm::from_posynomial(&gp.objective),
        inequalities: gp.inequalities.iter().map(LseForm::from_posynomial).collect(),
        equalities: gp.equalities.iter().map(AffineRow::from_monomial).collect(),
    }
}

/// Indices of a maximal independent subset of equality rows (modified
/// Gram-Schmidt on the dense rows). Returns `None` if a dependent row
/// contradicts the others.
pub(crate) fn independent_rows(rows: &[AffineRow], n: usize) -> Option<Vec<usize>> {
    let mut basis: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut kept = Vec::new();
    for (idx, row) in rows.iter().enumerate() {
        let mut v = vec![0.0; n];
        for &(j, a) in &row.coeffs {
            v[j] += a;
        }
        let mut b = row.offset;
        let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (q, qb) in &basis {
            let d: f64 = v.iter().zip(q).map(|(x, y)| x * y).sum();
            if d != 0.0 {
                for (x, y) in v.iter_mut().zip(q) {
                    *x -= d * y;
                }
                b -= d * qb;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= 1e-10 * norm0.max(1.0) {
            if b.abs() > 1e-8 * (1.0 + row.offset.abs()) {
                return None;
            }
            continue;
        }
        for x in &mut v {
            *x /= norm;
        }
        basis.push((v, b / norm));
        kept.push(idx);
    }
    Some(kept)
}
