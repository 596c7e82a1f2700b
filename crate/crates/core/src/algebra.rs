//! Monomials, posynomials and signomials over strictly positive variables.
//!
//! Every expression refers to variables through a [`VarId`] handed out by a
//! [`VarTable`]. Expressions are immutable values; all operations return new
//! expressions.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

/// Coefficients below this magnitude are rejected so that `log c` stays finite.
pub const MIN_COEFFICIENT: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub u32);

impl VarId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("unbound variable {0}")]
    Unbound(VarId),
    #[error("coefficient {0} is not a finite value >= {MIN_COEFFICIENT:e}")]
    BadCoefficient(f64),
    #[error("exponent {exponent} of {var} is not finite")]
    BadExponent { var: VarId, exponent: f64 },
    #[error("value {value} for {var} is not strictly positive")]
    NonPositive { var: VarId, value: f64 },
    #[error("a posynomial needs at least one term")]
    EmptyPosynomial,
    #[error("posynomial evaluated to {0} at the expansion point")]
    DegenerateExpansion(f64),
}

/// Interning table mapping symbolic variable names to dense ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VarTable {
    names: Vec<String>,
    lookup: HashMap<String, VarId>,
}

impl VarTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the id for `name`, creating it on first use.
    pub fn intern(&mut self, name: &str) -> VarId {
        if let Some(&id) = self.lookup.get(name) {
            return id;
        }
        let id = VarId(self.names.len() as u32);
        self.names.push(name.to_string());
        self.lookup.insert(name.to_string(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<VarId> {
        self.lookup.get(name).copied()
    }

    pub fn name(&self, id: VarId) -> &str {
        &self.names[id.index()]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (VarId, &str)> {
        self.names
            .iter()
            .enumerate()
            .map(|(i, n)| (VarId(i as u32), n.as_str()))
    }
}

/// A point with strictly positive coordinates. Unbound slots hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    values: Vec<f64>,
}

impl Assignment {
    /// An assignment with `len` unbound slots.
    pub fn new(len: usize) -> Self {
        Self {
            values: vec![f64::NAN; len],
        }
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self, ExprError> {
        for (i, &v) in values.iter().enumerate() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ExprError::NonPositive {
                    var: VarId(i as u32),
                    value: v,
                });
            }
        }
        Ok(Self { values })
    }

    pub fn set(&mut self, var: VarId, value: f64) -> Result<(), ExprError> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(ExprError::NonPositive { var, value });
        }
        if var.index() >= self.values.len() {
            self.values.resize(var.index() + 1, f64::NAN);
        }
        self.values[var.index()] = value;
        Ok(())
    }

    pub fn get(&self, var: VarId) -> Result<f64, ExprError> {
        match self.values.get(var.index()) {
            Some(&v) if !v.is_nan() => Ok(v),
            _ => Err(ExprError::Unbound(var)),
        }
    }

    pub fn is_bound(&self, var: VarId) -> bool {
        self.get(var).is_ok()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Raw slot values; unbound slots are NaN.
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// `c * prod x_i^a_i` with `c > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    coefficient: f64,
    // Sorted by variable, no duplicates, no zero exponents.
    exponents: Vec<(VarId, f64)>,
}

impl Monomial {
    pub fn new(
        coefficient: f64,
        exponents: impl IntoIterator<Item = (VarId, f64)>,
    ) -> Result<Self, ExprError> {
        if !(coefficient.is_finite() && coefficient >= MIN_COEFFICIENT) {
            return Err(ExprError::BadCoefficient(coefficient));
        }
        let mut merged: BTreeMap<VarId, f64> = BTreeMap::new();
        for (var, exponent) in exponents {
            if !exponent.is_finite() {
                return Err(ExprError::BadExponent { var, exponent });
            }
            *merged.entry(var).or_insert(0.0) += exponent;
        }
        Ok(Self {
            coefficient,
            exponents: merged.into_iter().filter(|&(_, a)| a != 0.0).collect(),
        })
    }

    pub fn constant(coefficient: f64) -> Result<Self, ExprError> {
        Self::new(coefficient, [])
    }

    pub fn var(var: VarId) -> Self {
        Self {
            coefficient: 1.0,
            exponents: vec![(var, 1.0)],
        }
    }

    pub fn power(var: VarId, exponent: f64) -> Result<Self, ExprError> {
        Self::new(1.0, [(var, exponent)])
    }

    pub fn coefficient(&self) -> f64 {
        self.coefficient
    }

    pub fn exponents(&self) -> &[(VarId, f64)] {
        &self.exponents
    }

    pub fn exponent_of(&self, var: VarId) -> f64 {
        self.exponents
            .binary_search_by_key(&var, |&(v, _)| v)
            .map(|i| self.exponents[i].1)
            .unwrap_or(0.0)
    }

    pub fn is_constant(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn variables(&self) -> impl Iterator<Item = VarId> + '_ {
        self.exponents.iter().map(|&(v, _)| v)
    }

    pub fn eval(&self, point: &Assignment) -> Result<f64, ExprError> {
        let mut acc = self.coefficient;
        for &(v, a) in &self.exponents {
            let x = point.get(v)?;
            acc *= if a == 1.0 { x } else { x.powf(a) };
        }
        Ok(acc)
    }

    /// `log c + sum a_i log x_i`, which stays finite where the value itself
    /// would overflow.
    pub fn log_eval(&self, point: &Assignment) -> Result<f64, ExprError> {
        let mut acc = self.coefficient.ln();
        for &(v, a) in &self.exponents {
            acc += a * point.get(v)?.ln();
        }
        Ok(acc)
    }

    pub fn mul(&self, other: &Monomial) -> Result<Monomial, ExprError> {
        Monomial::new(
            self.coefficient * other.coefficient,
            self.exponents
                .iter()
                .chain(other.exponents.iter())
                .copied(),
        )
    }

    pub fn powf(&self, k: f64) -> Result<Monomial, ExprError> {
        Monomial::new(
            self.coefficient.powf(k),
            self.exponents.iter().map(|&(v, a)| (v, a * k)),
        )
    }

    pub fn recip(&self) -> Result<Monomial, ExprError> {
        self.powf(-1.0)
    }

    pub fn div(&self, other: &Monomial) -> Result<Monomial, ExprError> {
        self.mul(&other.recip()?)
    }

    pub fn scale(&self, k: f64) -> Result<Monomial, ExprError> {
        Monomial::new(self.coefficient * k, self.exponents.iter().copied())
    }

    fn accumulate_gradient(
        &self,
        sign: f64,
        point: &Assignment,
        out: &mut BTreeMap<VarId, f64>,
    ) -> Result<(), ExprError> {
        let value = self.eval(point)?;
        for &(v, a) in &self.exponents {
            *out.entry(v).or_insert(0.0) += sign * a * value / point.get(v)?;
        }
        Ok(())
    }

    pub fn gradient(&self, point: &Assignment) -> Result<BTreeMap<VarId, f64>, ExprError> {
        let mut out = BTreeMap::new();
        self.accumulate_gradient(1.0, point, &mut out)?;
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignedMonomial {
    pub sign: Sign,
    pub magnitude: Monomial,
}

impl SignedMonomial {
    pub fn plus(magnitude: Monomial) -> Self {
        Self {
            sign: Sign::Plus,
            magnitude,
        }
    }

    pub fn minus(magnitude: Monomial) -> Self {
        Self {
            sign: Sign::Minus,
            magnitude,
        }
    }
}

/// Nonempty sum of monomials.
#[derive(Debug, Clone, PartialEq)]
pub struct Posynomial {
    terms: Vec<Monomial>,
}

impl Posynomial {
    pub fn new(terms: Vec<Monomial>) -> Result<Self, ExprError> {
        if terms.is_empty() {
            return Err(ExprError::EmptyPosynomial);
        }
        Ok(Self { terms })
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn is_monomial(&self) -> bool {
        self.terms.len() == 1
    }

    pub fn as_monomial(&self) -> Option<&Monomial> {
        if self.is_monomial() {
            self.terms.first()
        } else {
            None
        }
    }

    pub fn push(&mut self, term: Monomial) {
        self.terms.push(term);
    }

    pub fn add(&self, other: &Posynomial) -> Posynomial {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Posynomial { terms }
    }

    pub fn mul_monomial(&self, m: &Monomial) -> Result<Posynomial, ExprError> {
        Ok(Posynomial {
            terms: self
                .terms
                .iter()
                .map(|t| t.mul(m))
                .collect::<Result<_, _>>()?,
        })
    }

    pub fn div_monomial(&self, m: &Monomial) -> Result<Posynomial, ExprError> {
        self.mul_monomial(&m.recip()?)
    }

    /// Merges terms with identical exponent vectors, keeping first-seen order.
    pub fn simplify(&self) -> Posynomial {
        let mut out: Vec<Monomial> = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            match out.iter_mut().find(|o| o.exponents == t.exponents) {
                Some(o) => o.coefficient += t.coefficient,
                None => out.push(t.clone()),
            }
        }
        Posynomial { terms: out }
    }

    pub fn variables(&self) -> Vec<VarId> {
        let mut vars: Vec<VarId> = self.terms.iter().flat_map(|t| t.variables()).collect();
        vars.sort_unstable();
        vars.dedup();
        vars
    }

    pub fn eval(&self, point: &Assignment) -> Result<f64, ExprError> {
        self.terms.iter().map(|t| t.eval(point)).sum()
    }

    pub fn gradient(&self, point: &Assignment) -> Result<BTreeMap<VarId, f64>, ExprError> {
        let mut out = BTreeMap::new();
        for t in &self.terms {
            t.accumulate_gradient(1.0, point, &mut out)?;
        }
        Ok(out)
    }

    /// Best local monomial fit at `point`: matches value and gradient there
    /// and underestimates the posynomial everywhere else.
    ///
    /// The exponent of `x_i` is `x_i / f * df/dx_i`, i.e. the term-value
    /// weighted average of the term exponents.
    pub fn monomial_approximation(&self, point: &Assignment) -> Result<Monomial, ExprError> {
        if let Some(m) = self.as_monomial() {
            for v in m.variables() {
                point.get(v)?;
            }
            return Ok(m.clone());
        }
        let logs: Vec<f64> = self
            .terms
            .iter()
            .map(|t| t.log_eval(point))
            .collect::<Result<_, _>>()?;
        let shift = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logs.iter().map(|l| (l - shift).exp()).collect();
        let total: f64 = weights.iter().sum();
        let log_value = shift + total.ln();
        if !log_value.is_finite() {
            return Err(ExprError::DegenerateExpansion(log_value.exp()));
        }
        let mut exponents: BTreeMap<VarId, f64> = BTreeMap::new();
        for (t, w) in self.terms.iter().zip(&weights) {
            for &(v, a) in &t.exponents {
                *exponents.entry(v).or_insert(0.0) += a * w / total;
            }
        }
        let mut log_coefficient = log_value;
        for (&v, &a) in &exponents {
            log_coefficient -= a * point.get(v)?.ln();
        }
        Monomial::new(log_coefficient.exp(), exponents)
    }
}

impl From<Monomial> for Posynomial {
    fn from(m: Monomial) -> Self {
        Posynomial { terms: vec![m] }
    }
}

/// Sum of signed monomials; the empty sum is zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Signomial {
    terms: Vec<SignedMonomial>,
}

impl Signomial {
    pub fn new(terms: Vec<SignedMonomial>) -> Self {
        Self { terms }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn terms(&self) -> &[SignedMonomial] {
        &self.terms
    }

    pub fn push(&mut self, term: SignedMonomial) {
        self.terms.push(term);
    }

    pub fn concat(&self, other: &Signomial) -> Signomial {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Signomial { terms }
    }

    pub fn neg(&self) -> Signomial {
        Signomial {
            terms: self
                .terms
                .iter()
                .map(|t| SignedMonomial {
                    sign: match t.sign {
                        Sign::Plus => Sign::Minus,
                        Sign::Minus => Sign::Plus,
                    },
                    magnitude: t.magnitude.clone(),
                })
                .collect(),
        }
    }

    /// `Some` iff every term is positive and there is at least one term.
    pub fn to_posynomial(&self) -> Option<Posynomial> {
        if self.terms.is_empty() || self.terms.iter().any(|t| t.sign == Sign::Minus) {
            return None;
        }
        Some(Posynomial {
            terms: self.terms.iter().map(|t| t.magnitude.clone()).collect(),
        })
    }

    /// Merges terms with identical exponent vectors, dropping exact cancellations.
    pub fn simplify(&self) -> Signomial {
        let mut acc: Vec<(Vec<(VarId, f64)>, f64)> = Vec::new();
        for t in &self.terms {
            let c = t.sign.factor() * t.magnitude.coefficient;
            match acc.iter_mut().find(|(e, _)| *e == t.magnitude.exponents) {
                Some((_, total)) => *total += c,
                None => acc.push((t.magnitude.exponents.clone(), c)),
            }
        }
        let terms = acc
            .into_iter()
            .filter(|&(_, c)| c.abs() >= MIN_COEFFICIENT)
            .map(|(exponents, c)| SignedMonomial {
                sign: if c > 0.0 { Sign::Plus } else { Sign::Minus },
                magnitude: Monomial {
                    coefficient: c.abs(),
                    exponents,
                },
            })
            .collect();
        Signomial { terms }
    }

    pub fn eval(&self, point: &Assignment) -> Result<f64, ExprError> {
        let mut acc = 0.0;
        for t in &self.terms {
            acc += t.sign.factor() * t.magnitude.eval(point)?;
        }
        Ok(acc)
    }

    pub fn gradient(&self, point: &Assignment) -> Result<BTreeMap<VarId, f64>, ExprError> {
        let mut out = BTreeMap::new();
        for t in &self.terms {
            t.magnitude
                .accumulate_gradient(t.sign.factor(), point, &mut out)?;
        }
        Ok(out)
    }

    /// Canonical debug text: `+c * a^1 * b^-2 + ...`, factors sorted by
    /// variable name and terms sorted by their variable part.
    pub fn canonical(&self, vars: &VarTable) -> String {
        if self.terms.is_empty() {
            return "0".to_string();
        }
        let mut rendered: Vec<(String, String)> = self
            .terms
            .iter()
            .map(|t| {
                let mut factors: Vec<(&str, f64)> = t
                    .magnitude
                    .exponents
                    .iter()
                    .map(|&(v, a)| (vars.name(v), a))
                    .collect();
                factors.sort_by(|x, y| x.0.cmp(y.0));
                let body: String = factors
                    .iter()
                    .map(|(n, a)| format!(" * {n}^{a}"))
                    .collect();
                let sign = match t.sign {
                    Sign::Plus => '+',
                    Sign::Minus => '-',
                };
                (body.clone(), format!("{sign}{}{body}", t.magnitude.coefficient))
            })
            .collect();
        rendered.sort();
        rendered
            .into_iter()
            .map(|(_, s)| s)
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl From<Posynomial> for Signomial {
    fn from(p: Posynomial) -> Self {
        Signomial {
            terms: p.terms.into_iter().map(SignedMonomial::plus).collect(),
        }
    }
}

impl From<Monomial> for Signomial {
    fn from(m: Monomial) -> Self {
        Signomial {
            terms: vec![SignedMonomial::plus(m)],
        }
    }
}

/// Evaluates any signomial expression at `point`.
pub fn evaluate(expr: &Signomial, point: &Assignment) -> Result<f64, ExprError> {
    expr.eval(point)
}

pub fn gradient(expr: &Signomial, point: &Assignment) -> Result<BTreeMap<VarId, f64>, ExprError> {
    expr.gradient(point)
}

pub fn monomial_approximation(f: &Posynomial, point: &Assignment) -> Result<Monomial, ExprError> {
    f.monomial_approximation(point)
}
