//! The deceptive-allocation signomial program, its penalty relaxation, and
//! its condensation into geometric programs.
//!
//! Decision variables are utilities `U_s`, policy entries `pi_s_aK`, expected
//! costs `Q_t_s`, reach probabilities `P_t_s` (non-sensitive states only),
//! rewards `R_s` and the reach slack `tau`. Every constant (prospect weights,
//! the initial distribution, pinned reach values) is folded into monomial
//! coefficients.

use thiserror::Error;

use crate::adversary::{derive_policy, weight_probability, AdversaryError, AdversaryProfile, Allocation};
use crate::algebra::{Assignment, ExprError, Monomial, Posynomial, Signomial, VarId, VarTable};
use crate::evaluator::{expected_cost, reach_with_terminal};
use crate::gp::GpProblem;
use crate::mdp::{validate, MdpError, MdpModel};

/// Horizon value of `P_H(s)` for non-sensitive `s`: a tiny positive stand-in
/// for zero, which a GP variable cannot take.
pub const REACH_TERMINAL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProgramError {
    #[error("budget must be positive and finite, got {0}")]
    Budget(f64),
    #[error("reach bound lambda must lie in (0, 1], got {0}")]
    Lambda(f64),
    #[error("penalty delta must be positive and finite, got {0}")]
    Delta(f64),
    #[error("trust-region width must exceed 1, got {0}")]
    TrustRegion(f64),
    #[error(transparent)]
    Model(#[from] MdpError),
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("point covers {found} variables, program has {expected}")]
    PointLength { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Utility { state: usize },
    Policy { state: usize, action: usize },
    Cost { time: usize, state: usize },
    Reach { time: usize, state: usize },
    Reward { state: usize },
    Slack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    /// `R(s) + sum pi T Q_{t+1} <= Q_t(s)`
    CostRecursion { time: usize, state: usize },
    /// `R(s) <= Q_H(s)`
    CostTerminal { state: usize },
    /// `sum pi T P_{t+1} <= P_t(s)`, sensitive successors pinned to 1
    ReachRecursion { time: usize, state: usize },
    /// `REACH_TERMINAL <= P_H(s)`
    ReachTerminal { state: usize },
    /// `sum nu P_t + nu(S_s) <= lambda tau`
    ReachBound { time: usize },
    /// `1 <= tau`
    SlackFloor,
    /// `pi(s,a) sum_a' r_a'(s) = r_a(s)` over perceived rewards
    Policy { state: usize, action: usize },
    /// `R(s) = c_s U(s)^e`
    RewardLink { state: usize },
    /// `sum U = D`
    Budget,
}

/// `lhs <= rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpInequality {
    pub kind: ConstraintKind,
    pub lhs: Posynomial,
    pub rhs: Monomial,
}

/// `lhs = rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpEquality {
    pub kind: ConstraintKind,
    pub lhs: Posynomial,
    pub rhs: Posynomial,
}

/// Variable bookkeeping: names, kinds, and typed lookups.
#[derive(Debug, Clone, PartialEq)]
pub struct SpVariables {
    table: VarTable,
    kinds: Vec<VarKind>,
    utility: Vec<VarId>,
    policy: Vec<Vec<(usize, VarId)>>,
    cost: Vec<Vec<VarId>>,
    reach: Vec<Vec<Option<VarId>>>,
    reward: Vec<VarId>,
    slack: VarId,
}

impl SpVariables {
    fn add(&mut self, name: String, kind: VarKind) -> VarId {
        let id = self.table.intern(&name);
        self.kinds.push(kind);
        id
    }

    pub fn table(&self) -> &VarTable {
        &self.table
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn kind(&self, v: VarId) -> VarKind {
        self.kinds[v.index()]
    }

    pub fn kinds(&self) -> &[VarKind] {
        &self.kinds
    }

    pub fn utility(&self, s: usize) -> VarId {
        self.utility[s]
    }

    pub fn policy(&self, s: usize, action: usize) -> Option<VarId> {
        self.policy[s].iter().find(|&&(a, _)| a == action).map(|&(_, v)| v)
    }

    pub fn policy_row(&self, s: usize) -> &[(usize, VarId)] {
        &self.policy[s]
    }

    pub fn cost(&self, t: usize, s: usize) -> VarId {
        self.cost[t][s]
    }

    /// `None` for sensitive states (pinned to 1).
    pub fn reach(&self, t: usize, s: usize) -> Option<VarId> {
        self.reach.get(t).and_then(|r| r[s])
    }

    pub fn reward(&self, s: usize) -> VarId {
        self.reward[s]
    }

    pub fn slack(&self) -> VarId {
        self.slack
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpProblem {
    pub vars: SpVariables,
    pub objective: Posynomial,
    pub inequalities: Vec<SpInequality>,
    pub equalities: Vec<SpEquality>,
    pub horizon: usize,
    pub budget: f64,
    pub lambda: f64,
    pub delta: f64,
}

fn checked_inputs(d: f64, lambda: f64, delta: f64) -> Result<(), ProgramError> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(ProgramError::Budget(d));
    }
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(ProgramError::Lambda(lambda));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(ProgramError::Delta(delta));
    }
    Ok(())
}

pub fn build_sp(
    model: &MdpModel,
    profile: &AdversaryProfile,
    horizon: usize,
    budget: f64,
    lambda: f64,
    delta: f64,
) -> Result<SpProblem, ProgramError> {
    checked_inputs(budget, lambda, delta)?;
    let report = validate(model);
    if !report.is_valid() {
        return Err(MdpError::Invalid(report).into());
    }
    profile.check()?;
    let n = model.num_states();
    if profile.reward.coefficients.len() != n {
        return Err(AdversaryError::AllocationLength {
            expected: n,
            found: profile.reward.coefficients.len(),
        }
        .into());
    }
    let h = horizon;
    let track_reach = (0..n).any(|s| model.is_sensitive(s));

    let mut vars = SpVariables {
        table: VarTable::new(),
        kinds: Vec::new(),
        utility: Vec::new(),
        policy: Vec::new(),
        cost: Vec::new(),
        reach: Vec::new(),
        reward: Vec::new(),
        slack: VarId(0),
    };
    for s in 0..n {
        let v = vars.add(format!("U_{s}"), VarKind::Utility { state: s });
        vars.utility.push(v);
    }
    for s in 0..n {
        let row = model
            .rows(s)
            .iter()
            .map(|r| {
                let a = r.action;
                (a, vars.add(format!("pi_{s}_a{a}"), VarKind::Policy { state: s, action: a }))
            })
            .collect();
        vars.policy.push(row);
    }
    for t in 0..=h {
        let row = (0..n)
            .map(|s| vars.add(format!("Q_{t}_{s}"), VarKind::Cost { time: t, state: s }))
            .collect();
        vars.cost.push(row);
    }
    if track_reach {
        for t in 0..=h {
            let row = (0..n)
                .map(|s| {
                    (!model.is_sensitive(s))
                        .then(|| vars.add(format!("P_{t}_{s}"), VarKind::Reach { time: t, state: s }))
                })
                .collect();
            vars.reach.push(row);
        }
    }
    for s in 0..n {
        let v = vars.add(format!("R_{s}"), VarKind::Reward { state: s });
        vars.reward.push(v);
    }
    vars.slack = vars.add("tau".into(), VarKind::Slack);

    let var = Monomial::var;
    let mut inequalities = Vec::new();
    let mut equalities = Vec::new();

    // Expected-cost recursion.
    for t in 0..h {
        for s in 0..n {
            let mut terms = vec![var(vars.reward(s))];
            for r in model.rows(s) {
                let pi = vars.policy(s, r.action).expect("policy variable per action");
                for &(succ, p) in &r.successors {
                    terms.push(Monomial::new(p, [(pi, 1.0), (vars.cost(t + 1, succ), 1.0)])?);
                }
            }
            inequalities.push(SpInequality {
                kind: ConstraintKind::CostRecursion { time: t, state: s },
                lhs: Posynomial::new(terms)?,
                rhs: var(vars.cost(t, s)),
            });
        }
    }
    for s in 0..n {
        inequalities.push(SpInequality {
            kind: ConstraintKind::CostTerminal { state: s },
            lhs: var(vars.reward(s)).into(),
            rhs: var(vars.cost(h, s)),
        });
    }

    if track_reach {
        for t in 0..h {
            for s in (0..n).filter(|&s| !model.is_sensitive(s)) {
                let mut terms = Vec::new();
                for r in model.rows(s) {
                    let pi = vars.policy(s, r.action).expect("policy variable per action");
                    for &(succ, p) in &r.successors {
                        terms.push(match vars.reach(t + 1, succ) {
                            Some(next) => Monomial::new(p, [(pi, 1.0), (next, 1.0)])?,
                            None => Monomial::new(p, [(pi, 1.0)])?,
                        });
                    }
                }
                inequalities.push(SpInequality {
                    kind: ConstraintKind::ReachRecursion { time: t, state: s },
                    lhs: Posynomial::new(terms)?,
                    rhs: var(vars.reach(t, s).expect("non-sensitive")),
                });
            }
        }
        for s in (0..n).filter(|&s| !model.is_sensitive(s)) {
            inequalities.push(SpInequality {
                kind: ConstraintKind::ReachTerminal { state: s },
                lhs: Monomial::constant(REACH_TERMINAL)?.into(),
                rhs: var(vars.reach(h, s).expect("non-sensitive")),
            });
        }
        let nu = model.initial();
        let pinned: f64 = (0..n).filter(|&s| model.is_sensitive(s)).map(|s| nu[s]).sum();
        let bound = Monomial::new(lambda, [(vars.slack(), 1.0)])?;
        for t in 0..=h {
            let mut terms = Vec::new();
            for s in (0..n).filter(|&s| !model.is_sensitive(s) && nu[s] > 0.0) {
                terms.push(Monomial::new(nu[s], [(vars.reach(t, s).expect("non-sensitive"), 1.0)])?);
            }
            if pinned > 0.0 {
                terms.push(Monomial::constant(pinned)?);
            }
            inequalities.push(SpInequality {
                kind: ConstraintKind::ReachBound { time: t },
                lhs: Posynomial::new(terms)?,
                rhs: bound.clone(),
            });
        }
    }
    inequalities.push(SpInequality {
        kind: ConstraintKind::SlackFloor,
        lhs: Monomial::constant(1.0)?.into(),
        rhs: var(vars.slack()),
    });

    // Perceived reward f(U(s')) = (c U^e)^alpha as a monomial in U.
    let alpha = profile.alpha;
    let law = &profile.reward;
    let perceived = |succ: usize| -> Result<Monomial, ExprError> {
        Monomial::new(
            law.coefficients[succ].powf(alpha),
            [(vars.utility(succ), law.exponent * alpha)],
        )
    };
    for s in 0..n {
        let mut per_action = Vec::new();
        for r in model.rows(s) {
            let mut terms = Vec::new();
            for &(succ, p) in &r.successors {
                let w = weight_probability(p, profile.gamma)?;
                terms.push(perceived(succ)?.scale(w)?);
            }
            per_action.push((r.action, Posynomial::new(terms)?));
        }
        let total = per_action
            .iter()
            .skip(1)
            .fold(per_action[0].1.clone(), |acc, (_, p)| acc.add(p));
        for (a, numer) in per_action {
            let pi = vars.policy(s, a).expect("policy variable per action");
            equalities.push(SpEquality {
                kind: ConstraintKind::Policy { state: s, action: a },
                lhs: total.mul_monomial(&var(pi))?,
                rhs: numer,
            });
        }
    }
    for s in 0..n {
        equalities.push(SpEquality {
            kind: ConstraintKind::RewardLink { state: s },
            lhs: var(vars.reward(s)).into(),
            rhs: Monomial::new(law.coefficients[s], [(vars.utility(s), law.exponent)])?.into(),
        });
    }
    equalities.push(SpEquality {
        kind: ConstraintKind::Budget,
        lhs: Posynomial::new((0..n).map(|s| var(vars.utility(s))).collect())?,
        rhs: Monomial::constant(budget)?.into(),
    });

    let objective = objective(model, &vars, delta)?;
    Ok(SpProblem {
        vars,
        objective,
        inequalities,
        equalities,
        horizon: h,
        budget,
        lambda,
        delta,
    })
}

fn objective(model: &MdpModel, vars: &SpVariables, delta: f64) -> Result<Posynomial, ExprError> {
    let mut terms: Vec<Monomial> = model
        .initial()
        .iter()
        .enumerate()
        .filter(|&(_, &nu)| nu > 0.0)
        .map(|(s, &nu)| Monomial::new(nu, [(vars.cost(0, s), 1.0)]))
        .collect::<Result<_, _>>()?;
    terms.push(Monomial::new(delta, [(vars.slack(), 1.0)])?);
    Posynomial::new(terms)
}

impl SpProblem {
    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    /// The same program with penalty `delta` in the objective.
    pub fn with_delta(&self, model: &MdpModel, delta: f64) -> Result<SpProblem, ProgramError> {
        checked_inputs(self.budget, self.lambda, delta)?;
        let mut sp = self.clone();
        sp.objective = objective(model, &self.vars, delta)?;
        sp.delta = delta;
        Ok(sp)
    }

    fn check_point(&self, point: &Assignment) -> Result<(), ProgramError> {
        if point.len() != self.num_vars() {
            return Err(ProgramError::PointLength {
                expected: self.num_vars(),
                found: point.len(),
            });
        }
        Ok(())
    }

    /// Relative violation of every constraint at `point`: `lhs/rhs - 1`
    /// (clipped at 0) for inequalities, `|lhs/rhs - 1|` for equalities.
    pub fn violations(&self, point: &Assignment) -> Result<Vec<(ConstraintKind, f64)>, ProgramError> {
        self.check_point(point)?;
        let mut out = Vec::with_capacity(self.inequalities.len() + self.equalities.len());
        for c in &self.inequalities {
            let v = c.lhs.eval(point)? / c.rhs.eval(point)? - 1.0;
            out.push((c.kind, v.max(0.0)));
        }
        for c in &self.equalities {
            let v = c.lhs.eval(point)? / c.rhs.eval(point)? - 1.0;
            out.push((c.kind, v.abs()));
        }
        Ok(out)
    }

    pub fn max_violation(&self, point: &Assignment) -> Result<f64, ProgramError> {
        Ok(self
            .violations(point)?
            .into_iter()
            .fold(0.0, |a, (_, v)| a.max(v)))
    }

    /// Objective value at `point`.
    pub fn objective_value(&self, point: &Assignment) -> Result<f64, ProgramError> {
        self.check_point(point)?;
        Ok(self.objective.eval(point)?)
    }

    /// Canonical text dump, one constraint per line.
    pub fn dump(&self) -> String {
        let names = self.vars.table();
        let mut out = format!(
            "minimize {}\n",
            Signomial::from(self.objective.clone()).canonical(names)
        );
        for c in &self.inequalities {
            out.push_str(&format!(
                "{:?}: {} <= {}\n",
                c.kind,
                Signomial::from(c.lhs.clone()).canonical(names),
                Signomial::from(c.rhs.clone()).canonical(names)
            ));
        }
        for c in &self.equalities {
            out.push_str(&format!(
                "{:?}: {} = {}\n",
                c.kind,
                Signomial::from(c.lhs.clone()).canonical(names),
                Signomial::from(c.rhs.clone()).canonical(names)
            ));
        }
        out
    }

    /// A point consistent with the program: `U` from `allocation`, the
    /// derived policy, the evaluated `Q` and `P` tables (with the same
    /// terminal the program uses), `R` from the reward law, and
    /// `tau = max_t(1, sum nu P_t / lambda)`.
    pub fn consistent_point(
        &self,
        model: &MdpModel,
        profile: &AdversaryProfile,
        allocation: &Allocation,
    ) -> Result<Assignment, ProgramError> {
        let n = model.num_states();
        let policy = derive_policy(model, allocation, profile)?;
        let rewards = allocation.rewards(&profile.reward);
        let cost = expected_cost(model, &policy, &rewards, self.horizon);
        let reach = reach_with_terminal(model, &policy, self.horizon, REACH_TERMINAL);
        let mut point = Assignment::new(self.num_vars());
        for s in 0..n {
            point.set(self.vars.utility(s), allocation.utilities[s])?;
            point.set(self.vars.reward(s), rewards[s])?;
            for &(a, p) in policy.row(s) {
                if let Some(v) = self.vars.policy(s, a) {
                    point.set(v, p)?;
                }
            }
            for t in 0..=self.horizon {
                point.set(self.vars.cost(t, s), cost.q[t][s])?;
                if let Some(v) = self.vars.reach(t, s) {
                    point.set(v, reach.p[t][s])?;
                }
            }
        }
        let nu = model.initial();
        let mut tau: f64 = 1.0;
        for t in 0..=self.horizon {
            let total: f64 = (0..n).map(|s| nu[s] * reach.p[t][s]).sum();
            tau = tau.max(total / self.lambda);
        }
        point.set(self.vars.slack(), tau)?;
        Ok(point)
    }
}

/// Divides every inequality through by its right-hand side and replaces both
/// sides of every equality by their monomial approximations at `point`.
pub fn condense(sp: &SpProblem, point: &Assignment) -> Result<GpProblem, ProgramError> {
    sp.check_point(point)?;
    let mut inequalities = Vec::with_capacity(sp.inequalities.len());
    for c in &sp.inequalities {
        inequalities.push(c.lhs.div_monomial(&c.rhs)?);
    }
    let approx = |p: &Posynomial| -> Result<Monomial, ExprError> {
        match p.as_monomial() {
            Some(m) => Ok(m.clone()),
            None => p.monomial_approximation(point),
        }
    };
    let mut equalities = Vec::with_capacity(sp.equalities.len());
    for c in &sp.equalities {
        equalities.push(approx(&c.lhs)?.div(&approx(&c.rhs)?)?);
    }
    Ok(GpProblem::new(
        sp.num_vars(),
        sp.objective.clone(),
        inequalities,
        equalities,
    ))
}

/// Adds `x <= eta x^` and `x^ <= eta x` for every variable.
pub fn trust_region(gp: &GpProblem, point: &Assignment, eta: f64) -> Result<GpProblem, ProgramError> {
    if !(eta > 1.0) {
        return Err(ProgramError::TrustRegion(eta));
    }
    if point.len() != gp.num_vars {
        return Err(ProgramError::PointLength {
            expected: gp.num_vars,
            found: point.len(),
        });
    }
    let mut out = gp.clone();
    if eta.is_infinite() {
        return Ok(out);
    }
    for i in 0..gp.num_vars {
        let v = VarId(i as u32);
        let xhat = point.get(v)?;
        out.inequalities
            .push(Monomial::new(1.0 / (eta * xhat), [(v, 1.0)])?.into());
        out.inequalities
            .push(Monomial::new(xhat / eta, [(v, -1.0)])?.into());
    }
    Ok(out)
}
