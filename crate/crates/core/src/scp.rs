//! Sequential convex programming: repeatedly condense the signomial program
//! around the current allocation, solve the resulting GP inside a trust
//! region, and renormalize, raising the reach penalty while the reach bound
//! is violated.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{derive_policy, AdversaryError, AdversaryProfile, Allocation};
use crate::algebra::{Assignment, VarId};
use crate::evaluator::{expected_cost, reach_probability};
use crate::gp::{self, GpError, GpStatus, SolverSettings};
use crate::mdp::{MdpModel, Policy};
use crate::program::{build_sp, condense, trust_region, ConstraintKind, ProgramError, SpProblem, VarKind};

/// Relative inflation applied per recursion level to the expansion point so
/// the GP starts strictly inside its inequalities.
const INFLATION: f64 = 1e-3;
/// Reach values within this of lambda count as satisfying the bound.
pub const REACH_SLACK: f64 = 1e-6;
/// Smallest trust-region width `eta - 1` before the loop gives up shrinking.
const MIN_TRUST_WIDTH: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScpError {
    #[error("invalid SCP settings: {0}")]
    Settings(String),
    #[error(transparent)]
    Program(#[from] ProgramError),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
    #[error("brute force supports at most 3 states, got {0}")]
    TooManyStates(usize),
    #[error("grid resolution must lie in (0, 1], got {0}")]
    Resolution(f64),
    #[error("no allocation on the grid satisfies the reach bound")]
    NoFeasibleAllocation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScpSettings {
    /// Convergence tolerance on the change of Q between iterations.
    pub epsilon: f64,
    pub delta0: f64,
    pub mu_delta: f64,
    pub delta_max: f64,
    /// Trust-region width.
    pub eta: f64,
    pub max_outer_iterations: usize,
}

impl Default for ScpSettings {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            delta0: 1.0,
            mu_delta: 2.0,
            delta_max: 1e8,
            eta: 1.5,
            max_outer_iterations: 100,
        }
    }
}

impl ScpSettings {
    pub fn validate(&self) -> Result<(), ScpError> {
        let bad = |m: &str| Err(ScpError::Settings(m.to_string()));
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be positive");
        }
        if !(self.delta0 > 0.0 && self.delta0.is_finite()) {
            return bad("delta0 must be positive");
        }
        if !(self.mu_delta > 1.0 && self.mu_delta.is_finite()) {
            return bad("mu_delta must exceed 1");
        }
        if !(self.delta_max >= self.delta0 && self.delta_max.is_finite()) {
            return bad("delta_max must be at least delta0");
        }
        if !(self.eta > 1.0) {
            return bad("eta must exceed 1");
        }
        if self.max_outer_iterations == 0 {
            return bad("max_outer_iterations must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Evaluator Q at the renormalized allocation this iteration produced.
    pub q: f64,
    /// Evaluator reach probability at the same allocation.
    pub reach: f64,
    /// Slack `tau` at the GP solution.
    pub tau: f64,
    /// Penalty used for this iteration's program.
    pub delta: f64,
    pub eta: f64,
    /// `max_i max(x_i / x^_i, x^_i / x_i)` between expansion point and solution.
    pub max_step_ratio: f64,
    pub gp_status: GpStatus,
    pub gp_newton_steps: usize,
    /// Whether the step lowered the merit `Q + delta * tau` and was kept.
    pub accepted: bool,
    /// `sum nu Q_0` carried by the GP solution.
    pub program_q: f64,
    /// Evaluator Q recomputed from the GP solution's own (U, pi).
    pub solution_q: f64,
    #[serde(skip)]
    pub seconds: f64,
}

/// Relative slack `1 - lhs/rhs` of the recursions at the last GP solution.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Tightness {
    pub cost: f64,
    pub reach: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timing {
    pub solver_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub horizon: usize,
    pub budget: f64,
    pub lambda: f64,
    pub settings: ScpSettings,
    pub solver: SolverSettings,
    /// Q and reach under the uniform starting allocation.
    pub initial_q: f64,
    pub initial_reach: f64,
    pub iterations: Vec<IterationRecord>,
    pub allocation: Allocation,
    pub policy: Policy,
    pub q: f64,
    pub reach: f64,
    pub converged: bool,
    pub tightness: Tightness,
    /// Why the loop stopped early, if a GP solve failed.
    pub failure: Option<String>,
    #[serde(skip)]
    pub timing: Timing,
}

/// Rescales `utilities` to sum to `budget`.
pub fn normalize_allocation(utilities: &[f64], budget: f64) -> Result<Allocation, AdversaryError> {
    if let Some((state, &value)) = utilities.iter().enumerate().find(|(_, u)| !(**u > 0.0 && u.is_finite())) {
        return Err(AdversaryError::NonPositiveUtility { state, value });
    }
    let total: f64 = utilities.iter().sum();
    Allocation::new(utilities.iter().map(|u| u * budget / total).collect(), budget)
}

/// The consistent program point for the uniform allocation.
pub fn initial_point(sp: &SpProblem, model: &MdpModel, profile: &AdversaryProfile) -> Result<Assignment, ScpError> {
    let alloc = Allocation::uniform(model.num_states(), sp.budget);
    Ok(sp.consistent_point(model, profile, &alloc)?)
}

/// The point each outer iteration expands around: the consistent point of
/// `alloc`, inflated so every recursion holds strictly.
pub fn expansion_point(
    sp: &SpProblem,
    model: &MdpModel,
    profile: &AdversaryProfile,
    alloc: &Allocation,
) -> Result<Assignment, ScpError> {
    Ok(inflate(sp, &sp.consistent_point(model, profile, alloc)?))
}

/// Multiplies `Q_t`, `P_t` by `(1+k)^(H-t+1)` and `tau` by `(1+k)^(H+2)`,
/// which turns every tight recursion at a consistent point into a strict one.
fn inflate(sp: &SpProblem, point: &Assignment) -> Assignment {
    let h = sp.horizon as i32;
    let mut out = point.clone();
    for (i, kind) in sp.vars.kinds().iter().enumerate() {
        let v = VarId(i as u32);
        let factor = match *kind {
            VarKind::Cost { time, .. } | VarKind::Reach { time, .. } => (1.0 + INFLATION).powi(h - time as i32 + 1),
            VarKind::Slack => (1.0 + INFLATION).powi(h + 2),
            _ => continue,
        };
        let x = point.get(v).expect("consistent point is complete");
        out.set(v, x * factor).expect("positive");
    }
    out
}

struct Evaluated {
    allocation: Allocation,
    policy: Policy,
    q: f64,
    reach: f64,
}

fn evaluate(model: &MdpModel, profile: &AdversaryProfile, allocation: Allocation, horizon: usize) -> Result<Evaluated, ScpError> {
    let policy = derive_policy(model, &allocation, profile)?;
    let rewards = allocation.rewards(&profile.reward);
    let q = expected_cost(model, &policy, &rewards, horizon).total;
    let reach = reach_probability(model, &policy, horizon).total;
    Ok(Evaluated {
        allocation,
        policy,
        q,
        reach,
    })
}

/// Evaluator Q under the program solution's own policy and utilities.
fn solution_q(sp: &SpProblem, model: &MdpModel, profile: &AdversaryProfile, x: &Assignment) -> f64 {
    let n = model.num_states();
    let rows = (0..n)
        .map(|s| {
            let row = sp.vars.policy_row(s);
            let total: f64 = row.iter().map(|&(_, v)| x.get(v).unwrap_or(0.0)).sum();
            row.iter().map(|&(a, v)| (a, x.get(v).unwrap_or(0.0) / total)).collect()
        })
        .collect();
    let rewards: Vec<f64> = (0..n)
        .map(|s| profile.reward.reward(s, x.get(sp.vars.utility(s)).unwrap_or(0.0)))
        .collect();
    expected_cost(model, &Policy::new(rows), &rewards, sp.horizon).total
}

fn tightness(sp: &SpProblem, x: &Assignment) -> Tightness {
    let mut t = Tightness::default();
    for c in &sp.inequalities {
        let slack = match (c.lhs.eval(x), c.rhs.eval(x)) {
            (Ok(l), Ok(r)) => 1.0 - l / r,
            _ => continue,
        };
        match c.kind {
            ConstraintKind::CostRecursion { .. } | ConstraintKind::CostTerminal { .. } => t.cost = t.cost.max(slack),
            ConstraintKind::ReachRecursion { .. } => t.reach = t.reach.max(slack),
            _ => {}
        }
    }
    t
}

fn now() -> Option<std::time::Instant> {
    #[cfg(not(target_arch = "wasm32"))]
    {
        Some(std::time::Instant::now())
    }
    #[cfg(target_arch = "wasm32")]
    {
        None
    }
}

fn elapsed(start: Option<std::time::Instant>) -> f64 {
    start.map(|s| s.elapsed().as_secs_f64()).unwrap_or(0.0)
}

pub fn run(
    model: &MdpModel,
    profile: &AdversaryProfile,
    horizon: usize,
    budget: f64,
    lambda: f64,
    settings: &ScpSettings,
    solver: &SolverSettings,
) -> Result<SolveReport, ScpError> {
    run_observed(model, profile, horizon, budget, lambda, settings, solver, |_| {})
}

/// [`run`], calling `observe` after every outer iteration.
#[allow(clippy::too_many_arguments)]
pub fn run_observed(
    model: &MdpModel,
    profile: &AdversaryProfile,
    horizon: usize,
    budget: f64,
    lambda: f64,
    settings: &ScpSettings,
    solver: &SolverSettings,
    mut observe: impl FnMut(&IterationRecord),
) -> Result<SolveReport, ScpError> {
    settings.validate()?;
    solver.validate()?;
    let clock = now();
    let n = model.num_states();
    let base = build_sp(model, profile, horizon, budget, lambda, settings.delta0)?;

    let mut current = evaluate(model, profile, Allocation::uniform(n, budget), horizon)?;
    let (initial_q, initial_reach) = (current.q, current.reach);
    let mut delta = settings.delta0;
    let mut eta = settings.eta;
    let mut records = Vec::new();
    let mut converged = false;
    let mut failure = None;
    let mut last_tightness = Tightness::default();
    let mut solver_seconds = 0.0;

    for iteration in 1..=settings.max_outer_iterations {
        let iter_clock = now();
        let sp = base.with_delta(model, delta)?;
        let expansion = expansion_point(&sp, model, profile, &current.allocation)?;
        let gp_problem = trust_region(&condense(&sp, &expansion)?, &expansion, eta)?;
        let solve_clock = now();
        let sol = gp::solve(&gp_problem, &expansion, solver)?;
        solver_seconds += elapsed(solve_clock);

        match sol.status {
            GpStatus::Optimal | GpStatus::MaxIterations => {}
            GpStatus::Infeasible => {
                let narrower = 1.0 + (eta - 1.0) / 2.0;
                if narrower - 1.0 < 1e-6 {
                    failure = Some(format!("iteration {iteration}: GP infeasible at trust-region width {eta}"));
                    break;
                }
                eta = narrower;
                continue;
            }
            GpStatus::Unbounded => {
                failure = Some(format!("iteration {iteration}: GP unbounded"));
                break;
            }
        }
        let x = &sol.assignment;
        let utilities: Vec<f64> = (0..n).map(|s| x.get(sp.vars.utility(s)).unwrap_or(f64::NAN)).collect();
        let next = match normalize_allocation(&utilities, budget) {
            Ok(a) => evaluate(model, profile, a, horizon)?,
            Err(e) => {
                failure = Some(format!("iteration {iteration}: {e}"));
                break;
            }
        };
        let max_step_ratio = x
            .values()
            .iter()
            .zip(expansion.values())
            .map(|(a, b)| (a / b).max(b / a))
            .fold(1.0, f64::max);
        let program_q: f64 = model
            .initial()
            .iter()
            .enumerate()
            .map(|(s, nu)| nu * x.get(sp.vars.cost(0, s)).unwrap_or(0.0))
            .sum();
        last_tightness = tightness(&sp, x);
        let merit = |e: &Evaluated| e.q + delta * (e.reach / lambda).max(1.0);
        let accepted = merit(&next) <= merit(&current);
        records.push(IterationRecord {
            iteration,
            q: next.q,
            reach: next.reach,
            tau: x.get(sp.vars.slack()).unwrap_or(f64::NAN),
            delta,
            eta,
            max_step_ratio,
            gp_status: sol.status,
            gp_newton_steps: sol.newton_steps,
            accepted,
            program_q,
            solution_q: solution_q(&sp, model, profile, x),
            seconds: elapsed(iter_clock),
        });
        observe(records.last().expect("just pushed"));

        if !accepted {
            // Keep the current point and retry with a tighter region.
            eta = 1.0 + (eta - 1.0) / 2.0;
            if eta - 1.0 < MIN_TRUST_WIDTH {
                converged = current.reach <= lambda + REACH_SLACK;
                break;
            }
            if current.reach > lambda + REACH_SLACK {
                delta = (delta * settings.mu_delta).min(settings.delta_max);
            }
            continue;
        }
        eta = (1.0 + 2.0 * (eta - 1.0)).min(settings.eta);

        let change = (next.q - current.q).abs();
        let feasible = next.reach <= lambda + REACH_SLACK;
        current = next;
        if !feasible {
            delta = (delta * settings.mu_delta).min(settings.delta_max);
        }
        if change < settings.epsilon && (feasible || delta >= settings.delta_max) {
            converged = feasible;
            break;
        }
    }

    Ok(SolveReport {
        horizon,
        budget,
        lambda,
        settings: settings.clone(),
        solver: solver.clone(),
        initial_q,
        initial_reach,
        iterations: records,
        q: current.q,
        reach: current.reach,
        allocation: current.allocation,
        policy: current.policy,
        converged,
        tightness: last_tightness,
        failure,
        timing: Timing {
            solver_seconds,
            total_seconds: elapsed(clock),
        },
    })
}

/// Best allocation on the simplex grid `U = D k / K` with `k_i >= 1`,
/// `sum k = K = round(1 / resolution)`, among those meeting the reach bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BruteForce {
    pub allocation: Allocation,
    pub q: f64,
    pub reach: f64,
    pub evaluated: usize,
}

pub fn brute_force_allocation(
    model: &MdpModel,
    profile: &AdversaryProfile,
    horizon: usize,
    budget: f64,
    lambda: f64,
    resolution: f64,
) -> Result<BruteForce, ScpError> {
    let n = model.num_states();
    if n > 3 {
        return Err(ScpError::TooManyStates(n));
    }
    if !(resolution > 0.0 && resolution <= 1.0) {
        return Err(ScpError::Resolution(resolution));
    }
    let k = (1.0 / resolution).round() as usize;
    if k < n {
        return Err(ScpError::Resolution(resolution));
    }
    let mut best: Option<BruteForce> = None;
    let mut evaluated = 0;
    let mut parts = vec![1usize; n];
    let mut visit = |parts: &[usize]| -> Result<(), ScpError> {
        let utilities = parts.iter().map(|&p| budget * p as f64 / k as f64).collect();
        let e = evaluate(model, profile, Allocation::new(utilities, budget)?, horizon)?;
        evaluated += 1;
        if e.reach <= lambda + REACH_SLACK && best.as_ref().is_none_or(|b| e.q < b.q) {
            best = Some(BruteForce {
                allocation: e.allocation,
                q: e.q,
                reach: e.reach,
                evaluated: 0,
            });
        }
        Ok(())
    };
    match n {
        0 => {}
        1 => {
            parts[0] = k;
            visit(&parts)?;
        }
        2 => {
            for a in 1..k {
                visit(&[a, k - a])?;
            }
        }
        _ => {
            for a in 1..k {
                for b in 1..k - a {
                    visit(&[a, b, k - a - b])?;
                }
            }
        }
    }
    let mut best = best.ok_or(ScpError::NoFeasibleAllocation)?;
    best.evaluated = evaluated;
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::RewardLaw;
    use crate::mdp::ActionRow;

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_allocation(&[1.0, 1.0], 4.0).unwrap().utilities, vec![2.0, 2.0]);
        assert_eq!(normalize_allocation(&[1.0, 3.0], 400.0).unwrap().utilities, vec![100.0, 300.0]);
        let a = normalize_allocation(&[2.5, 7.5], 10.0).unwrap();
        assert_eq!(a.utilities, vec![2.5, 7.5]);
        assert!(normalize_allocation(&[0.0, 1.0], 1.0).is_err());
    }

    fn one_state() -> (MdpModel, AdversaryProfile) {
        let model = MdpModel::from_parts(
            vec!["s0".into()],
            vec!["stay".into()],
            vec![vec![ActionRow { action: 0, successors: vec![(0, 1.0)] }]],
            vec![1.0],
            &[],
        );
        let profile = AdversaryProfile::new(0.6, 0.88, RewardLaw { coefficients: vec![1.0], exponent: 1.0 }).unwrap();
        (model, profile)
    }

    #[test]
    fn single_state_initial_point_and_run() {
        let (model, profile) = one_state();
        let sp = build_sp(&model, &profile, 2, 5.0, 0.5, 1.0).unwrap();
        let x = initial_point(&sp, &model, &profile).unwrap();
        assert_eq!(x.get(sp.vars.utility(0)).unwrap(), 5.0);
        assert_eq!(x.get(sp.vars.policy(0, 0).unwrap()).unwrap(), 1.0);
        let report = run(&model, &profile, 2, 5.0, 0.5, &ScpSettings::default(), &SolverSettings::default()).unwrap();
        assert!(report.converged);
        assert!(report.iterations.len() <= 2);
        assert_eq!(report.allocation.utilities, vec![5.0]);
    }

    #[test]
    fn inflation_makes_start_strictly_feasible() {
        let (model, profile) = one_state();
        let sp = build_sp(&model, &profile, 3, 5.0, 0.5, 1.0).unwrap();
        let x = inflate(&sp, &initial_point(&sp, &model, &profile).unwrap());
        for c in &sp.inequalities {
            assert!(c.lhs.eval(&x).unwrap() < c.rhs.eval(&x).unwrap(), "{:?}", c.kind);
        }
    }

    #[test]
    fn settings_are_validated() {
        assert!(ScpSettings::default().validate().is_ok());
        let bad = ScpSettings { eta: 1.0, ..ScpSettings::default() };
        assert!(bad.validate().is_err());
        let bad = ScpSettings { mu_delta: 0.5, ..ScpSettings::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn brute_force_rejects_large_models() {
        let model = crate::adversary::two_branch::model();
        let profile = crate::adversary::two_branch::profile();
        assert!(matches!(
            brute_force_allocation(&model, &profile, 1, 1.0, 1.0, 0.1),
            Err(ScpError::TooManyStates(5))
        ));
    }
}
