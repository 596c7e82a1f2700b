use serde::{Deserialize, Serialize};

use crate::algebra::{Assignment, ExprError, VarId};

use super::convex::{independent_rows, to_log_convex, AffineRow, ConvexLogProblem, LseForm};
use super::kkt::{kkt_report, KktReport};
use super::linsys::KktSystem;
use super::{GpError, GpProblem};

/// Iterates with `|log x| > UNBOUNDED_LOG` are taken as evidence that the
/// objective decreases without bound.
const UNBOUNDED_LOG: f64 = 700.0;
/// Phase 1 stops as soon as the shared slack is at most this (in log space).
const PHASE1_MARGIN: f64 = 1e-3;
const MIN_STEP: f64 = 1e-14;
/// A step may shrink no inequality slack `-F_i` below this fraction of its
/// current value. Without it a single long step can park an iterate right on
/// a curved boundary, where the curvature term of the barrier Hessian then
/// throttles every following Newton step.
const BOUNDARY_FRACTION: f64 = 0.3;
/// Half squared decrement below which a stagnating stage counts as centered.
const NOISE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// Newton iterations allowed per centering stage.
    pub max_newton_iterations: usize,
    pub max_stages: usize,
    pub initial_t: f64,
    pub barrier_multiplier: f64,
    /// Target duality gap `m / t` of the log problem.
    pub primal_tolerance: f64,
    /// Max-norm of the log-space equality residual counted as satisfied.
    pub equality_tolerance: f64,
    /// Centering stops once half the squared Newton decrement drops below this.
    pub newton_tolerance: f64,
    /// Armijo sufficient-decrease fraction.
    pub armijo: f64,
    /// Step shrink factor during backtracking.
    pub backtrack: f64,
    /// Diagonal shift added to the Hessian block of every KKT solve.
    pub regularization: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_newton_iterations: 200,
            max_stages: 60,
            initial_t: 1.0,
            barrier_multiplier: 20.0,
            primal_tolerance: 1e-8,
            equality_tolerance: 1e-8,
            newton_tolerance: 1e-14,
            armijo: 0.01,
            backtrack: 0.5,
            regularization: 1e-10,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<(), GpError> {
        let bad = |m: &str| Err(GpError::Settings(m.to_string()));
        if self.max_newton_iterations == 0 || self.max_stages == 0 {
            return bad("iteration caps must be positive");
        }
        if !(self.initial_t > 0.0 && self.initial_t.is_finite()) {
            return bad("initial t must be positive");
        }
        if !(self.barrier_multiplier > 1.0 && self.barrier_multiplier.is_finite()) {
            return bad("barrier multiplier must exceed 1");
        }
        for (name, v) in [
            ("primal tolerance", self.primal_tolerance),
            ("equality tolerance", self.equality_tolerance),
            ("newton tolerance", self.newton_tolerance),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(GpError::Settings(format!("{name} must lie in (0, 1)")));
            }
        }
        if !(self.armijo > 0.0 && self.armijo < 0.5) {
            return bad("armijo fraction must lie in (0, 0.5)");
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return bad("backtracking factor must lie in (0, 1)");
        }
        if !(self.regularization >= 0.0 && self.regularization < 1.0) {
            return bad("regularization must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GpStatus {
    Optimal,
    MaxIterations,
    Infeasible,
    /// The objective decreased without bound; no optimum is claimed.
    Unbounded,
}

/// One centering stage of the barrier method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageTrace {
    pub phase1: bool,
    pub t: f64,
    /// Newton decrement before each step taken in this stage.
    pub decrements: Vec<f64>,
    /// Log-space objective after centering.
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpSolution {
    pub assignment: Assignment,
    pub objective: f64,
    pub status: GpStatus,
    /// Multiplier per inequality (`1 / (t (-F_i))`).
    pub inequality_multipliers: Vec<f64>,
    /// Multiplier per equality in log form; dropped redundant rows get 0.
    pub equality_multipliers: Vec<f64>,
    pub duality_gap: f64,
    pub newton_steps: usize,
    pub trace: Vec<StageTrace>,
    pub kkt: KktReport,
}

pub fn solve(gp: &GpProblem, start: &Assignment, settings: &SolverSettings) -> Result<GpSolution, GpError> {
    settings.validate()?;
    gp.lint()?;
    let n = gp.num_vars;
    if start.len() != n {
        return Err(GpError::Start(ExprError::Unbound(VarId(start.len().min(n) as u32))));
    }
    let mut y = Vec::with_capacity(n);
    for (i, &v) in start.values().iter().enumerate() {
        if v.is_nan() {
            return Err(GpError::Start(ExprError::Unbound(VarId(i as u32))));
        }
        if !(v > 0.0 && v.is_finite()) {
            return Err(GpError::Start(ExprError::NonPositive { var: VarId(i as u32), value: v }));
        }
        y.push(v.ln());
    }

    let full = to_log_convex(gp);
    let m = full.inequalities.len();
    let Some(kept) = independent_rows(&full.equalities, n) else {
        return Ok(finish(gp, &full, y, vec![0.0; m], GpStatus::Infeasible, f64::INFINITY, 0, vec![]));
    };
    let eqs: Vec<AffineRow> = kept.iter().map(|&i| full.equalities[i].clone()).collect();
    let reduced = ConvexLogProblem {
        num_vars: n,
        objective: full.objective.clone(),
        inequalities: full.inequalities.clone(),
        equalities: eqs,
    };

    let mut trace = Vec::new();
    let mut steps = 0;
    let strictly_feasible = reduced.inequalities.iter().all(|f| f.value(&y) < 0.0);
    if !strictly_feasible {
        let (phase1, s0) = phase1_problem(&reduced, &y);
        let mut z = y.clone();
        z.push(s0);
        let mut run = Barrier::new(&phase1, settings);
        let out = run.run(z, true);
        steps += out.steps;
        trace.extend(out.trace);
        let s = out.y[n];
        let eq_ok = max_residual(&phase1.equalities, &out.y) <= settings.equality_tolerance;
        match out.status {
            Outcome::Exit => {}
            Outcome::Done if s < 0.0 && eq_ok => {}
            Outcome::Done | Outcome::Stalled => {
                let ineq = vec![0.0; m];
                let yy = out.y[..n].to_vec();
                return Ok(finish(gp, &full, yy, ineq, GpStatus::Infeasible, f64::INFINITY, steps, trace));
            }
            Outcome::Cap => {
                let yy = out.y[..n].to_vec();
                return Ok(finish(gp, &full, yy, vec![0.0; m], GpStatus::MaxIterations, f64::INFINITY, steps, trace));
            }
            Outcome::Unbounded => {
                let yy = out.y[..n].to_vec();
                return Ok(finish(gp, &full, yy, vec![0.0; m], GpStatus::Infeasible, f64::INFINITY, steps, trace));
            }
        }
        y = out.y[..n].to_vec();
    }

    let mut run = Barrier::new(&reduced, settings);
    let out = run.run(y, false);
    steps += out.steps;
    trace.extend(out.trace);
    let status = match out.status {
        Outcome::Done | Outcome::Exit => GpStatus::Optimal,
        Outcome::Stalled => GpStatus::Optimal,
        Outcome::Cap => GpStatus::MaxIterations,
        Outcome::Unbounded => GpStatus::Unbounded,
    };
    let t = out.t;
    let lambdas: Vec<f64> = reduced
        .inequalities
        .iter()
        .map(|f| 1.0 / (t * -f.value(&out.y)))
        .collect();
    let mut nu = vec![0.0; full.equalities.len()];
    for (r, &i) in kept.iter().enumerate() {
        nu[i] = out.nu.get(r).copied().unwrap_or(0.0) / t;
    }
    let gap = if m == 0 { 0.0 } else { m as f64 / t };
    let mut sol = finish(gp, &full, out.y, lambdas, status, gap, steps, trace);
    sol.equality_multipliers = nu;
    sol.kkt = kkt_report(gp, &sol);
    Ok(sol)
}

fn finish(
    gp: &GpProblem,
    full: &ConvexLogProblem,
    y: Vec<f64>,
    inequality_multipliers: Vec<f64>,
    status: GpStatus,
    duality_gap: f64,
    newton_steps: usize,
    trace: Vec<StageTrace>,
) -> GpSolution {
    let x: Vec<f64> = y.iter().map(|v| v.exp()).collect();
    let objective = full.objective.value(&y).exp();
    let assignment = Assignment::from_values(x).unwrap_or_else(|_| Assignment::new(gp.num_vars));
    let mut sol = GpSolution {
        assignment,
        objective,
        status,
        inequality_multipliers,
        equality_multipliers: vec![0.0; full.equalities.len()],
        duality_gap,
        newton_steps,
        trace,
        kkt: KktReport::default(),
    };
    sol.kkt = kkt_report(gp, &sol);
    sol
}

/// Newton converges quadratically until rounding takes over; once the
/// decrement is small and has stopped shrinking over several steps, further
/// steps only chase noise.
fn at_noise_floor(decrements: &[f64]) -> bool {
    const WINDOW: usize = 4;
    if decrements.len() < WINDOW {
        return false;
    }
    let tail = &decrements[decrements.len() - WINDOW..];
    let hi = tail.iter().cloned().fold(0.0, f64::max);
    let lo = tail.iter().cloned().fold(f64::INFINITY, f64::min);
    hi * hi / 2.0 <= NOISE_FLOOR && hi <= 2.0 * lo
}

fn max_residual(rows: &[AffineRow], y: &[f64]) -> f64 {
    rows.iter().map(|r| r.residual(y).abs()).fold(0.0, f64::max)
}

/// `min s  s.t.  F_i(y) - s <= 0,  -s - 1 <= 0,  A y + b = 0`.
fn phase1_problem(p: &ConvexLogProblem, y: &[f64]) -> (ConvexLogProblem, f64) {
    let n = p.num_vars;
    let worst = p
        .inequalities
        .iter()
        .map(|f| f.value(y))
        .fold(f64::NEG_INFINITY, f64::max);
    let mut inequalities: Vec<LseForm> = p.inequalities.iter().map(|f| f.shifted(n)).collect();
    inequalities.push(LseForm::affine(&[(n, -1.0)], -1.0));
    let prob = ConvexLogProblem {
        num_vars: n + 1,
        objective: LseForm::affine(&[(n, 1.0)], 0.0),
        inequalities,
        equalities: p.equalities.clone(),
    };
    (prob, worst + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Outcome {
    /// Duality gap below tolerance.
    Done,
    /// Phase-1 early exit.
    Exit,
    /// Line search could not make progress after the last full stage.
    Stalled,
    Cap,
    Unbounded,
}

struct RunResult {
    y: Vec<f64>,
    nu: Vec<f64>,
    t: f64,
    status: Outcome,
    steps: usize,
    trace: Vec<StageTrace>,
}

enum Center {
    Centered,
    Stalled,
    Exit,
    Cap,
    Unbounded,
}

struct Barrier<'a> {
    prob: &'a ConvexLogProblem,
    settings: &'a SolverSettings,
    kkt: Option<KktSystem>,
    grad: Vec<f64>,
    hess: Vec<f64>,
}

impl<'a> Barrier<'a> {
    fn new(prob: &'a ConvexLogProblem, settings: &'a SolverSettings) -> Self {
        let kmax = std::iter::once(&prob.objective)
            .chain(&prob.inequalities)
            .map(|f| f.vars().len())
            .max()
            .unwrap_or(0);
        Self {
            prob,
            settings,
            kkt: None,
            grad: vec![0.0; kmax],
            hess: vec![0.0; kmax * kmax],
        }
    }

    fn forms(&self) -> impl Iterator<Item = &'a LseForm> {
        std::iter::once(&self.prob.objective).chain(&self.prob.inequalities)
    }

    fn system(&mut self) -> &mut KktSystem {
        if self.kkt.is_none() {
            let vars: Vec<&[usize]> = self.forms().map(|f| f.vars()).collect();
            let sys = KktSystem::new(self.prob.num_vars, &vars, &self.prob.equalities)
                .expect("KKT pattern is structurally valid");
            self.kkt = Some(sys);
        }
        self.kkt.as_mut().expect("initialized")
    }

    /// `t F0(y) - sum log(-F_i(y))` and the sum of the magnitudes of its
    /// parts (the scale its rounding error is relative to), or `None` outside
    /// the domain.
    fn phi(&self, y: &[f64], t: f64) -> Option<(f64, f64)> {
        let mut v = t * self.prob.objective.value(y);
        let mut scale = v.abs();
        for f in &self.prob.inequalities {
            let fi = f.value(y);
            if !(fi < 0.0) {
                return None;
            }
            let b = (-fi).ln();
            v -= b;
            scale += b.abs();
        }
        v.is_finite().then_some((v, scale))
    }

    fn slacks(&self, y: &[f64]) -> Vec<f64> {
        self.prob.inequalities.iter().map(|f| -f.value(y)).collect()
    }

    fn keeps_clear(&self, trial: &[f64], slacks: &[f64]) -> bool {
        self.prob
            .inequalities
            .iter()
            .zip(slacks)
            .all(|(f, &s)| -f.value(trial) >= BOUNDARY_FRACTION * s)
    }

    fn gradient(&mut self, y: &[f64], t: f64, out: &mut [f64]) -> bool {
        out.fill(0.0);
        let forms: Vec<&LseForm> = self.forms().collect();
        for (idx, f) in forms.into_iter().enumerate() {
            let k = f.vars().len();
            let v = f.eval_local(y, &mut self.grad, None);
            let scale = if idx == 0 {
                t
            } else {
                if !(v < 0.0) {
                    return false;
                }
                1.0 / -v
            };
            for (j, &var) in f.vars().iter().enumerate().take(k) {
                out[var] += scale * self.grad[j];
            }
        }
        out.iter().all(|g| g.is_finite())
    }

    /// Fills the KKT Hessian block and the barrier gradient at `y`.
    fn assemble(&mut self, y: &[f64], t: f64, g: &mut [f64]) -> bool {
        g.fill(0.0);
        let forms: Vec<&LseForm> = self.forms().collect();
        let mut grad = std::mem::take(&mut self.grad);
        let mut hess = std::mem::take(&mut self.hess);
        let sys = self.system();
        sys.reset();
        let mut ok = true;
        for (idx, f) in forms.into_iter().enumerate() {
            let k = f.vars().len();
            let affine = f.is_affine();
            let v = f.eval_local(y, &mut grad, if affine { None } else { Some(&mut hess) });
            let (sh, sg, sgrad) = if idx == 0 {
                (t, 0.0, t)
            } else {
                if !(v < 0.0) {
                    ok = false;
                    break;
                }
                (1.0 / -v, 1.0 / (v * v), 1.0 / -v)
            };
            if affine {
                if sg != 0.0 {
                    sys.add_outer(idx, &grad[..k], sg);
                }
            } else {
                sys.add_form(idx, &hess[..k * k], sh, &grad[..k], sg);
            }
            for (j, &var) in f.vars().iter().enumerate() {
                g[var] += sgrad * grad[j];
            }
        }
        self.grad = grad;
        self.hess = hess;
        ok && g.iter().all(|v| v.is_finite())
    }

    fn residual_norm(&mut self, y: &[f64], nu: &[f64], t: f64, scratch: &mut [f64]) -> Option<f64> {
        if !self.gradient(y, t, scratch) {
            return None;
        }
        let mut sq = 0.0;
        for (r, row) in self.prob.equalities.iter().enumerate() {
            for &(j, a) in &row.coeffs {
                scratch[j] += a * nu[r];
            }
            let rp = row.residual(y);
            sq += rp * rp;
        }
        sq += scratch.iter().map(|v| v * v).sum::<f64>();
        Some(sq.sqrt())
    }

    fn run(&mut self, mut y: Vec<f64>, phase1: bool) -> RunResult {
        let m = self.prob.inequalities.len();
        let mut nu = vec![0.0; self.prob.equalities.len()];
        let mut t = self.settings.initial_t;
        let mut trace = Vec::new();
        let mut steps = 0;
        let mut status = Outcome::Cap;
        for _ in 0..self.settings.max_stages {
            let mut stage = StageTrace {
                phase1,
                t,
                decrements: Vec::new(),
                objective: f64::NAN,
            };
            let c = self.center(&mut y, &mut nu, t, &mut stage, phase1);
            steps += stage.decrements.len();
            stage.objective = self.prob.objective.value(&y);
            trace.push(stage);
            match c {
                Center::Centered | Center::Stalled => {
                    let stalled = matches!(c, Center::Stalled);
                    if m == 0 || (m as f64) / t < self.settings.primal_tolerance {
                        status = Outcome::Done;
                        break;
                    }
                    if stalled && (m as f64) / t < 1e3 * self.settings.primal_tolerance {
                        status = Outcome::Stalled;
                        break;
                    }
                    t *= self.settings.barrier_multiplier;
                }
                Center::Exit => {
                    status = Outcome::Exit;
                    break;
                }
                Center::Cap => {
                    status = Outcome::Cap;
                    break;
                }
                Center::Unbounded => {
                    status = Outcome::Unbounded;
                    break;
                }
            }
        }
        RunResult {
            y,
            nu,
            t,
            status,
            steps,
            trace,
        }
    }

    fn center(&mut self, y: &mut Vec<f64>, nu: &mut Vec<f64>, t: f64, stage: &mut StageTrace, phase1: bool) -> Center {
        let n = self.prob.num_vars;
        let p = self.prob.equalities.len();
        let s = self.settings;
        let mut g = vec![0.0; n];
        let mut scratch = vec![0.0; n];
        let mut hd = vec![0.0; n];
        for _ in 0..s.max_newton_iterations {
            if !self.assemble(y, t, &mut g) {
                return Center::Stalled;
            }
            let rp: Vec<f64> = self.prob.equalities.iter().map(|r| r.residual(y)).collect();
            let rp_inf = rp.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let feasible = rp_inf <= s.equality_tolerance;
            let mut rhs: Vec<f64> = g.iter().map(|v| -v).chain(rp.iter().map(|v| -v)).collect();
            let mut reg = s.regularization;
            let mut solved = false;
            for _ in 0..4 {
                let mut trial = rhs.clone();
                if self.system().factor_solve(reg, 0.0, &mut trial) {
                    rhs = trial;
                    solved = true;
                    break;
                }
                reg = (reg * 1e3).max(1e-12);
            }
            if !solved {
                return Center::Stalled;
            }
            let dy = &rhs[..n];
            let w = &rhs[n..n + p];
            // dy' (H + reg) dy; the regularized form keeps flat directions
            // from looking centered.
            self.system().hessian_apply(dy, &mut hd);
            let lam2 = dy.iter().zip(&hd).map(|(a, b)| a * b).sum::<f64>().max(0.0)
                + reg * dy.iter().map(|v| v * v).sum::<f64>();
            stage.decrements.push(lam2.sqrt());
            if feasible && (lam2 / 2.0 <= s.newton_tolerance || at_noise_floor(&stage.decrements)) {
                nu.copy_from_slice(w);
                return Center::Centered;
            }

            let mut step = 1.0;
            let mut trial = vec![0.0; n];
            let slacks = self.slacks(y);
            let accepted = if feasible {
                let slope: f64 = g.iter().zip(dy).map(|(a, b)| a * b).sum();
                if !(slope < 0.0) {
                    nu.copy_from_slice(w);
                    return Center::Stalled;
                }
                let (phi0, scale) = self.phi(y, t).expect("iterate stays in the domain");
                let noise = 64.0 * f64::EPSILON * scale;
                loop {
                    for j in 0..n {
                        trial[j] = y[j] + step * dy[j];
                    }
                    if !self.keeps_clear(&trial, &slacks) {
                        step *= s.backtrack;
                        if step < MIN_STEP {
                            break false;
                        }
                        continue;
                    }
                    if let Some((v, _)) = self.phi(&trial, t) {
                        if v <= phi0 + s.armijo * step * slope {
                            break true;
                        }
                        // Near the center the predicted decrease can sink below
                        // the rounding level of the barrier value; fall back to
                        // the directional derivative, which stays informative.
                        if (v - phi0).abs() <= noise
                            && self.gradient(&trial, t, &mut scratch)
                            && scratch.iter().zip(dy).map(|(a, b)| a * b).sum::<f64>().abs() <= 0.5 * -slope
                        {
                            break true;
                        }
                    }
                    step *= s.backtrack;
                    if step < MIN_STEP {
                        break false;
                    }
                }
            } else {
                let r0 = self
                    .residual_norm(y, nu, t, &mut scratch)
                    .expect("iterate stays in the domain");
                let dnu: Vec<f64> = w.iter().zip(nu.iter()).map(|(a, b)| a - b).collect();
                let mut nu_trial = nu.clone();
                loop {
                    for j in 0..n {
                        trial[j] = y[j] + step * dy[j];
                    }
                    for r in 0..p {
                        nu_trial[r] = nu[r] + step * dnu[r];
                    }
                    if !self.keeps_clear(&trial, &slacks) {
                        step *= s.backtrack;
                        if step < MIN_STEP {
                            break false;
                        }
                        continue;
                    }
                    if let Some(r1) = self.residual_norm(&trial, &nu_trial, t, &mut scratch) {
                        if r1 <= (1.0 - s.armijo * step) * r0 {
                            nu.copy_from_slice(&nu_trial);
                            break true;
                        }
                    }
                    step *= s.backtrack;
                    if step < MIN_STEP {
                        break false;
                    }
                }
            };
            if !accepted {
                if feasible {
                    nu.copy_from_slice(w);
                }
                return Center::Stalled;
            }
            if feasible {
                nu.copy_from_slice(w);
            }
            if trial == *y {
                // the step is below floating-point resolution
                return Center::Stalled;
            }
            y.copy_from_slice(&trial);
            if y.iter().any(|v| v.abs() > UNBOUNDED_LOG) {
                return Center::Unbounded;
            }
            if phase1
                && y[n - 1] <= -PHASE1_MARGIN
                && max_residual(&self.prob.equalities, y) <= s.equality_tolerance
            {
                return Center::Exit;
            }
        }
        Center::Cap
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{Monomial, Posynomial};

    fn x(i: u32) -> VarId {
        VarId(i)
    }

    fn pow(i: u32, a: f64) -> Monomial {
        Monomial::power(x(i), a).unwrap()
    }

    fn start(v: &[f64]) -> Assignment {
        Assignment::from_values(v.to_vec()).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn bound_is_tight() {
        // minimize x s.t. 1/x <= 1
        let gp = GpProblem::new(1, pow(0, 1.0).into(), vec![pow(0, -1.0).into()], vec![]);
        let sol = solve(&gp, &start(&[3.0]), &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, GpStatus::Optimal);
        assert!(rel(sol.objective, 1.0) < 1e-6);
        assert!(rel(sol.assignment.values()[0], 1.0) < 1e-6);
    }

    #[test]
    fn box_corner() {
        // minimize 1/(xy) s.t. x/2 <= 1, y/3 <= 1
        let obj = pow(0, -1.0).mul(&pow(1, -1.0)).unwrap();
        let gp = GpProblem::new(
            2,
            obj.into(),
            vec![pow(0, 1.0).scale(0.5).unwrap().into(), pow(1, 1.0).scale(1.0 / 3.0).unwrap().into()],
            vec![],
        );
        let sol = solve(&gp, &start(&[1.0, 1.0]), &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, GpStatus::Optimal);
        assert!(rel(sol.objective, 1.0 / 6.0) < 1e-6);
        assert!(rel(sol.assignment.values()[0], 2.0) < 1e-6);
        assert!(rel(sol.assignment.values()[1], 3.0) < 1e-6);
        assert!(sol.kkt.max_residual() <= 1e-6, "{:?}", sol.kkt);
    }

    #[test]
    fn am_gm_from_infeasible_start() {
        // minimize x + y s.t. 1/(xy) <= 1, starting infeasible at (0.5, 0.5)
        let obj = Posynomial::new(vec![pow(0, 1.0), pow(1, 1.0)]).unwrap();
        let con = pow(0, -1.0).mul(&pow(1, -1.0)).unwrap();
        let gp = GpProblem::new(2, obj, vec![con.into()], vec![]);
        let sol = solve(&gp, &start(&[0.5, 0.5]), &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, GpStatus::Optimal);
        assert!(rel(sol.objective, 2.0) < 1e-6);
        assert!(sol.trace.iter().any(|s| s.phase1));
    }

    #[test]
    fn equality_constraints_are_enforced() {
        // minimize x + y s.t. x y = 4 (duplicated), start off the manifold
        let obj = Posynomial::new(vec![pow(0, 1.0), pow(1, 1.0)]).unwrap();
        let eq = pow(0, 1.0).mul(&pow(1, 1.0)).unwrap().scale(0.25).unwrap();
        let gp = GpProblem::new(2, obj, vec![], vec![eq.clone(), eq]);
        let sol = solve(&gp, &start(&[1.0, 7.0]), &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, GpStatus::Optimal);
        assert!(rel(sol.objective, 4.0) < 1e-6);
        assert_eq!(sol.equality_multipliers[1], 0.0);
    }

    #[test]
    fn contradictory_equalities_are_infeasible() {
        let gp = GpProblem::new(
            1,
            pow(0, 1.0).into(),
            vec![],
            vec![pow(0, 1.0), pow(0, 1.0).scale(0.5).unwrap()],
        );
        let sol = solve(&gp, &start(&[1.0]), &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, GpStatus::Infeasible);
    }

    #[test]
    fn empty_interior_is_infeasible() {
        // x <= 1/2 and 1/x <= 1 cannot both hold
        let gp = GpProblem::new(
            1,
            pow(0, 1.0).into(),
            vec![pow(0, 1.0).scale(2.0).unwrap().into(), pow(0, -1.0).into()],
            vec![],
        );
        let sol = solve(&gp, &start(&[1.0]), &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, GpStatus::Infeasible);
    }

    #[test]
    fn unconstrained_monomial_is_unbounded() {
        let gp = GpProblem::new(1, pow(0, 1.0).into(), vec![], vec![]);
        let sol = solve(&gp, &start(&[1.0]), &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, GpStatus::Unbounded);
        assert!(sol.kkt.unbounded);
    }

    #[test]
    fn start_must_be_bound() {
        let gp = GpProblem::new(1, pow(0, 1.0).into(), vec![pow(0, -1.0).into()], vec![]);
        assert!(matches!(
            solve(&gp, &Assignment::new(1), &SolverSettings::default()),
            Err(GpError::Start(_))
        ));
    }

    #[test]
    fn settings_are_validated() {
        let s = SolverSettings {
            primal_tolerance: 2.0,
            ..SolverSettings::default()
        };
        assert!(s.validate().is_err());
        assert!(SolverSettings::default().validate().is_ok());
    }

    #[test]
    fn identical_inputs_give_identical_iterates() {
        let obj = Posynomial::new(vec![pow(0, 1.0), pow(1, 2.0), pow(0, -1.0).mul(&pow(1, -0.5)).unwrap()]).unwrap();
        let con = Posynomial::new(vec![pow(0, 1.0).scale(0.3).unwrap(), pow(1, -1.0).scale(0.2).unwrap()]).unwrap();
        let gp = GpProblem::new(2, obj, vec![con], vec![]);
        let a = solve(&gp, &start(&[1.0, 1.0]), &SolverSettings::default()).unwrap();
        let b = solve(&gp, &start(&[1.0, 1.0]), &SolverSettings::default()).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.assignment.values(), b.assignment.values());
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    }

    #[test]
    fn newton_decrement_decreases_within_each_stage() {
        let p = |i, a| pow(i, a);
        let problems = vec![
            GpProblem::new(1, p(0, 1.0).into(), vec![p(0, -1.0).into()], vec![]),
            GpProblem::new(
                2,
                p(0, -1.0).mul(&p(1, -1.0)).unwrap().into(),
                vec![p(0, 1.0).scale(0.5).unwrap().into(), p(1, 1.0).scale(1.0 / 3.0).unwrap().into()],
                vec![],
            ),
            GpProblem::new(
                2,
                Posynomial::new(vec![p(0, 1.0), p(1, 1.0)]).unwrap(),
                vec![p(0, -1.0).mul(&p(1, -1.0)).unwrap().into()],
                vec![],
            ),
        ];
        for gp in problems {
            let n = gp.num_vars;
            let sol = solve(&gp, &start(&vec![2.0; n]), &SolverSettings::default()).unwrap();
            for stage in sol.trace.iter().filter(|s| !s.phase1) {
                for w in stage.decrements.windows(2) {
                    assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-12, "{:?}", stage.decrements);
                }
            }
        }
    }

    #[test]
    fn barrier_objective_does_not_increase_across_stages() {
        let obj = Posynomial::new(vec![pow(0, 1.0), pow(1, 1.0)]).unwrap();
        let con = pow(0, -1.0).mul(&pow(1, -1.0)).unwrap();
        let gp = GpProblem::new(2, obj, vec![con.into(), pow(0, 1.0).scale(0.1).unwrap().into()], vec![]);
        let sol = solve(&gp, &start(&[2.0, 2.0]), &SolverSettings::default()).unwrap();
        let phase2: Vec<f64> = sol.trace.iter().filter(|s| !s.phase1).map(|s| s.objective).collect();
        assert!(phase2.len() > 3);
        for w in phase2.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{phase2:?}");
        }
    }
}
