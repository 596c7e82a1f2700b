//! Browser demo: three small interactive views over the core library.
//!
//! Each export takes plain numbers and returns a JSON string, so the page
//! needs nothing beyond the generated bindings. The logic lives in the
//! native functions below, which the tests exercise without a browser.

use decept_core::adversary::{
    derive_policy, expected_immediate_reward, perceived_expected_reward, two_branch, weight_probability,
    AdversaryProfile, RewardLaw,
};
use decept_core::evaluator::{expected_cost, reach_probability};
use decept_core::gp::SolverSettings;
use decept_core::mdp::{build_grid, GridSpec, InitialDistribution};
use decept_core::scp::{self, ScpSettings};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Curve {
    p: Vec<f64>,
    w: Vec<f64>,
}

pub fn weighting_curve_json(gamma: f64, points: usize) -> Result<String, String> {
    let points = points.clamp(2, 2001);
    AdversaryProfile::new(gamma, 1.0, RewardLaw::from_counts(&[1.0], 1.0, 1e-3)).map_err(|e| e.to_string())?;
    let p: Vec<f64> = (0..points).map(|i| i as f64 / (points - 1) as f64).collect();
    let w = p
        .iter()
        .map(|&x| weight_probability(x, gamma))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    Ok(serde_json::to_string(&Curve { p, w }).expect("serializes"))
}

#[derive(Serialize)]
struct Branches {
    /// Objective expected rewards of actions a and b at s0.
    expected: [f64; 2],
    /// What the adversary perceives.
    perceived: [f64; 2],
    /// Resulting choice probabilities.
    policy: [f64; 2],
    reversal: bool,
}

pub fn two_branch_json(u: [f64; 4], gamma: f64, alpha: f64) -> Result<String, String> {
    let model = two_branch::model();
    let alloc = two_branch::with_successors(u).map_err(|e| e.to_string())?;
    let profile = AdversaryProfile::new(gamma, alpha, RewardLaw::from_counts(&[1.0; 5], 1.0, 1e-3))
        .map_err(|e| e.to_string())?;
    let rewards = alloc.rewards(&profile.reward);
    let pair = |f: &dyn Fn(usize) -> Result<f64, String>| -> Result<[f64; 2], String> { Ok([f(0)?, f(1)?]) };
    let expected = pair(&|a| expected_immediate_reward(&model, &rewards, 0, a).map_err(|e| e.to_string()))?;
    let perceived =
        pair(&|a| perceived_expected_reward(&model, &alloc, &profile, 0, a).map_err(|e| e.to_string()))?;
    let policy = derive_policy(&model, &alloc, &profile).map_err(|e| e.to_string())?;
    let out = Branches {
        expected,
        perceived,
        policy: [policy.prob(0, 0), policy.prob(0, 1)],
        reversal: (expected[0] < expected[1]) != (perceived[0] < perceived[1]),
    };
    Ok(serde_json::to_string(&out).expect("serializes"))
}

#[derive(Serialize)]
struct GridSolve {
    rows: usize,
    cols: usize,
    utilities: Vec<f64>,
    log10: Vec<f64>,
    sensitive: Vec<usize>,
    q: f64,
    reach: f64,
    uniform_q: f64,
    uniform_reach: f64,
    iterations: usize,
    converged: bool,
}

/// A small grid solve. Crime counts are supplied row by row from the bottom.
#[allow(clippy::too_many_arguments)]
pub fn solve_grid_json(
    rows: usize,
    cols: usize,
    crime_counts: Vec<u32>,
    sensitive: Vec<usize>,
    horizon: usize,
    budget: f64,
    lambda: f64,
    max_iterations: usize,
) -> Result<String, String> {
    if rows * cols > 16 || horizon > 8 {
        return Err("the demo is limited to 16 cells and a horizon of 8".into());
    }
    let model = build_grid(&GridSpec {
        rows,
        cols,
        crime_counts: crime_counts.clone(),
        sensitive: sensitive.clone(),
        move_success: 0.95,
        initial: InitialDistribution::uniform(),
    })
    .map_err(|e| e.to_string())?;
    let counts: Vec<f64> = crime_counts.iter().map(|&c| c as f64).collect();
    let profile = AdversaryProfile::new(0.6, 0.88, RewardLaw::from_counts(&counts, -1.0, 1e-3))
        .map_err(|e| e.to_string())?;
    let settings = ScpSettings {
        max_outer_iterations: max_iterations.max(1),
        ..ScpSettings::default()
    };
    let rep = scp::run(&model, &profile, horizon, budget, lambda, &settings, &SolverSettings::default())
        .map_err(|e| e.to_string())?;
    // The report already carries evaluator numbers; recompute the uniform
    // baseline the same way for the comparison line.
    let uniform = decept_core::adversary::Allocation::uniform(rows * cols, budget);
    let pol = derive_policy(&model, &uniform, &profile).map_err(|e| e.to_string())?;
    let uniform_q = expected_cost(&model, &pol, &uniform.rewards(&profile.reward), horizon).total;
    let uniform_reach = reach_probability(&model, &pol, horizon).total;
    let out = GridSolve {
        rows,
        cols,
        log10: rep.allocation.utilities.iter().map(|u| u.log10()).collect(),
        utilities: rep.allocation.utilities.clone(),
        sensitive,
        q: rep.q,
        reach: rep.reach,
        uniform_q,
        uniform_reach,
        iterations: rep.iterations.len(),
        converged: rep.converged,
    };
    Ok(serde_json::to_string(&out).expect("serializes"))
}

#[wasm_bindgen]
pub fn weighting_curve(gamma: f64, points: usize) -> Result<String, JsValue> {
    weighting_curve_json(gamma, points).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn two_branch(u1: f64, u2: f64, u3: f64, u4: f64, gamma: f64, alpha: f64) -> Result<String, JsValue> {
    two_branch_json([u1, u2, u3, u4], gamma, alpha).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn solve_grid(
    rows: usize,
    cols: usize,
    crime_counts: Vec<u32>,
    sensitive: Vec<u32>,
    horizon: usize,
    budget: f64,
    lambda: f64,
    max_iterations: usize,
) -> Result<String, JsValue> {
    let sensitive = sensitive.into_iter().map(|s| s as usize).collect();
    solve_grid_json(rows, cols, crime_counts, sensitive, horizon, budget, lambda, max_iterations)
        .map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn curve_has_fixed_endpoints() {
        let v: Value = serde_json::from_str(&weighting_curve_json(0.6, 11).unwrap()).unwrap();
        let w = v["w"].as_array().unwrap();
        assert_eq!(w.len(), 11);
        assert_eq!(w[0].as_f64(), Some(0.0));
        assert_eq!(w[10].as_f64(), Some(1.0));
        assert!(weighting_curve_json(-1.0, 11).is_err());
    }

    #[test]
    fn default_branches_show_the_reversal() {
        let v: Value = serde_json::from_str(&two_branch_json([5.0, 2.0, 2.5, 2.5], 0.6, 0.88).unwrap()).unwrap();
        assert_eq!(v["reversal"], Value::Bool(true));
        let e = v["expected"].as_array().unwrap();
        assert!((e[0].as_f64().unwrap() - 2.3).abs() < 1e-12);
        // no distortion, no reversal
        let v: Value = serde_json::from_str(&two_branch_json([5.0, 2.0, 2.5, 2.5], 1.0, 1.0).unwrap()).unwrap();
        assert_eq!(v["reversal"], Value::Bool(false));
        assert!(two_branch_json([0.0, 2.0, 2.5, 2.5], 0.6, 0.88).is_err());
    }

    #[test]
    fn small_grid_solve_beats_uniform() {
        let text = solve_grid_json(2, 3, vec![5, 1, 9, 2, 7, 3], vec![5], 3, 60.0, 0.5, 40).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        let total: f64 = v["utilities"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
        assert!((total - 60.0).abs() < 1e-9);
        assert!(v["q"].as_f64().unwrap() <= v["uniform_q"].as_f64().unwrap() + 1e-9);
        assert!(solve_grid_json(5, 5, vec![1; 25], vec![], 3, 60.0, 0.5, 5).is_err());
    }
}
