//! Randomized invariants across modules.

use decept_core::adversary::{derive_policy, AdversaryProfile, Allocation, RewardLaw};
use decept_core::algebra::{Assignment, Monomial, Posynomial, VarId};
use decept_core::evaluator::{expected_cost, reach_probability};
use decept_core::gp::{solve, GpProblem, SolverSettings};
use decept_core::instance::{GridSection, Instance};
use decept_core::mdp::{path_probability, ActionRow, MdpModel, Path, Policy};
use proptest::prelude::*;

/// Successor weights per (state, action); zero weights drop the successor,
/// and an all-zero row falls back to a self-loop.
fn model_from(n: usize, k: usize, weights: &[f64], initial: &[f64], sensitive: &[bool]) -> MdpModel {
    let mut rows = Vec::new();
    for s in 0..n {
        let mut state_rows = Vec::new();
        for a in 0..k {
            let w = &weights[(s * k + a) * n..(s * k + a + 1) * n];
            let total: f64 = w.iter().sum();
            let successors = if total > 0.0 {
                w.iter().enumerate().filter(|(_, &x)| x > 0.0).map(|(t, &x)| (t, x / total)).collect()
            } else {
                vec![(s, 1.0)]
            };
            state_rows.push(ActionRow { action: a, successors });
        }
        rows.push(state_rows);
    }
    let total: f64 = initial[..n].iter().sum();
    let sens: Vec<usize> = (0..n).filter(|&s| sensitive[s]).collect();
    MdpModel::from_parts(
        (0..n).map(|s| format!("s{s}")).collect(),
        (0..k).map(|a| format!("a{a}")).collect(),
        rows,
        initial[..n].iter().map(|v| v / total).collect(),
        &sens,
    )
}

fn policy_from(n: usize, k: usize, raw: &[f64]) -> Policy {
    Policy::new(
        (0..n)
            .map(|s| {
                let w = &raw[s * k..(s + 1) * k];
                let total: f64 = w.iter().sum();
                w.iter().enumerate().map(|(a, &x)| (a, x / total)).collect()
            })
            .collect(),
    )
}

/// Every state-action sequence of `h` steps from every state.
fn all_paths(n: usize, k: usize, h: usize) -> Vec<Path> {
    let mut out = Vec::new();
    let total = (n * k).pow(h as u32) * n;
    for mut code in 0..total {
        let mut states = vec![code % n];
        code /= n;
        let mut actions = Vec::new();
        for _ in 0..h {
            actions.push(code % k);
            code /= k;
            states.push(code % n);
            code /= n;
        }
        out.push(Path::new(states, actions).unwrap());
    }
    out
}

fn small_case() -> impl Strategy<Value = (usize, usize, usize, Vec<f64>, Vec<f64>, Vec<bool>, Vec<f64>, Vec<f64>)> {
    (1usize..=4, 1usize..=3, 0usize..=4).prop_flat_map(|(n, k, h)| {
        (
            Just(n),
            Just(k),
            Just(h),
            prop::collection::vec(prop_oneof![Just(0.0), 0.01f64..1.0], n * k * n),
            prop::collection::vec(0.05f64..1.0, n),
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec(0.01f64..1.0, n * k),
            prop::collection::vec(0.0f64..10.0, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn path_probabilities_sum_to_one((n, k, h, w, init, sens, pol, _r) in small_case()) {
        let model = model_from(n, k, &w, &init, &sens);
        let policy = policy_from(n, k, &pol);
        let total: f64 = all_paths(n, k, h).iter().map(|p| path_probability(&model, &policy, p).unwrap()).sum();
        prop_assert!((total - 1.0).abs() <= 1e-9, "sum {}", total);
    }

    #[test]
    fn recursions_match_path_sums((n, k, h, w, init, sens, pol, rewards) in small_case()) {
        let model = model_from(n, k, &w, &init, &sens);
        let policy = policy_from(n, k, &pol);
        let mut q = 0.0;
        let mut reach = 0.0;
        for path in all_paths(n, k, h) {
            let p = path_probability(&model, &policy, &path).unwrap();
            q += p * path.states.iter().map(|&s| rewards[s]).sum::<f64>();
            // first-hit: the path counts once, at its first sensitive state
            if path.states.iter().any(|&s| model.is_sensitive(s)) {
                reach += p;
            }
        }
        prop_assert!((expected_cost(&model, &policy, &rewards, h).total - q).abs() <= 1e-9);
        prop_assert!((reach_probability(&model, &policy, h).total - reach).abs() <= 1e-9);
    }

    #[test]
    fn reach_grows_with_the_horizon((n, k, _h, w, init, sens, pol, _r) in small_case()) {
        let model = model_from(n, k, &w, &init, &sens);
        let policy = policy_from(n, k, &pol);
        let mut last = 0.0;
        for h in 0..8 {
            let p = reach_probability(&model, &policy, h).total;
            prop_assert!(p >= last - 1e-12 && p <= 1.0 + 1e-12);
            last = p;
        }
    }

    #[test]
    fn derived_policies_evaluate_consistently(
        us in prop::collection::vec(0.1f64..50.0, 6),
        counts in prop::collection::vec(0u32..30, 6),
        h in 0usize..6,
    ) {
        let inst = grid_instance(2, 3, counts.clone(), h);
        let model = inst.model().unwrap();
        let c: Vec<f64> = counts.iter().map(|&x| x as f64).collect();
        let profile = AdversaryProfile::new(0.6, 0.88, RewardLaw::from_counts(&c, -1.0, 1e-3)).unwrap();
        let budget = us.iter().sum();
        let alloc = Allocation::new(us, budget).unwrap();
        let policy = derive_policy(&model, &alloc, &profile).unwrap();
        let table = expected_cost(&model, &policy, &alloc.rewards(&profile.reward), h);
        let reach = reach_probability(&model, &policy, h);
        prop_assert!(table.total.is_finite() && table.total >= 0.0);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&reach.total));
    }

    #[test]
    fn instances_round_trip(
        rows in 1usize..5,
        cols in 2usize..5,
        seed in prop::collection::vec(0u32..60, 16),
        h in 0usize..30,
        budget in 1.0f64..1000.0,
        lambda in 0.0f64..=1.0,
    ) {
        let counts = seed[..rows * cols].to_vec();
        let mut inst = grid_instance(rows, cols, counts, h);
        inst.problem.budget = budget;
        inst.problem.lambda = lambda;
        let text = inst.to_toml_string();
        let back = Instance::from_toml_str(&text).unwrap();
        prop_assert_eq!(&back, &inst);
        prop_assert_eq!(back.to_toml_string(), text);
    }

    #[test]
    fn gp_solves_are_bit_identical(
        a in 0.2f64..5.0,
        b in 0.2f64..5.0,
        c in 0.2f64..5.0,
        e in 0.5f64..2.0,
    ) {
        // minimize a/x + b y s.t. c x^e / y <= 1
        let x = VarId(0);
        let y = VarId(1);
        let obj = Posynomial::new(vec![
            Monomial::new(a, [(x, -1.0)]).unwrap(),
            Monomial::new(b, [(y, 1.0)]).unwrap(),
        ]).unwrap();
        let con = Monomial::new(c, [(x, e), (y, -1.0)]).unwrap();
        let gp = GpProblem::new(2, obj, vec![con.into()], vec![]);
        let start = Assignment::from_values(vec![1.0, 1.0]).unwrap();
        let one = solve(&gp, &start, &SolverSettings::default()).unwrap();
        let two = solve(&gp, &start, &SolverSettings::default()).unwrap();
        prop_assert_eq!(one.assignment.values(), two.assignment.values());
        prop_assert_eq!(one.trace, two.trace);
    }
}

fn grid_instance(rows: usize, cols: usize, crime_counts: Vec<u32>, horizon: usize) -> Instance {
    let mut inst = Instance::bundled();
    inst.grid = Some(GridSection {
        rows,
        cols,
        crime_counts,
        sensitive: vec![rows * cols - 1],
        ..inst.grid.clone().unwrap()
    });
    inst.problem.horizon = horizon;
    inst
}
