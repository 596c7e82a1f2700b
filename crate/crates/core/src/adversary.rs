//! Prospect-theory adversary: probability weighting, reward laws and the
//! opportunistic policy that picks actions in proportion to perceived reward.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{MdpError, MdpModel, Policy};

/// Default floor for reward coefficients (states with zero recorded crime).
pub const DEFAULT_COEFFICIENT_FLOOR: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdversaryError {
    #[error("probability {0} outside [0, 1]")]
    ProbabilityDomain(f64),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("allocation has {found} entries for {expected} states")]
    AllocationLength { expected: usize, found: usize },
    #[error("utility {value} at state {state} is not strictly positive")]
    NonPositiveUtility { state: usize, value: f64 },
    #[error("perceived rewards at state {0} sum to zero")]
    ZeroDenominator(usize),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

/// Defender reward law `R(s) = c_s * U(s)^e`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardLaw {
    pub coefficients: Vec<f64>,
    pub exponent: f64,
}

impl RewardLaw {
    /// Coefficients from raw counts, each floored at `floor`.
    pub fn from_counts(counts: &[f64], exponent: f64, floor: f64) -> Self {
        Self {
            coefficients: counts.iter().map(|&c| c.max(floor)).collect(),
            exponent,
        }
    }

    pub fn reward(&self, s: usize, utility: f64) -> f64 {
        defender_reward(utility, self.coefficients[s], self.exponent)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversaryProfile {
    /// Probability-weighting exponent.
    pub gamma: f64,
    /// Perception exponent: perceived reward is `R^alpha`.
    pub alpha: f64,
    pub reward: RewardLaw,
}

impl AdversaryProfile {
    pub fn new(gamma: f64, alpha: f64, reward: RewardLaw) -> Result<Self, AdversaryError> {
        let profile = Self {
            gamma,
            alpha,
            reward,
        };
        profile.check()?;
        Ok(profile)
    }

    pub fn check(&self) -> Result<(), AdversaryError> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(AdversaryError::InvalidProfile(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(AdversaryError::InvalidProfile(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !self.reward.exponent.is_finite() {
            return Err(AdversaryError::InvalidProfile(
                "reward exponent must be finite".into(),
            ));
        }
        if let Some((s, c)) = self
            .reward
            .coefficients
            .iter()
            .enumerate()
            .find(|(_, &c)| !(c > 0.0 && c.is_finite()))
        {
            return Err(AdversaryError::InvalidProfile(format!(
                "reward coefficient {c} at state {s} is not positive"
            )));
        }
        Ok(())
    }

    pub fn perceived(&self, s: usize, utility: f64) -> f64 {
        self.reward.reward(s, utility).powf(self.alpha)
    }
}

/// Utilities per state with their budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub utilities: Vec<f64>,
    pub budget: f64,
}

impl Allocation {
    pub fn new(utilities: Vec<f64>, budget: f64) -> Result<Self, AdversaryError> {
        if let Some((state, &value)) = utilities
            .iter()
            .enumerate()
            .find(|(_, &u)| !(u > 0.0 && u.is_finite()))
        {
            return Err(AdversaryError::NonPositiveUtility { state, value });
        }
        Ok(Self { utilities, budget })
    }

    pub fn uniform(states: usize, budget: f64) -> Self {
        Self {
            utilities: vec![budget / states as f64; states],
            budget,
        }
    }

    pub fn total(&self) -> f64 {
        self.utilities.iter().sum()
    }

    pub fn rewards(&self, law: &RewardLaw) -> Vec<f64> {
        self.utilities
            .iter()
            .enumerate()
            .map(|(s, &u)| law.reward(s, u))
            .collect()
    }
}

/// `w(p) = p^g / (p^g + (1-p)^g)^(1/g)`, with `w(0) = 0` and `w(1) = 1`.
pub fn weight_probability(p: f64, gamma: f64) -> Result<f64, AdversaryError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(AdversaryError::ProbabilityDomain(p));
    }
    if p == 0.0 || p == 1.0 {
        return Ok(p);
    }
    let a = p.powf(gamma);
    let b = (1.0 - p).powf(gamma);
    Ok(a / (a + b).powf(1.0 / gamma))
}

pub fn defender_reward(utility: f64, coefficient: f64, exponent: f64) -> f64 {
    coefficient * utility.powf(exponent)
}

/// `R(s)^alpha` under the profile's reward law.
pub fn perceived_reward(state: usize, utility: f64, profile: &AdversaryProfile) -> f64 {
    profile.perceived(state, utility)
}

/// `sum_s' R(s') T(s, a, s')`.
pub fn expected_immediate_reward(
    model: &MdpModel,
    rewards: &[f64],
    s: usize,
    action: usize,
) -> Result<f64, AdversaryError> {
    Ok(model
        .row(s, action)?
        .successors
        .iter()
        .map(|&(t, p)| rewards[t] * p)
        .sum())
}

/// `sum_s' f(U(s')) w(T(s, a, s'))` over successors with positive probability.
pub fn perceived_expected_reward(
    model: &MdpModel,
    allocation: &Allocation,
    profile: &AdversaryProfile,
    s: usize,
    action: usize,
) -> Result<f64, AdversaryError> {
    let mut acc = 0.0;
    for &(t, p) in &model.row(s, action)?.successors {
        if p > 0.0 {
            acc += profile.perceived(t, allocation.utilities[t])
                * weight_probability(p, profile.gamma)?;
        }
    }
    Ok(acc)
}

/// `pi(s, a) = r_a^h(s) / sum_a' r_a'^h(s)` over the actions available at `s`.
pub fn derive_policy(
    model: &MdpModel,
    allocation: &Allocation,
    profile: &AdversaryProfile,
) -> Result<Policy, AdversaryError> {
    let n = model.num_states();
    if allocation.utilities.len() != n {
        return Err(AdversaryError::AllocationLength {
            expected: n,
            found: allocation.utilities.len(),
        });
    }
    let mut rows = Vec::with_capacity(n);
    for s in 0..n {
        let perceived: Vec<(usize, f64)> = model
            .rows(s)
            .iter()
            .map(|r| {
                perceived_expected_reward(model, allocation, profile, s, r.action)
                    .map(|v| (r.action, v))
            })
            .collect::<Result<_, _>>()?;
        let total: f64 = perceived.iter().map(|&(_, v)| v).sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(AdversaryError::ZeroDenominator(s));
        }
        rows.push(perceived.into_iter().map(|(a, v)| (a, v / total)).collect());
    }
    Ok(Policy::new(rows))
}

/// A five-state choice between a risky and a safe branch, small enough to
/// check by hand; used by tests and the browser demo.
pub mod two_branch {
    use super::*;
    use crate::mdp::ActionRow;

    /// The five-state illustration: from s0, action `a` reaches s1/s2 with
    /// 0.1/0.9 and action `b` reaches s3/s4 evenly. Other states self-loop.
    pub fn model() -> MdpModel {
        let mut rows = vec![vec![
            ActionRow { action: 0, successors: vec![(1, 0.1), (2, 0.9)] },
            ActionRow { action: 1, successors: vec![(3, 0.5), (4, 0.5)] },
        ]];
        for s in 1..5 {
            rows.push(vec![ActionRow { action: 0, successors: vec![(s, 1.0)] }]);
        }
        MdpModel::from_parts(
            (0..5).map(|i| format!("s{i}")).collect(),
            vec!["a".into(), "b".into()],
            rows,
            vec![1.0, 0.0, 0.0, 0.0, 0.0],
            &[],
        )
    }

    pub fn allocation() -> Allocation {
        with_successors([5.0, 2.0, 2.5, 2.5]).expect("positive")
    }

    /// `U(s0) = 1` and the given utilities on the four successors.
    pub fn with_successors(u: [f64; 4]) -> Result<Allocation, AdversaryError> {
        let utilities = vec![1.0, u[0], u[1], u[2], u[3]];
        let budget = utilities.iter().sum();
        Allocation::new(utilities, budget)
    }

    /// `R = U`, perceived `U^0.88`, gamma 0.6.
    pub fn profile() -> AdversaryProfile {
        AdversaryProfile::new(0.6, 0.88, RewardLaw::from_counts(&[1.0; 5], 1.0, 1e-3)).unwrap()
    }
}
