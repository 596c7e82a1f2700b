//! Exact finite-horizon evaluation of defender cost and sensitive-state
//! reachability for a fixed policy, and a seeded Monte Carlo cross-check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::mdp::{MdpModel, Policy};

/// `q[t][s]` for `t = 0..=H`, and `total = sum_s nu(s) q[0][s]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostTable {
    pub q: Vec<Vec<f64>>,
    pub total: f64,
}

impl CostTable {
    pub fn horizon(&self) -> usize {
        self.q.len() - 1
    }
}

/// `p[t][s]` for `t = 0..=H`, and `total = sum_s nu(s) p[0][s]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachTable {
    pub p: Vec<Vec<f64>>,
    pub total: f64,
}

/// One backward step of `V_t(s) = base(s) + sum_a sum_s' pi T V_{t+1}(s')`.
fn backup(model: &MdpModel, policy: &Policy, next: &[f64], s: usize) -> f64 {
    let mut acc = 0.0;
    for row in model.rows(s) {
        let pi = policy.prob(s, row.action);
        if pi == 0.0 {
            continue;
        }
        let inner: f64 = row.successors.iter().map(|&(t, p)| p * next[t]).sum();
        acc += pi * inner;
    }
    acc
}

fn weighted(initial: &[f64], values: &[f64]) -> f64 {
    initial.iter().zip(values).map(|(nu, v)| nu * v).sum()
}

/// Expected accumulated reward: `Q_H = R`, `Q_t = R + E[Q_{t+1}]`.
pub fn expected_cost(model: &MdpModel, policy: &Policy, rewards: &[f64], horizon: usize) -> CostTable {
    let n = model.num_states();
    let mut q = vec![vec![0.0; n]; horizon + 1];
    q[horizon].copy_from_slice(&rewards[..n]);
    for t in (0..horizon).rev() {
        let (head, tail) = q.split_at_mut(t + 1);
        let next = &tail[0];
        for s in 0..n {
            head[t][s] = rewards[s] + backup(model, policy, next, s);
        }
    }
    let total = weighted(model.initial(), &q[0]);
    CostTable { q, total }
}

/// Reachability of the sensitive set within the horizon, with the
/// non-sensitive terminal value set to `terminal` (0 for the true
/// probability).
pub fn reach_with_terminal(
    model: &MdpModel,
    policy: &Policy,
    horizon: usize,
    terminal: f64,
) -> ReachTable {
    let n = model.num_states();
    let mut p = vec![vec![0.0; n]; horizon + 1];
    for s in 0..n {
        p[horizon][s] = if model.is_sensitive(s) { 1.0 } else { terminal };
    }
    for t in (0..horizon).rev() {
        let (head, tail) = p.split_at_mut(t + 1);
        let next = &tail[0];
        for s in 0..n {
            head[t][s] = if model.is_sensitive(s) {
                1.0
            } else {
                backup(model, policy, next, s)
            };
        }
    }
    let total = weighted(model.initial(), &p[0]);
    ReachTable { p, total }
}

/// Probability of entering the sensitive set within `horizon` steps.
pub fn reach_probability(model: &MdpModel, policy: &Policy, horizon: usize) -> ReachTable {
    reach_with_terminal(model, policy, horizon, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub n_paths: usize,
    pub seed: u64,
    pub cost: Estimate,
    pub reach: Estimate,
    /// The first sampled trajectory (states only).
    pub first_path: Vec<usize>,
}

/// Paths per independently seeded stream. Fixed so results do not depend on
/// how streams are spread across workers.
pub const CHUNK_PATHS: usize = 4096;

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    cost_sum: f64,
    cost_sq: f64,
    hits: f64,
}

impl Moments {
    fn merge(&mut self, other: &Moments) {
        self.cost_sum += other.cost_sum;
        self.cost_sq += other.cost_sq;
        self.hits += other.hits;
    }
}

struct Sampler<'a> {
    model: &'a MdpModel,
    policy: &'a Policy,
    rewards: &'a [f64],
    horizon: usize,
}

fn pick<T: Copy>(items: impl Iterator<Item = (T, f64)>, u: f64) -> Option<T> {
    let mut acc = 0.0;
    let mut last = None;
    for (item, p) in items {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = Some(item);
        if u < acc {
            return last;
        }
    }
    // Round-off: u landed past the accumulated mass.
    last
}

impl Sampler<'_> {
    fn trajectory(&self, rng: &mut ChaCha8Rng, record: Option<&mut Vec<usize>>) -> (f64, bool) {
        let mut s = pick(self.model.initial().iter().copied().enumerate(), rng.random())
            .expect("initial distribution has positive mass");
        let mut cost = self.rewards[s];
        let mut hit = self.model.is_sensitive(s);
        let mut path = record;
        if let Some(p) = path.as_deref_mut() {
            p.push(s);
        }
        for _ in 0..self.horizon {
            let action = pick(self.policy.row(s).iter().copied(), rng.random())
                .expect("policy row has positive mass");
            let row = self.model.row(s, action).expect("policy supported on available actions");
            s = pick(row.successors.iter().copied(), rng.random())
                .expect("transition row has positive mass");
            cost += self.rewards[s];
            hit |= self.model.is_sensitive(s);
            if let Some(p) = path.as_deref_mut() {
                p.push(s);
            }
        }
        (cost, hit)
    }

    fn chunk(&self, seed: u64, index: usize, count: usize, first: Option<&mut Vec<usize>>) -> Moments {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64);
        let mut m = Moments::default();
        let mut first = first;
        for i in 0..count {
            let rec = if i == 0 { first.take() } else { None };
            let (c, h) = self.trajectory(&mut rng, rec);
            m.cost_sum += c;
            m.cost_sq += c * c;
            if h {
                m.hits += 1.0;
            }
        }
        m
    }
}

/// Seeded Monte Carlo estimate of the expected cost and the reach
/// probability, single-threaded.
pub fn monte_carlo(
    model: &MdpModel,
    policy: &Policy,
    rewards: &[f64],
    horizon: usize,
    n_paths: usize,
    seed: u64,
) -> MonteCarloReport {
    monte_carlo_parallel(model, policy, rewards, horizon, n_paths, seed, 1)
}

/// Like [`monte_carlo`], spreading the fixed chunks over `workers` threads.
/// The result is bit-identical for any worker count.
pub fn monte_carlo_parallel(
    model: &MdpModel,
    policy: &Policy,
    rewards: &[f64],
    horizon: usize,
    n_paths: usize,
    seed: u64,
    workers: usize,
) -> MonteCarloReport {
    assert!(n_paths >= 1, "need at least one path");
    let sampler = Sampler {
        model,
        policy,
        rewards,
        horizon,
    };
    let chunks: Vec<(usize, usize)> = (0..n_paths.div_ceil(CHUNK_PATHS))
        .map(|i| (i, CHUNK_PATHS.min(n_paths - i * CHUNK_PATHS)))
        .collect();
    let mut first_path = Vec::with_capacity(horizon + 1);
    let mut results = vec![Moments::default(); chunks.len()];
    results[0] = sampler.chunk(seed, 0, chunks[0].1, Some(&mut first_path));
    let workers = workers.max(1);
    if workers == 1 {
        for &(i, count) in &chunks[1..] {
            results[i] = sampler.chunk(seed, i, count, None);
        }
    } else {
        let rest = &chunks[1..];
        let per = rest.len().div_ceil(workers).max(1);
        std::thread::scope(|scope| {
            let handles: Vec<_> = rest
                .chunks(per)
                .map(|group| {
                    let sampler = &sampler;
                    scope.spawn(move || {
                        group
                            .iter()
                            .map(|&(i, count)| (i, sampler.chunk(seed, i, count, None)))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for (i, m) in h.join().expect("sampling worker panicked") {
                    results[i] = m;
                }
            }
        });
    }
    let mut total = Moments::default();
    for m in &results {
        total.merge(m);
    }
    let n = n_paths as f64;
    let cost_mean = total.cost_sum / n;
    let cost_var = if n_paths > 1 {
        ((total.cost_sq - n * cost_mean * cost_mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    let reach_mean = total.hits / n;
    let reach_var = if n_paths > 1 {
        (reach_mean * (1.0 - reach_mean) * n / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    MonteCarloReport {
        n_paths,
        seed,
        cost: Estimate {
            mean: cost_mean,
            stderr: (cost_var / n).sqrt(),
        },
        reach: Estimate {
            mean: reach_mean,
            stderr: (reach_var / n).sqrt(),
        },
        first_path,
    }
}
