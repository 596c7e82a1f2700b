//! Result artifacts: JSON reports, allocation tables and heatmaps.
//!
//! Everything here is a pure function of its inputs; wall-clock timings are
//! kept out of the serialized documents so identical runs give identical
//! bytes.

use serde::Serialize;
use thiserror::Error;

use crate::adversary::{derive_policy, AdversaryError, AdversaryProfile, Allocation};
use crate::evaluator::{expected_cost, monte_carlo, reach_probability, Estimate};
use crate::mdp::MdpModel;
use crate::scp::SolveReport;

pub const REPORT_SCHEMA: &str = "decept-report/1";
pub const EVALUATION_SCHEMA: &str = "decept-evaluation/1";
pub const SIMULATION_SCHEMA: &str = "decept-simulation/1";

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("allocation line {line}: {message}")]
    Allocation { line: usize, message: String },
    #[error("allocation covers {found} states, instance has {expected}")]
    StateCount { found: usize, expected: usize },
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Independent evaluator pass over a final allocation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossCheck {
    pub q: f64,
    pub reach: f64,
    /// `|Q_report - Q_evaluator| / |Q_evaluator|`.
    pub q_relative_difference: f64,
    pub budget_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveDocument<'a> {
    pub schema: &'static str,
    pub instance: Option<&'a str>,
    #[serde(flatten)]
    pub report: &'a SolveReport,
    pub cross_check: CrossCheck,
}

pub fn cross_check(model: &MdpModel, profile: &AdversaryProfile, report: &SolveReport) -> Result<CrossCheck, ArtifactError> {
    let alloc = &report.allocation;
    let policy = derive_policy(model, alloc, profile)?;
    let q = expected_cost(model, &policy, &alloc.rewards(&profile.reward), report.horizon).total;
    let reach = reach_probability(model, &policy, report.horizon).total;
    Ok(CrossCheck {
        q,
        reach,
        q_relative_difference: (report.q - q).abs() / q.abs(),
        budget_total: alloc.total(),
    })
}

/// The `decept-report/1` JSON text for a finished run.
pub fn solve_json(
    name: Option<&str>,
    model: &MdpModel,
    profile: &AdversaryProfile,
    report: &SolveReport,
) -> Result<String, ArtifactError> {
    let doc = SolveDocument {
        schema: REPORT_SCHEMA,
        instance: name,
        report,
        cross_check: cross_check(model, profile, report)?,
    };
    Ok(serde_json::to_string_pretty(&doc).expect("reports serialize") + "\n")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateRow {
    pub state: usize,
    pub label: String,
    pub utility: f64,
    pub reward: f64,
    pub q0: f64,
    /// `P_0(s)`, the probability of reaching a sensitive state from `s`.
    pub p0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub schema: &'static str,
    pub horizon: usize,
    pub budget: f64,
    pub q: f64,
    pub reach: f64,
    pub states: Vec<StateRow>,
}

pub fn evaluate_allocation(
    model: &MdpModel,
    profile: &AdversaryProfile,
    alloc: &Allocation,
    horizon: usize,
) -> Result<Evaluation, ArtifactError> {
    let policy = derive_policy(model, alloc, profile)?;
    let rewards = alloc.rewards(&profile.reward);
    let cost = expected_cost(model, &policy, &rewards, horizon);
    let reach = reach_probability(model, &policy, horizon);
    let states = (0..model.num_states())
        .map(|s| StateRow {
            state: s,
            label: model.state_label(s).to_string(),
            utility: alloc.utilities[s],
            reward: rewards[s],
            q0: cost.q[0][s],
            p0: reach.p[0][s],
        })
        .collect();
    Ok(Evaluation {
        schema: EVALUATION_SCHEMA,
        horizon,
        budget: alloc.budget,
        q: cost.total,
        reach: reach.total,
        states,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Simulation {
    pub schema: &'static str,
    pub horizon: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub cost: Estimate,
    pub reach: Estimate,
    pub exact_q: f64,
    pub exact_reach: f64,
    /// `(estimate - exact) / stderr`; zero when the stderr is zero and the
    /// estimate is exact.
    pub cost_z: f64,
    pub reach_z: f64,
    pub first_path: Vec<usize>,
}

fn z_score(e: &Estimate, exact: f64) -> f64 {
    let d = e.mean - exact;
    if e.stderr > 0.0 {
        d / e.stderr
    } else if d.abs() <= 1e-12 * exact.abs().max(1.0) {
        0.0
    } else {
        d.signum() * f64::INFINITY
    }
}

pub fn simulate_allocation(
    model: &MdpModel,
    profile: &AdversaryProfile,
    alloc: &Allocation,
    horizon: usize,
    n_paths: usize,
    seed: u64,
) -> Result<Simulation, ArtifactError> {
    let policy = derive_policy(model, alloc, profile)?;
    let rewards = alloc.rewards(&profile.reward);
    let mc = monte_carlo(model, &policy, &rewards, horizon, n_paths, seed);
    let exact_q = expected_cost(model, &policy, &rewards, horizon).total;
    let exact_reach = reach_probability(model, &policy, horizon).total;
    Ok(Simulation {
        schema: SIMULATION_SCHEMA,
        horizon,
        n_paths,
        seed,
        cost_z: z_score(&mc.cost, exact_q),
        reach_z: z_score(&mc.reach, exact_reach),
        cost: mc.cost,
        reach: mc.reach,
        exact_q,
        exact_reach,
        first_path: mc.first_path,
    })
}

/// `state,row,col,crime,utility,reward`; `row`/`col` are empty for
/// non-grid models.
pub fn allocation_csv(model: &MdpModel, crime: &[f64], profile: &AdversaryProfile, alloc: &Allocation) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["state", "row", "col", "crime", "utility", "reward"]).expect("in-memory write");
    let coords = model.coordinates();
    for s in 0..model.num_states() {
        let (r, c) = match coords {
            Some(xy) => (xy[s].0.to_string(), xy[s].1.to_string()),
            None => (String::new(), String::new()),
        };
        let u = alloc.utilities[s];
        w.write_record([
            s.to_string(),
            r,
            c,
            crime[s].to_string(),
            u.to_string(),
            profile.reward.reward(s, u).to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

/// Reads the `utility` column of an allocation table, in state order. The
/// budget is the sum of the utilities.
pub fn parse_allocation_csv(text: &str, states: usize) -> Result<Allocation, ArtifactError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (Some(state_col), Some(util_col)) = (col("state"), col("utility")) else {
        return Err(ArtifactError::Allocation {
            line: 1,
            message: "header must name `state` and `utility` columns".into(),
        });
    };
    let mut utilities = vec![f64::NAN; states];
    let mut seen = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let bad = |message: String| ArtifactError::Allocation { line, message };
        let s: usize = rec
            .get(state_col)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| bad("state is not an integer".into()))?;
        let u: f64 = rec
            .get(util_col)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| bad("utility is not a number".into()))?;
        if s >= states {
            return Err(ArtifactError::StateCount {
                found: s + 1,
                expected: states,
            });
        }
        if !utilities[s].is_nan() {
            return Err(bad(format!("state {s} listed twice")));
        }
        if !(u > 0.0 && u.is_finite()) {
            return Err(bad(format!("utility {u} must be positive")));
        }
        utilities[s] = u;
        seen += 1;
    }
    if seen != states {
        return Err(ArtifactError::StateCount {
            found: seen,
            expected: states,
        });
    }
    let budget = utilities.iter().sum();
    Ok(Allocation::new(utilities, budget)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    Linear,
    Log10,
}

impl Transform {
    pub fn name(self) -> &'static str {
        match self {
            Transform::Linear => "linear",
            Transform::Log10 => "log10",
        }
    }
}

/// One value per grid cell, indexed by state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Heatmap {
    pub rows: usize,
    pub cols: usize,
    pub transform: Transform,
    pub values: Vec<f64>,
}

impl Heatmap {
    /// Returns `None` for non-grid models, or for a log transform of a
    /// non-positive value.
    pub fn new(model: &MdpModel, raw: &[f64], transform: Transform) -> Option<Self> {
        let (rows, cols) = model.grid_dims()?;
        let values = match transform {
            Transform::Linear => raw.to_vec(),
            Transform::Log10 => {
                if raw.iter().any(|&v| !(v > 0.0)) {
                    return None;
                }
                raw.iter().map(|v| v.log10()).collect()
            }
        };
        Some(Self {
            rows,
            cols,
            transform,
            values,
        })
    }

    /// `row,col,state,transform,value`, bottom row first.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["row", "col", "state", "transform", "value"]).expect("in-memory write");
        for r in 0..self.rows {
            for c in 0..self.cols {
                let s = r * self.cols + c;
                w.write_record([
                    r.to_string(),
                    c.to_string(),
                    s.to_string(),
                    self.transform.name().to_string(),
                    self.values[s].to_string(),
                ])
                .expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    /// Static SVG: one square per cell, row 0 drawn at the bottom, shaded
    /// white to dark red over the value range; sensitive cells outlined.
    pub fn to_svg(&self, sensitive: &[usize]) -> String {
        const CELL: usize = 60;
        let (w, h) = (self.cols * CELL, self.rows * CELL);
        let lo = self.values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        let mut out = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
        );
        for r in 0..self.rows {
            for c in 0..self.cols {
                let s = r * self.cols + c;
                let v = self.values[s];
                let k = (v - lo) / span;
                let g = (255.0 * (1.0 - k)).round() as u8;
                let red = (255.0 - 100.0 * k).round() as u8;
                let (x, y) = (c * CELL, (self.rows - 1 - r) * CELL);
                let stroke = if sensitive.contains(&s) {
                    "stroke=\"#1f4fbf\" stroke-width=\"4\""
                } else {
                    "stroke=\"#888\" stroke-width=\"1\""
                };
                let ink = if k > 0.6 { "#fff" } else { "#000" };
                out += &format!(
                    "  <rect x=\"{x}\" y=\"{y}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"rgb({red},{g},{g})\" {stroke}/>\n"
                );
                out += &format!(
                    "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" fill=\"{ink}\">{v:.2}</text>\n",
                    x + CELL / 2,
                    y + CELL / 2 + 4
                );
            }
        }
        out += "</svg>\n";
        out
    }
}
