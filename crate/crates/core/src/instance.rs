//! Instance files (`decept-instance/1`, TOML).
//!
//! An instance is either a street grid or an explicit transition list, plus
//! the adversary profile, the problem constants and optional solver
//! overrides. Unknown keys are rejected everywhere.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{AdversaryError, AdversaryProfile, RewardLaw, DEFAULT_COEFFICIENT_FLOOR};
use crate::gp::SolverSettings;
use crate::mdp::{self, ActionRow, GridSpec, InitialDistribution, MdpError, MdpModel};
use crate::scp::ScpSettings;

pub const SCHEMA: &str = "decept-instance/1";

const BUNDLED: &str = include_str!("../instances/synthetic_7x5.toml");

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    /// TOML or schema error; the message carries line and column.
    #[error("{0}")]
    Parse(String),
    #[error("{field}: {message}")]
    Field { field: String, message: String },
    #[error(transparent)]
    Model(#[from] MdpError),
    #[error(transparent)]
    Adversary(#[from] AdversaryError),
}

fn field(field: &str, message: impl Into<String>) -> InstanceError {
    InstanceError::Field {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    pub schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mdp: Option<MdpSection>,
    pub profile: ProfileSection,
    pub problem: ProblemSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scp: Option<ScpSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSettings>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub rows: usize,
    pub cols: usize,
    pub crime_counts: Vec<u32>,
    #[serde(default)]
    pub sensitive: Vec<usize>,
    pub move_success: f64,
    #[serde(default = "InitialDistribution::uniform")]
    pub initial: InitialDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpSection {
    pub states: Vec<String>,
    pub actions: Vec<String>,
    /// Crime weight per state; the reward coefficient before flooring.
    pub crime: Vec<f64>,
    #[serde(default)]
    pub sensitive: Vec<usize>,
    #[serde(default = "InitialDistribution::uniform")]
    pub initial: InitialDistribution,
    pub transitions: Vec<Transition>,
}

/// One `(state, action)` row: `successors = [[target, probability], ...]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub successors: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSection {
    pub gamma: f64,
    pub alpha: f64,
    pub reward_exponent: f64,
    #[serde(default = "default_floor")]
    pub coefficient_floor: f64,
}

fn default_floor() -> f64 {
    DEFAULT_COEFFICIENT_FLOOR
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub horizon: usize,
    pub budget: f64,
    pub lambda: f64,
}

impl Instance {
    /// The synthetic 7x5 street grid shipped with the library.
    pub fn bundled() -> Self {
        Self::from_toml_str(BUNDLED).expect("bundled instance is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, InstanceError> {
        let inst: Instance = toml::from_str(text).map_err(|e| InstanceError::Parse(e.to_string()))?;
        inst.check()?;
        Ok(inst)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, InstanceError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| InstanceError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            InstanceError::Parse(m) => InstanceError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("instances serialize")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), InstanceError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml_string()).map_err(|source| InstanceError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Schema checks beyond what deserialization enforces. Building the
    /// model and profile is part of the check.
    pub fn check(&self) -> Result<(), InstanceError> {
        if self.schema != SCHEMA {
            return Err(field("schema", format!("expected {SCHEMA:?}, found {:?}", self.schema)));
        }
        match (&self.grid, &self.mdp) {
            (Some(_), Some(_)) => return Err(field("grid", "give either [grid] or [mdp], not both")),
            (None, None) => return Err(field("grid", "missing [grid] or [mdp] section")),
            _ => {}
        }
        if let Some(m) = &self.mdp {
            let n = m.states.len();
            if m.crime.len() != n {
                return Err(field(
                    "mdp.crime",
                    format!("{} entries for {n} states", m.crime.len()),
                ));
            }
            for (i, t) in m.transitions.iter().enumerate() {
                if t.state >= n {
                    return Err(field(&format!("mdp.transitions[{i}].state"), format!("state {} out of range", t.state)));
                }
                if t.action >= m.actions.len() {
                    return Err(field(&format!("mdp.transitions[{i}].action"), format!("action {} out of range", t.action)));
                }
            }
        }
        let p = &self.problem;
        if !(p.budget > 0.0 && p.budget.is_finite()) {
            return Err(field("problem.budget", "must be positive"));
        }
        if !(p.lambda > 0.0 && p.lambda <= 1.0) {
            return Err(field("problem.lambda", "must lie in (0, 1]"));
        }
        if !(self.profile.coefficient_floor > 0.0) {
            return Err(field("profile.coefficient_floor", "must be positive"));
        }
        if let Some(s) = &self.scp {
            s.validate().map_err(|e| field("scp", e.to_string()))?;
        }
        if let Some(s) = &self.solver {
            s.validate().map_err(|e| field("solver", e.to_string()))?;
        }
        self.model()?;
        self.profile()?;
        Ok(())
    }

    pub fn model(&self) -> Result<MdpModel, InstanceError> {
        if let Some(g) = &self.grid {
            return Ok(mdp::build_grid(&GridSpec {
                rows: g.rows,
                cols: g.cols,
                crime_counts: g.crime_counts.clone(),
                sensitive: g.sensitive.clone(),
                move_success: g.move_success,
                initial: g.initial.clone(),
            })?);
        }
        let m = self.mdp.as_ref().ok_or_else(|| field("mdp", "missing"))?;
        let n = m.states.len();
        let initial = match &m.initial {
            InitialDistribution::Named(s) if s == "uniform" => vec![1.0 / n as f64; n],
            InitialDistribution::Named(s) => return Err(field("mdp.initial", format!("unknown distribution {s:?}"))),
            InitialDistribution::Explicit(v) => v.clone(),
        };
        let mut rows: Vec<Vec<ActionRow>> = vec![Vec::new(); n];
        for t in &m.transitions {
            rows[t.state].push(ActionRow {
                action: t.action,
                successors: t.successors.clone(),
            });
        }
        for r in &mut rows {
            r.sort_by_key(|row| row.action);
        }
        let model = MdpModel::from_parts(m.states.clone(), m.actions.clone(), rows, initial, &m.sensitive);
        let report = mdp::validate(&model);
        if !report.is_valid() {
            return Err(MdpError::Invalid(report).into());
        }
        Ok(model)
    }

    /// Crime weight per state, in state order.
    pub fn crime(&self) -> Vec<f64> {
        match (&self.grid, &self.mdp) {
            (Some(g), _) => g.crime_counts.iter().map(|&c| c as f64).collect(),
            (_, Some(m)) => m.crime.clone(),
            _ => Vec::new(),
        }
    }

    pub fn profile(&self) -> Result<AdversaryProfile, InstanceError> {
        let p = &self.profile;
        let law = RewardLaw::from_counts(&self.crime(), p.reward_exponent, p.coefficient_floor);
        Ok(AdversaryProfile::new(p.gamma, p.alpha, law)?)
    }

    pub fn scp_settings(&self) -> ScpSettings {
        self.scp.clone().unwrap_or_default()
    }

    pub fn solver_settings(&self) -> SolverSettings {
        self.solver.clone().unwrap_or_default()
    }
}
