//! Finite MDPs: construction, validation, grid instances and path probabilities.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Transition probabilities below this are dropped when a model is built.
pub const PRUNE_THRESHOLD: f64 = 1e-12;
/// Tolerance for row sums and the initial distribution.
pub const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MdpError {
    #[error("unknown state {0}")]
    UnknownState(usize),
    #[error("action {action} is not available at state {state}")]
    UnavailableAction { state: usize, action: usize },
    #[error("path must contain one more state than actions")]
    MalformedPath,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid model: {0}")]
    Invalid(ValidationReport),
}

/// Outcome distribution of one action at one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRow {
    pub action: usize,
    pub successors: Vec<(usize, f64)>,
}

impl ActionRow {
    pub fn probability_to(&self, target: usize) -> f64 {
        self.successors
            .iter()
            .filter(|&&(s, _)| s == target)
            .map(|&(_, p)| p)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdpModel {
    state_labels: Vec<String>,
    coordinates: Option<Vec<(usize, usize)>>,
    grid: Option<(usize, usize)>,
    actions: Vec<String>,
    rows: Vec<Vec<ActionRow>>,
    initial: Vec<f64>,
    sensitive: Vec<bool>,
}

impl MdpModel {
    /// Assembles a model without validating it; run [`validate`] before use.
    ///
    /// Sub-threshold transition probabilities are pruned and the remaining
    /// mass rescaled so the row total is unchanged.
    pub fn from_parts(
        state_labels: Vec<String>,
        actions: Vec<String>,
        rows: Vec<Vec<ActionRow>>,
        initial: Vec<f64>,
        sensitive: &[usize],
    ) -> Self {
        let n = state_labels.len();
        let rows = rows
            .into_iter()
            .map(|state_rows| state_rows.into_iter().map(prune_row).collect())
            .collect();
        let mut flags = vec![false; n];
        for &s in sensitive {
            if s < n {
                flags[s] = true;
            } else {
                // Keep the dangling id visible to `validate`.
                flags.resize(s + 1, false);
                flags[s] = true;
            }
        }
        Self {
            state_labels,
            coordinates: None,
            grid: None,
            actions,
            rows,
            initial,
            sensitive: flags,
        }
    }

    pub fn num_states(&self) -> usize {
        self.state_labels.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn action_names(&self) -> &[String] {
        &self.actions
    }

    pub fn action_name(&self, action: usize) -> &str {
        &self.actions[action]
    }

    pub fn state_label(&self, s: usize) -> &str {
        &self.state_labels[s]
    }

    pub fn state_labels(&self) -> &[String] {
        &self.state_labels
    }

    /// `(row, col)` of each state for grid models.
    pub fn coordinates(&self) -> Option<&[(usize, usize)]> {
        self.coordinates.as_deref()
    }

    /// `(rows, cols)` for grid models.
    pub fn grid_dims(&self) -> Option<(usize, usize)> {
        self.grid
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn is_sensitive(&self, s: usize) -> bool {
        self.sensitive.get(s).copied().unwrap_or(false)
    }

    pub fn sensitive_states(&self) -> Vec<usize> {
        (0..self.sensitive.len())
            .filter(|&s| self.sensitive[s])
            .collect()
    }

    /// Action rows available at `s`.
    pub fn rows(&self, s: usize) -> &[ActionRow] {
        &self.rows[s]
    }

    pub fn row(&self, s: usize, action: usize) -> Result<&ActionRow, MdpError> {
        self.rows
            .get(s)
            .ok_or(MdpError::UnknownState(s))?
            .iter()
            .find(|r| r.action == action)
            .ok_or(MdpError::UnavailableAction { state: s, action })
    }

    pub fn transition(&self, s: usize, action: usize, target: usize) -> Result<f64, MdpError> {
        Ok(self.row(s, action)?.probability_to(target))
    }

    pub fn available_actions(&self, s: usize) -> Result<Vec<usize>, MdpError> {
        Ok(self
            .rows
            .get(s)
            .ok_or(MdpError::UnknownState(s))?
            .iter()
            .map(|r| r.action)
            .collect())
    }
}

fn prune_row(mut row: ActionRow) -> ActionRow {
    let before: f64 = row.successors.iter().map(|&(_, p)| p).sum();
    let len = row.successors.len();
    row.successors.retain(|&(_, p)| !(p.abs() < PRUNE_THRESHOLD));
    if row.successors.len() != len {
        let after: f64 = row.successors.iter().map(|&(_, p)| p).sum();
        if after > 0.0 {
            for (_, p) in &mut row.successors {
                *p *= before / after;
            }
        }
    }
    row
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Finding {
    NoStates,
    NoActions { state: usize },
    UnknownAction { state: usize, action: usize },
    DuplicateAction { state: usize, action: usize },
    DanglingSuccessor { state: usize, action: usize, successor: usize },
    ProbabilityOutOfRange { state: usize, action: usize, successor: usize, p: f64 },
    RowSum { state: usize, action: usize, sum: f64 },
    InitialLength { expected: usize, found: usize },
    InitialOutOfRange { state: usize, p: f64 },
    InitialSum { sum: f64 },
    DanglingSensitive { state: usize },
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Finding::NoStates => write!(f, "model has no states"),
            Finding::NoActions { state } => write!(f, "state {state} has no available action"),
            Finding::UnknownAction { state, action } => {
                write!(f, "state {state} refers to unknown action {action}")
            }
            Finding::DuplicateAction { state, action } => {
                write!(f, "state {state} lists action {action} twice")
            }
            Finding::DanglingSuccessor { state, action, successor } => write!(
                f,
                "T({state}, {action}, ·) refers to unknown state {successor}"
            ),
            Finding::ProbabilityOutOfRange { state, action, successor, p } => {
                write!(f, "T({state}, {action}, {successor}) = {p} is outside [0, 1]")
            }
            Finding::RowSum { state, action, sum } => {
                write!(f, "T({state}, {action}, ·) sums to {sum}")
            }
            Finding::InitialLength { expected, found } => write!(
                f,
                "initial distribution has {found} entries, expected {expected}"
            ),
            Finding::InitialOutOfRange { state, p } => {
                write!(f, "initial probability of state {state} is {p}")
            }
            Finding::InitialSum { sum } => write!(f, "initial distribution sums to {sum}"),
            Finding::DanglingSensitive { state } => {
                write!(f, "sensitive state {state} does not exist")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.findings.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msgs: Vec<String> = self.findings.iter().map(|x| x.to_string()).collect();
        write!(f, "{}", msgs.join("; "))
    }
}

/// Lists every violated model invariant; empty iff the model is valid.
pub fn validate(model: &MdpModel) -> ValidationReport {
    let mut findings = Vec::new();
    let n = model.num_states();
    if n == 0 {
        findings.push(Finding::NoStates);
    }
    for (s, state_rows) in model.rows.iter().enumerate() {
        if state_rows.is_empty() {
            findings.push(Finding::NoActions { state: s });
        }
        for (i, row) in state_rows.iter().enumerate() {
            let a = row.action;
            if a >= model.num_actions() {
                findings.push(Finding::UnknownAction { state: s, action: a });
            }
            if state_rows[..i].iter().any(|r| r.action == a) {
                findings.push(Finding::DuplicateAction { state: s, action: a });
            }
            let mut sum = 0.0;
            for &(t, p) in &row.successors {
                if t >= n {
                    findings.push(Finding::DanglingSuccessor {
                        state: s,
                        action: a,
                        successor: t,
                    });
                }
                if !(0.0..=1.0).contains(&p) {
                    findings.push(Finding::ProbabilityOutOfRange {
                        state: s,
                        action: a,
                        successor: t,
                        p,
                    });
                }
                sum += p;
            }
            if (sum - 1.0).abs() > SUM_TOLERANCE {
                findings.push(Finding::RowSum { state: s, action: a, sum });
            }
        }
    }
    if model.rows.len() < n {
        for s in model.rows.len()..n {
            findings.push(Finding::NoActions { state: s });
        }
    }
    if model.initial.len() != n {
        findings.push(Finding::InitialLength {
            expected: n,
            found: model.initial.len(),
        });
    }
    for (s, &p) in model.initial.iter().enumerate() {
        if !(0.0..=1.0).contains(&p) {
            findings.push(Finding::InitialOutOfRange { state: s, p });
        }
    }
    let sum: f64 = model.initial.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        findings.push(Finding::InitialSum { sum });
    }
    for s in n..model.sensitive.len() {
        if model.sensitive[s] {
            findings.push(Finding::DanglingSensitive { state: s });
        }
    }
    ValidationReport { findings }
}

/// A memoryless stochastic policy. Rows align with the model's action rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    rows: Vec<Vec<(usize, f64)>>,
}

impl Policy {
    pub fn new(rows: Vec<Vec<(usize, f64)>>) -> Self {
        Self { rows }
    }

    /// Uniform over available actions.
    pub fn uniform(model: &MdpModel) -> Self {
        Self {
            rows: (0..model.num_states())
                .map(|s| {
                    let k = model.rows(s).len() as f64;
                    model.rows(s).iter().map(|r| (r.action, 1.0 / k)).collect()
                })
                .collect(),
        }
    }

    pub fn row(&self, s: usize) -> &[(usize, f64)] {
        &self.rows[s]
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    /// `pi(s, a)`, zero for actions outside the support.
    pub fn prob(&self, s: usize, action: usize) -> f64 {
        self.rows
            .get(s)
            .and_then(|r| r.iter().find(|&&(a, _)| a == action))
            .map(|&(_, p)| p)
            .unwrap_or(0.0)
    }

    /// Checks simplex rows supported on available actions.
    pub fn is_valid_for(&self, model: &MdpModel) -> bool {
        self.rows.len() == model.num_states()
            && self.rows.iter().enumerate().all(|(s, row)| {
                let sum: f64 = row.iter().map(|&(_, p)| p).sum();
                (sum - 1.0).abs() <= SUM_TOLERANCE
                    && row
                        .iter()
                        .all(|&(a, p)| p >= 0.0 && model.row(s, a).is_ok())
            })
    }
}

/// `s0 a0 s1 a1 ... sN`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Path {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
}

impl Path {
    pub fn new(states: Vec<usize>, actions: Vec<usize>) -> Result<Self, MdpError> {
        if states.len() != actions.len() + 1 {
            return Err(MdpError::MalformedPath);
        }
        Ok(Self { states, actions })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// `nu(s0) * prod pi(s_i, a_i) T(s_i, a_i, s_{i+1})`.
pub fn path_probability(model: &MdpModel, policy: &Policy, path: &Path) -> Result<f64, MdpError> {
    let s0 = path.states[0];
    let mut p = *model.initial.get(s0).ok_or(MdpError::UnknownState(s0))?;
    for (i, &a) in path.actions.iter().enumerate() {
        let s = path.states[i];
        let row = model.row(s, a)?;
        p *= policy.prob(s, a) * row.probability_to(path.states[i + 1]);
    }
    Ok(p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialDistribution {
    Named(String),
    Explicit(Vec<f64>),
}

impl InitialDistribution {
    pub fn uniform() -> Self {
        InitialDistribution::Named("uniform".to_string())
    }
}

/// A rectangular street grid. State `row * cols + col`, row 0 at the bottom.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub crime_counts: Vec<u32>,
    pub sensitive: Vec<usize>,
    pub move_success: f64,
    pub initial: InitialDistribution,
}

pub const GRID_ACTIONS: [&str; 4] = ["left", "right", "up", "down"];

fn neighbor(rows: usize, cols: usize, r: usize, c: usize, action: usize) -> Option<(usize, usize)> {
    match action {
        0 if c > 0 => Some((r, c - 1)),
        1 if c + 1 < cols => Some((r, c + 1)),
        2 if r + 1 < rows => Some((r + 1, c)),
        3 if r > 0 => Some((r - 1, c)),
        _ => None,
    }
}

/// Builds the grid MDP. Off-grid moves do not exist; the intended move
/// succeeds with `move_success` and the rest is split evenly over the other
/// existing neighbors.
pub fn build_grid(spec: &GridSpec) -> Result<MdpModel, MdpError> {
    let (rows, cols) = (spec.rows, spec.cols);
    if rows == 0 || cols == 0 {
        return Err(MdpError::InvalidGrid("rows and cols must be positive".into()));
    }
    let n = rows * cols;
    if n == 1 {
        return Err(MdpError::InvalidGrid(
            "a 1x1 grid has no moves; use an explicit model".into(),
        ));
    }
    if spec.crime_counts.len() != n {
        return Err(MdpError::InvalidGrid(format!(
            "rows*cols = {n} but {} crime counts given",
            spec.crime_counts.len()
        )));
    }
    if !(spec.move_success > 0.0 && spec.move_success <= 1.0) {
        return Err(MdpError::InvalidGrid(format!(
            "move_success {} outside (0, 1]",
            spec.move_success
        )));
    }
    if let Some(&bad) = spec.sensitive.iter().find(|&&s| s >= n) {
        return Err(MdpError::InvalidGrid(format!("sensitive id {bad} out of range")));
    }
    let initial = match &spec.initial {
        InitialDistribution::Named(name) if name == "uniform" => vec![1.0 / n as f64; n],
        InitialDistribution::Named(name) => {
            return Err(MdpError::InvalidGrid(format!(
                "unknown initial distribution {name:?}"
            )))
        }
        InitialDistribution::Explicit(v) if v.len() == n => v.clone(),
        InitialDistribution::Explicit(v) => {
            return Err(MdpError::InvalidGrid(format!(
                "initial distribution has {} entries, expected {n}",
                v.len()
            )))
        }
    };

    let mut all_rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut coords = Vec::with_capacity(n);
    for r in 0..rows {
        for c in 0..cols {
            labels.push(format!("({},{})", r, c));
            coords.push((r, c));
            let existing: Vec<(usize, usize)> = (0..4)
                .filter_map(|a| neighbor(rows, cols, r, c, a).map(|cell| (a, cell.0 * cols + cell.1)))
                .collect();
            let mut state_rows = Vec::new();
            for &(a, target) in &existing {
                let others: Vec<usize> = existing
                    .iter()
                    .filter(|&&(b, _)| b != a)
                    .map(|&(_, t)| t)
                    .collect();
                let successors = if others.is_empty() {
                    vec![(target, 1.0)]
                } else {
                    let slip = (1.0 - spec.move_success) / others.len() as f64;
                    std::iter::once((target, spec.move_success))
                        .chain(others.iter().map(|&t| (t, slip)))
                        .collect()
                };
                state_rows.push(ActionRow {
                    action: a,
                    successors,
                });
            }
            all_rows.push(state_rows);
        }
    }
    let mut model = MdpModel::from_parts(
        labels,
        GRID_ACTIONS.iter().map(|s| s.to_string()).collect(),
        all_rows,
        initial,
        &spec.sensitive,
    );
    model.coordinates = Some(coords);
    model.grid = Some((rows, cols));
    let report = validate(&model);
    if !report.is_valid() {
        return Err(MdpError::Invalid(report));
    }
    Ok(model)
}

pub fn available_actions(model: &MdpModel, s: usize) -> Result<Vec<usize>, MdpError> {
    model.available_actions(s)
}

#[cfg(test)]
pub(crate) mod test_models {
    use super::*;

    /// Two states; from each, "stay" keeps you with prob 0.8 and "go" moves
    /// you with prob 0.9.
    pub fn two_state() -> MdpModel {
        MdpModel::from_parts(
            vec!["s0".into(), "s1".into()],
            vec!["stay".into(), "go".into()],
            vec![
                vec![
                    ActionRow { action: 0, successors: vec![(0, 0.8), (1, 0.2)] },
                    ActionRow { action: 1, successors: vec![(1, 0.9), (0, 0.1)] },
                ],
                vec![
                    ActionRow { action: 0, successors: vec![(1, 0.8), (0, 0.2)] },
                    ActionRow { action: 1, successors: vec![(0, 0.9), (1, 0.1)] },
                ],
            ],
            vec![0.5, 0.5],
            &[],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::test_models::two_state;
    use super::*;
    use approx::assert_relative_eq;

    fn grid(rows: usize, cols: usize, success: f64) -> MdpModel {
        build_grid(&GridSpec {
            rows,
            cols,
            crime_counts: vec![1; rows * cols],
            sensitive: vec![],
            move_success: success,
            initial: InitialDistribution::uniform(),
        })
        .unwrap()
    }

    #[test]
    fn valid_model_has_empty_report() {
        assert!(validate(&two_state()).is_valid());
    }

    #[test]
    fn bad_row_sum_is_reported() {
        let mut m = two_state();
        m.rows[1][0].successors = vec![(1, 0.7), (0, 0.2)];
        let report = validate(&m);
        assert_eq!(report.findings.len(), 1);
        match &report.findings[0] {
            Finding::RowSum { state, action, sum } => {
                assert_eq!((*state, *action), (1, 0));
                assert_relative_eq!(*sum, 0.9);
            }
            other => panic!("unexpected finding {other:?}"),
        }
    }

    #[test]
    fn bad_initial_sum_is_reported() {
        let mut m = two_state();
        m.initial = vec![0.6, 0.5];
        let report = validate(&m);
        assert!(matches!(report.findings.as_slice(), [Finding::InitialSum { .. }]));
    }

    #[test]
    fn dangling_indices_are_reported() {
        let mut m = two_state();
        m.rows[0][1].successors = vec![(1, 0.9), (7, 0.1)];
        let m = MdpModel::from_parts(
            m.state_labels.clone(),
            m.actions.clone(),
            m.rows.clone(),
            m.initial.clone(),
            &[9],
        );
        let report = validate(&m);
        assert!(report
            .findings
            .iter()
            .any(|f| matches!(f, Finding::DanglingSensitive { state: 9 })));
        assert!(report.findings.iter().any(|f| matches!(
            f,
            Finding::DanglingSuccessor { state: 0, action: 1, successor: 7 }
        )));
    }

    #[test]
    fn pruning_keeps_row_total() {
        let m = MdpModel::from_parts(
            vec!["a".into(), "b".into()],
            vec!["x".into()],
            vec![
                vec![ActionRow { action: 0, successors: vec![(0, 1e-14), (1, 1.0 - 1e-14)] }],
                vec![ActionRow { action: 0, successors: vec![(1, 1.0)] }],
            ],
            vec![1.0, 0.0],
            &[],
        );
        assert_eq!(m.rows(0)[0].successors.len(), 1);
        assert!(validate(&m).is_valid());
    }

    #[test]
    fn path_probability_examples() {
        let m = two_state();
        let pi = Policy::new(vec![vec![(0, 0.5), (1, 0.5)], vec![(0, 0.5), (1, 0.5)]]);
        let p = Path::new(vec![1], vec![]).unwrap();
        assert_eq!(path_probability(&m, &pi, &p).unwrap(), 0.5);

        // nu = 0.5, pi = 0.5, T = 0.9
        let p = Path::new(vec![0, 1], vec![1]).unwrap();
        assert_relative_eq!(path_probability(&m, &pi, &p).unwrap(), 0.225, epsilon = 1e-15);

        let chain = MdpModel::from_parts(
            vec!["a".into(), "b".into()],
            vec!["x".into()],
            vec![
                vec![ActionRow { action: 0, successors: vec![(1, 1.0)] }],
                vec![ActionRow { action: 0, successors: vec![(1, 1.0)] }],
            ],
            vec![1.0, 0.0],
            &[],
        );
        let pi = Policy::uniform(&chain);
        let p = Path::new(vec![0, 1, 1, 1], vec![0, 0, 0]).unwrap();
        assert_eq!(path_probability(&chain, &pi, &p).unwrap(), 1.0);
    }

    #[test]
    fn path_with_unavailable_action_errors() {
        let m = grid(1, 2, 0.95);
        let pi = Policy::uniform(&m);
        // "left" does not exist at the left end.
        let p = Path::new(vec![0, 1], vec![0]).unwrap();
        assert_eq!(
            path_probability(&m, &pi, &p),
            Err(MdpError::UnavailableAction { state: 0, action: 0 })
        );
        assert!(Path::new(vec![0], vec![1]).is_err());
    }

    #[test]
    fn one_by_two_grid() {
        let m = grid(1, 2, 0.95);
        assert_eq!(m.available_actions(0).unwrap(), vec![1]);
        assert_eq!(m.transition(0, 1, 1).unwrap(), 1.0);
        assert!(validate(&m).is_valid());
    }

    #[test]
    fn seven_by_five_uniform_initial() {
        let m = grid(7, 5, 0.95);
        assert_eq!(m.num_states(), 35);
        for &p in m.initial() {
            assert_relative_eq!(p, 1.0 / 35.0);
        }
    }

    #[test]
    fn interior_state_slip_mass() {
        let m = grid(3, 3, 0.95);
        // State 4 is the center; "up" goes to 7.
        let row = m.row(4, 2).unwrap();
        assert_relative_eq!(row.probability_to(7), 0.95);
        for t in [3, 5, 1] {
            assert_relative_eq!(row.probability_to(t), 0.05 / 3.0, epsilon = 1e-15);
        }
        let sum: f64 = row.successors.iter().map(|&(_, p)| p).sum();
        assert_relative_eq!(sum, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn action_counts_follow_geometry() {
        let m = grid(3, 3, 0.95);
        assert_eq!(available_actions(&m, 0).unwrap().len(), 2);
        assert_eq!(available_actions(&m, 4).unwrap().len(), 4);
        assert_eq!(available_actions(&m, 1).unwrap().len(), 3);
        assert_eq!(available_actions(&m, 9), Err(MdpError::UnknownState(9)));
    }

    #[test]
    fn numbering_starts_bottom_left() {
        let m = grid(7, 5, 0.95);
        let coords = m.coordinates().unwrap();
        assert_eq!(coords[0], (0, 0));
        assert_eq!(coords[2], (0, 2));
        assert_eq!(coords[7], (1, 2));
        // "up" from state 2 lands on state 7.
        assert_relative_eq!(m.transition(2, 2, 7).unwrap(), 0.95);
    }

    #[test]
    fn grid_dimension_mismatch() {
        let err = build_grid(&GridSpec {
            rows: 2,
            cols: 2,
            crime_counts: vec![1; 3],
            sensitive: vec![],
            move_success: 0.95,
            initial: InitialDistribution::uniform(),
        });
        assert!(matches!(err, Err(MdpError::InvalidGrid(_))));
    }

    proptest::proptest! {
        #[test]
        fn grids_always_validate(rows in 1usize..8, cols in 1usize..8, success in 0.5f64..=1.0) {
            proptest::prop_assume!(rows * cols > 1);
            let m = grid(rows, cols, success);
            proptest::prop_assert!(validate(&m).is_valid());
        }
    }
}
