//! Team state, model coefficients and one synchronous step of the coupled
//! appraisal / expertise dynamics.
//!
//! Row `i` of the appraisal matrix is agent `i`'s split of the task across the
//! team. Each step moves that row toward the team's normalized expertise
//! profile (weight `lambda[i]`) while agent `i` closes a `learning[i]` share of
//! the gap between its own expertise and the appraisal-weighted team average,
//! whenever that average is higher.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::serde_mat;

/// Tolerance on appraisal row sums accepted by [`validate_initial`].
pub const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid team: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("contract violation: {0}")]
    Contract(String),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// One broken precondition found by [`validate_initial`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    TooFewAgents { n: usize },
    Dimension { what: &'static str, expected: usize, found: usize },
    ExpertiseOutOfRange { agent: usize, value: f64 },
    NegativeAppraisal { row: usize, col: usize, value: f64 },
    RowNotStochastic { row: usize, sum: f64 },
    LambdaOutOfRange { agent: usize, value: f64 },
    LearningOutOfRange { agent: usize, value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewAgents { n } => write!(f, "team has {n} agents, at least 2 required"),
            Violation::Dimension { what, expected, found } => {
                write!(f, "{what} has length {found}, expected {expected}")
            }
            Violation::ExpertiseOutOfRange { agent, value } => {
                write!(f, "expertise not in (0,1]: agent {agent} has {value}")
            }
            Violation::NegativeAppraisal { row, col, value } => {
                write!(f, "appraisal entry ({row},{col}) = {value} is not >= 0")
            }
            Violation::RowNotStochastic { row, sum } => {
                write!(f, "row not stochastic: row {row} sums to {sum}")
            }
            Violation::LambdaOutOfRange { agent, value } => {
                write!(f, "lambda not in [0,1]: agent {agent} has {value}")
            }
            Violation::LearningOutOfRange { agent, value } => {
                write!(f, "learning not in (0,1]: agent {agent} has {value}")
            }
        }
    }
}

/// Per-agent coefficients: `lambda` is the diagonal of the anchoring matrix,
/// `learning` the diagonal of the learning-rate matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub lambda: Vec<f64>,
    pub learning: Vec<f64>,
}

impl ModelParams {
    pub fn new(lambda: Vec<f64>, learning: Vec<f64>) -> Self {
        ModelParams { lambda, learning }
    }

    /// Same `lambda` and `learning` for every agent.
    pub fn uniform(n: usize, lambda: f64, learning: f64) -> Self {
        ModelParams { lambda: vec![lambda; n], learning: vec![learning; n] }
    }

    pub fn n_agents(&self) -> usize {
        self.lambda.len()
    }

    fn violations(&self, out: &mut Vec<Violation>) {
        for (agent, &value) in self.lambda.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                out.push(Violation::LambdaOutOfRange { agent, value });
            }
        }
        for (agent, &value) in self.learning.iter().enumerate() {
            if !(value > 0.0 && value <= 1.0) {
                out.push(Violation::LearningOutOfRange { agent, value });
            }
        }
    }
}

/// Full dynamical state at time `time`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamState {
    pub time: u64,
    #[serde(with = "serde_mat::matrix")]
    pub appraisal: DMatrix<f64>,
    #[serde(with = "serde_mat::vector")]
    pub expertise: DVector<f64>,
}

impl TeamState {
    /// A state at `t = 0`.
    pub fn new(appraisal: DMatrix<f64>, expertise: DVector<f64>) -> Self {
        TeamState { time: 0, appraisal, expertise }
    }

    /// The uniform-appraisal, constant-expertise fixed point.
    pub fn equilibrium(n: usize, alpha: f64) -> Self {
        TeamState::new(
            DMatrix::from_element(n, n, 1.0 / n as f64),
            DVector::from_element(n, alpha),
        )
    }

    pub fn n_agents(&self) -> usize {
        self.expertise.len()
    }

    /// Largest expertise in the team.
    pub fn max_expertise(&self) -> f64 {
        self.expertise.max()
    }
}

/// Diagnostic decomposition of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDelta {
    pub appraisal_change: DMatrix<f64>,
    pub expertise_change: DVector<f64>,
    /// Agents whose expertise strictly increased.
    pub active_agents: BTreeSet<usize>,
}

impl StepDelta {
    pub fn max_appraisal_change(&self) -> f64 {
        self.appraisal_change.amax()
    }

    pub fn max_expertise_change(&self) -> f64 {
        self.expertise_change.amax()
    }
}

/// Checks every precondition of the dynamics. An empty result means the pair
/// is admissible.
pub fn validate_initial(state: &TeamState, params: &ModelParams) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = state.expertise.len();
    if n < 2 {
        out.push(Violation::TooFewAgents { n });
    }
    let (rows, cols) = state.appraisal.shape();
    if rows != n {
        out.push(Violation::Dimension { what: "appraisal rows", expected: n, found: rows });
    }
    if cols != n {
        out.push(Violation::Dimension { what: "appraisal columns", expected: n, found: cols });
    }
    if params.lambda.len() != n {
        out.push(Violation::Dimension { what: "lambda", expected: n, found: params.lambda.len() });
    }
    if params.learning.len() != n {
        out.push(Violation::Dimension {
            what: "learning",
            expected: n,
            found: params.learning.len(),
        });
    }

    for (agent, &value) in state.expertise.iter().enumerate() {
        if !(value > 0.0 && value <= 1.0) {
            out.push(Violation::ExpertiseOutOfRange { agent, value });
        }
    }
    for row in 0..rows {
        let mut sum = 0.0;
        for col in 0..cols {
            let value = state.appraisal[(row, col)];
            if !(value >= 0.0) {
                out.push(Violation::NegativeAppraisal { row, col, value });
            }
            sum += value;
        }
        if !((sum - 1.0).abs() <= ROW_SUM_TOL) {
            out.push(Violation::RowNotStochastic { row, sum });
        }
    }
    params.violations(&mut out);
    out
}

fn check_shapes(state: &TeamState, params: &ModelParams) -> Result<usize, ModelError> {
    let n = state.expertise.len();
    if state.appraisal.shape() != (n, n) {
        return Err(ModelError::Dimension(format!(
            "appraisal is {:?}, expertise has {n} entries",
            state.appraisal.shape()
        )));
    }
    if params.lambda.len() != n || params.learning.len() != n {
        return Err(ModelError::Dimension(format!(
            "params sized ({}, {}), team has {n} agents",
            params.lambda.len(),
            params.learning.len()
        )));
    }
    Ok(n)
}

/// `u_j = y_j / ||y||_1`.
pub fn normalized_expertise(y: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
    if y.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(ModelError::Contract("expertise must be strictly positive".into()));
    }
    let total: f64 = y.iter().sum();
    Ok(y / total)
}

/// Next appraisal matrix, `(I - Λ) M + Λ 1 yᵀ / ||y||_1`, from time-t values.
pub fn appraisal_step(state: &TeamState, params: &ModelParams) -> Result<DMatrix<f64>, ModelError> {
    let n = check_shapes(state, params)?;
    let share = normalized_expertise(&state.expertise)?;
    let m = &state.appraisal;
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let lambda = params.lambda[i];
        (1.0 - lambda) * m[(i, j)] + lambda * share[j]
    }))
}

/// Next expertise vector, `y + L max{M y - y, 0}`, from time-t values.
pub fn expertise_step(state: &TeamState, params: &ModelParams) -> Result<DVector<f64>, ModelError> {
    let n = check_shapes(state, params)?;
    let m = &state.appraisal;
    let y = &state.expertise;
    Ok(DVector::from_fn(n, |i, _| {
        let own = y[i];
        // (M y)_i - y_i, accumulated as sum_k m_ik (y_k - y_i) since the row sums
        // to one; the best agent then sees a gap that is never positive.
        let gap: f64 = (0..n).map(|k| m[(i, k)] * (y[k] - own)).sum();
        own + params.learning[i] * gap.max(0.0)
    }))
}

/// Advances the team one step. Both updates read the time-t state.
pub fn step(state: &TeamState, params: &ModelParams) -> Result<(TeamState, StepDelta), ModelError> {
    let appraisal = appraisal_step(state, params)?;
    let expertise = expertise_step(state, params)?;
    let active_agents = expertise
        .iter()
        .zip(state.expertise.iter())
        .enumerate()
        .filter(|(_, (new, old))| new > old)
        .map(|(i, _)| i)
        .collect();
    let delta = StepDelta {
        appraisal_change: &appraisal - &state.appraisal,
        expertise_change: &expertise - &state.expertise,
        active_agents,
    };
    let next = TeamState { time: state.time + 1, appraisal, expertise };
    Ok((next, delta))
}
