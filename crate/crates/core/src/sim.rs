//! Trajectories, seeded team generation, single experiments and sweeps.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asymptotics::{self, AsymptoticsError, LimitPrediction, Regime};
use crate::config::{ConfigError, ExperimentConfig, GridPoint};
use crate::graph;
use crate::model::{self, ModelError, ModelParams, StepDelta, TeamState};

/// Lower guard on generated expertise.
pub const EXPERTISE_FLOOR: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Asymptotics(#[from] AsymptoticsError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid stopping rule: {0}")]
    Stopping(String),
    #[error("{0} has {1} values for {2} agents")]
    Coefficients(&'static str, usize, usize),
    #[error("sweep needs at least one grid point and one seed")]
    EmptySweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoppingCriterion {
    pub max_steps: u64,
    pub tol: f64,
    /// Consecutive quiet steps required before declaring convergence.
    pub window: u64,
}

impl Default for StoppingCriterion {
    fn default() -> Self {
        StoppingCriterion { max_steps: 100_000, tol: 1e-10, window: 10 }
    }
}

impl StoppingCriterion {
    fn check(&self) -> Result<(), SimError> {
        if self.max_steps == 0 || self.window == 0 || !(self.tol > 0.0) {
            return Err(SimError::Stopping(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Snapshot stride used when none is configured.
pub fn default_stride(n_agents: usize) -> u64 {
    if n_agents <= 50 {
        1
    } else {
        10
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub converged: bool,
    pub steps_taken: u64,
    /// Every `stride`-th state from `t = 0`, plus the final one.
    pub snapshots: Vec<TeamState>,
    pub final_state: TeamState,
}

/// Iterates the dynamics from `state0` until the stopping rule fires.
pub fn simulate(
    state0: &TeamState,
    params: &ModelParams,
    stop: &StoppingCriterion,
    stride: u64,
) -> Result<Trajectory, SimError> {
    simulate_observed(state0, params, stop, stride, |_, _| {})
}

/// Like [`simulate`], calling `observe(state, delta)` after every step with
/// the new state and the step that produced it.
pub fn simulate_observed<F>(
    state0: &TeamState,
    params: &ModelParams,
    stop: &StoppingCriterion,
    stride: u64,
    mut observe: F,
) -> Result<Trajectory, SimError>
where
    F: FnMut(&TeamState, &StepDelta),
{
    stop.check()?;
    if stride == 0 {
        return Err(SimError::Stopping("stride must be positive".into()));
    }
    let violations = model::validate_initial(state0, params);
    if !violations.is_empty() {
        return Err(ModelError::Invalid(violations).into());
    }

    let mut snapshots = vec![state0.clone()];
    let mut state = state0.clone();
    let mut quiet = 0;
    let mut steps = 0;
    let mut converged = false;
    while steps < stop.max_steps {
        let (next, delta) = model::step(&state, params)?;
        steps += 1;
        observe(&next, &delta);
        if delta.max_expertise_change() < stop.tol && delta.max_appraisal_change() < stop.tol {
            quiet += 1;
        } else {
            quiet = 0;
        }
        state = next;
        if steps % stride == 0 {
            snapshots.push(state.clone());
        }
        if quiet >= stop.window {
            converged = true;
            break;
        }
    }
    if snapshots.last().map(|s| s.time) != Some(state.time) {
        snapshots.push(state.clone());
    }
    Ok(Trajectory { converged, steps_taken: steps, snapshots, final_state: state })
}

/// How per-agent coefficients are chosen.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientSpec {
    /// Independent uniform draws on (0, 1].
    #[default]
    Uniform,
    /// Independent uniform draws on (low, 1].
    UniformAbove(f64),
    Zero,
    Constant(f64),
    Explicit(Vec<f64>),
}

impl CoefficientSpec {
    pub fn is_random(&self) -> bool {
        matches!(self, CoefficientSpec::Uniform | CoefficientSpec::UniformAbove(_))
    }

    /// Values for specs that need no randomness.
    pub fn fixed(&self, n: usize) -> Option<Vec<f64>> {
        match self {
            CoefficientSpec::Zero => Some(vec![0.0; n]),
            CoefficientSpec::Constant(c) => Some(vec![*c; n]),
            CoefficientSpec::Explicit(v) => Some(v.clone()),
            _ => None,
        }
    }

    fn draw<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        let low = match self {
            CoefficientSpec::Uniform => 0.0,
            CoefficientSpec::UniformAbove(low) => *low,
            other => return other.fixed(n).expect("deterministic spec"),
        };
        (0..n).map(|_| low + (1.0 - low) * (1.0 - rng.random::<f64>())).collect()
    }
}

/// Random row-stochastic matrix: entries uniform on [0, 1), rows normalized.
pub fn random_stochastic<R: Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let row = loop {
            let row: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let sum: f64 = row.iter().sum();
            if sum > 0.0 {
                break row.into_iter().map(|v| v / sum).collect::<Vec<_>>();
            }
        };
        for (j, v) in row.into_iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    m
}

/// Seeded team: expertise uniform on (1e-6, 1], uniform random stochastic
/// appraisals, then `lambda` and `learning` drawn in that order.
pub fn random_team(
    n: usize,
    seed: u64,
    lambda: &CoefficientSpec,
    learning: &CoefficientSpec,
) -> Result<(TeamState, ModelParams), SimError> {
    for (name, spec) in [("lambda", lambda), ("learning", learning)] {
        if let CoefficientSpec::Explicit(v) = spec {
            if v.len() != n {
                return Err(SimError::Coefficients(name, v.len(), n));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let expertise = DVector::from_fn(n, |_, _| 1.0 - rng.random::<f64>() * (1.0 - EXPERTISE_FLOOR));
    let appraisal = random_stochastic(n, &mut rng);
    let params = ModelParams::new(lambda.draw(n, &mut rng), learning.draw(n, &mut rng));
    let state = TeamState::new(appraisal, expertise);
    let violations = model::validate_initial(&state, &params);
    if !violations.is_empty() {
        return Err(ModelError::Invalid(violations).into());
    }
    Ok((state, params))
}

/// Random reducible row-stochastic matrix with the given class sizes.
///
/// Each class gets an irreducible diagonal block (a directed cycle plus random
/// extra arcs). Every later class is fed by each earlier one with probability
/// `link_prob`. Nodes are then shuffled; the returned `order[p]` is the node
/// holding construction position `p`.
pub fn random_reducible<R: Rng>(
    class_sizes: &[usize],
    link_prob: f64,
    rng: &mut R,
) -> (DMatrix<f64>, Vec<usize>) {
    let n: usize = class_sizes.iter().sum();
    let mut starts = Vec::with_capacity(class_sizes.len());
    let mut acc = 0;
    for &s in class_sizes {
        starts.push(acc);
        acc += s;
    }
    let mut raw = DMatrix::<f64>::zeros(n, n);
    for (c, (&start, &size)) in starts.iter().zip(class_sizes).enumerate() {
        for a in 0..size {
            let i = start + a;
            if size == 1 {
                raw[(i, i)] = 0.1 + rng.random::<f64>();
            } else {
                // row i listens to its cycle predecessor
                let pred = start + (a + size - 1) % size;
                raw[(i, pred)] = 0.1 + rng.random::<f64>();
                for b in 0..size {
                    if rng.random::<f64>() < 0.4 {
                        raw[(i, start + b)] += rng.random::<f64>();
                    }
                }
            }
        }
        for (&src_start, &src_size) in starts.iter().zip(class_sizes).take(c) {
            if rng.random::<f64>() < link_prob {
                let i = start + rng.random_range(0..size);
                let j = src_start + rng.random_range(0..src_size);
                raw[(i, j)] += 0.05 + rng.random::<f64>();
            }
        }
    }
    for i in 0..n {
        let sum: f64 = raw.row(i).sum();
        for j in 0..n {
            raw[(i, j)] /= sum;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut m = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            m[(order[a], order[b])] = raw[(a, b)];
        }
    }
    (m, order)
}

/// Prediction-versus-outcome residuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Residuals {
    Exact {
        /// `||y_final - predicted||_inf`
        expertise: f64,
        /// `||M_final - predicted||_inf`
        appraisal: Option<f64>,
    },
    ClassContainment {
        classes: Vec<ClassSlack>,
        /// Smallest slack over all classes; negative means a bound was crossed.
        min_slack: f64,
    },
    None,
}

impl Residuals {
    /// Single scalar for tables: the expertise residual, or the worst bound
    /// crossing (0 when every class is contained).
    pub fn headline(&self) -> Option<f64> {
        match self {
            Residuals::Exact { expertise, .. } => Some(*expertise),
            Residuals::ClassContainment { min_slack, .. } => Some((-min_slack).max(0.0)),
            Residuals::None => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSlack {
    pub class: usize,
    /// `min_i y_i - lower`
    pub lower_slack: f64,
    /// `upper - max_i y_i`
    pub upper_slack: f64,
}

pub fn residuals(prediction: &LimitPrediction, final_state: &TeamState) -> Residuals {
    let y = &final_state.expertise;
    match prediction {
        LimitPrediction::Exact { limit_appraisal, limit_expertise, .. } => Residuals::Exact {
            expertise: (y - limit_expertise).amax(),
            appraisal: limit_appraisal.as_ref().map(|m| (&final_state.appraisal - m).amax()),
        },
        LimitPrediction::ClassBounds { classes } => {
            let classes: Vec<ClassSlack> = classes
                .iter()
                .map(|c| {
                    let lo = c.members.iter().map(|&v| y[v]).fold(f64::INFINITY, f64::min);
                    let hi = c.members.iter().map(|&v| y[v]).fold(f64::NEG_INFINITY, f64::max);
                    ClassSlack { class: c.class, lower_slack: lo - c.lower, upper_slack: c.upper - hi }
                })
                .collect();
            let min_slack = classes
                .iter()
                .flat_map(|c| [c.lower_slack, c.upper_slack])
                .fold(f64::INFINITY, f64::min);
            Residuals::ClassContainment { classes, min_slack }
        }
        LimitPrediction::Unsupported { .. } => Residuals::None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub seed: Option<u64>,
    pub n_agents: usize,
    pub regime: Regime,
    /// Largest initial expertise.
    pub alpha: f64,
    pub prediction: LimitPrediction,
    pub converged: bool,
    pub steps_taken: u64,
    pub residuals: Residuals,
    pub final_state: TeamState,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub summary: ExperimentSummary,
    pub trajectory: Trajectory,
}

/// Prediction alone, without simulating.
pub fn predict_config(config: &ExperimentConfig) -> Result<(TeamState, ModelParams, LimitPrediction), SimError> {
    let (state0, params) = config.build_team()?;
    let decomp = graph::frobenius_form(&state0.appraisal);
    let prediction = asymptotics::predict_limit(&state0, &params, Some(&decomp))?;
    Ok((state0, params, prediction))
}

fn execute(config: &ExperimentConfig, stride: u64) -> Result<ExperimentOutcome, SimError> {
    let (state0, params, prediction) = predict_config(config)?;
    let trajectory = simulate(&state0, &params, &config.stopping, stride)?;
    let summary = ExperimentSummary {
        seed: config.seed,
        n_agents: state0.n_agents(),
        regime: asymptotics::classify_regime(&params),
        alpha: state0.max_expertise(),
        residuals: residuals(&prediction, &trajectory.final_state),
        prediction,
        converged: trajectory.converged,
        steps_taken: trajectory.steps_taken,
        final_state: trajectory.final_state.clone(),
        config: config.clone(),
    };
    Ok(ExperimentOutcome { summary, trajectory })
}

/// Predicts, simulates and compares one configured experiment.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome, SimError> {
    let stride = config.output.stride.unwrap_or_else(|| default_stride(config.n_agents));
    execute(config, stride)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub grid_index: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<ExperimentSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Runs every (grid point, seed) cell. Cells run in parallel and come back in
/// grid-major, seed-minor order; a failing cell records its error.
pub fn batch_sweep(base: &ExperimentConfig, grid: &[GridPoint], seeds: &[u64]) -> Result<Vec<SweepCell>, SimError> {
    if grid.is_empty() || seeds.is_empty() {
        return Err(SimError::EmptySweep);
    }
    let cells: Vec<(usize, u64)> =
        (0..grid.len()).flat_map(|g| seeds.iter().map(move |&s| (g, s))).collect();
    Ok(cells
        .par_iter()
        .map(|&(grid_index, seed)| {
            let config = base.cell(&grid[grid_index], seed);
            // endpoints only: sweeps keep summaries, not trajectories
            match execute(&config, config.stopping.max_steps) {
                Ok(outcome) => SweepCell { grid_index, seed, summary: Some(outcome.summary), error: None },
                Err(e) => SweepCell { grid_index, seed, summary: None, error: Some(e.to_string()) },
            }
        })
        .collect())
}
