//! Simulator and analyzer for a team whose members jointly learn a task.
//!
//! Each agent holds an appraisal row (how it would split the task across the
//! team) and an expertise level in (0, 1]. Appraisals drift toward the team's
//! normalized expertise profile at a per-agent rate; agents below their
//! appraisal-weighted team average learn toward it.
//!
//! * [`model`]: state, coefficients and the one-step update.
//! * [`graph`]: strongly connected components, Frobenius normal form and
//!   class accessibility of the appraisal graph.
//! * [`asymptotics`]: equilibrium tests and limit predictions.
//! * [`sim`]: trajectories, seeded teams, experiments and sweeps.
//! * [`config`] and [`io`]: configuration files and output formats.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod config;
pub mod graph;
pub mod io;
pub mod model;
mod serde_mat;
pub mod sim;

pub use asymptotics::{
    class_bounds, classify_regime, discounted_share_bound, discounted_share_partial_sums, is_equilibrium,
    predict_limit, ClassBound, EquilibriumReport, LimitPrediction, Regime,
};
pub use config::{load_config, ExperimentConfig};
pub use graph::{accessibility, frobenius_form, is_irreducible, strongly_connected_components, FrobeniusDecomposition};
pub use model::{appraisal_step, expertise_step, normalized_expertise, step, validate_initial, ModelParams, StepDelta, TeamState};
pub use sim::{batch_sweep, random_team, run_experiment, simulate, CoefficientSpec, StoppingCriterion, Trajectory};
