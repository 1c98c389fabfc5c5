//! Experiment configuration, read from TOML.
//!
//! ```toml
//! n_agents = 15
//! seed = 7
//! lambda = "uniform"              # "zero", { constant = 0.5 }, { uniform_above = 0.05 }, { explicit = [...] }
//! learning = { constant = 0.5 }
//!
//! [stopping]
//! max_steps = 100000
//! tol = 1e-10
//! window = 10
//!
//! [output]
//! format = "csv"
//! ```
//!
//! A team comes either from `seed` or from an explicit `[initial]` block with
//! `appraisal` rows and an `expertise` vector, never both.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{self, ModelParams, TeamState, Violation};
use crate::sim::{random_team, CoefficientSpec, StoppingCriterion};

#[derive(Debug, Clone, PartialEq)]
pub struct FieldViolation {
    pub field: String,
    pub message: String,
}

impl FieldViolation {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        FieldViolation { field: field.into(), message: message.into() }
    }
}

impl fmt::Display for FieldViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot encode config: {0}")]
    Encode(#[from] toml::ser::Error),
    #[error("invalid config: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<FieldViolation>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    pub format: OutputFormat,
    /// Snapshot thinning stride; defaults by team size.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stride: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialCondition {
    pub appraisal: Vec<Vec<f64>>,
    pub expertise: Vec<f64>,
}

/// Overrides applied to the base config for one sweep cell.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridPoint {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_agents: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<CoefficientSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning: Option<CoefficientSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub seeds: Vec<u64>,
    pub grid: Vec<GridPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_agents: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub lambda: CoefficientSpec,
    #[serde(default)]
    pub learning: CoefficientSpec,
    #[serde(default)]
    pub stopping: StoppingCriterion,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialCondition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

impl ExperimentConfig {
    /// Seeded config with default coefficients and stopping rule.
    pub fn seeded(n_agents: usize, seed: u64) -> Self {
        ExperimentConfig {
            n_agents,
            seed: Some(seed),
            lambda: CoefficientSpec::default(),
            learning: CoefficientSpec::default(),
            stopping: StoppingCriterion::default(),
            output: OutputSpec::default(),
            initial: None,
            sweep: None,
        }
    }

    /// Every violated constraint, each tagged with its field path.
    pub fn validate(&self) -> Vec<FieldViolation> {
        let mut out = Vec::new();
        let n = self.n_agents;
        if n < 2 {
            out.push(FieldViolation::new("n_agents", format!("{n} < 2")));
        }
        let sweeping = self.sweep.as_ref().is_some_and(|s| !s.seeds.is_empty());
        match (&self.seed, &self.initial) {
            (Some(_), Some(_)) => out.push(FieldViolation::new(
                "seed/initial",
                "ambiguous team source: give either seed or explicit initial matrices",
            )),
            (None, None) if !sweeping => out.push(FieldViolation::new(
                "seed/initial",
                "missing team source: give either seed or explicit initial matrices",
            )),
            _ => {}
        }
        if self.initial.is_some() && sweeping {
            out.push(FieldViolation::new("sweep.seeds", "cannot sweep seeds over explicit initial matrices"));
        }

        check_coefficients("lambda", &self.lambda, n, false, &mut out);
        check_coefficients("learning", &self.learning, n, true, &mut out);
        if self.initial.is_some() {
            for (field, spec) in [("lambda", &self.lambda), ("learning", &self.learning)] {
                if spec.is_random() {
                    out.push(FieldViolation::new(
                        field,
                        "random coefficients need a seed; use zero, constant or explicit with initial matrices",
                    ));
                }
            }
        }

        let stop = &self.stopping;
        if stop.max_steps == 0 {
            out.push(FieldViolation::new("stopping.max_steps", "must be positive"));
        }
        if !(stop.tol > 0.0 && stop.tol.is_finite()) {
            out.push(FieldViolation::new("stopping.tol", format!("{} is not a positive number", stop.tol)));
        }
        if stop.window == 0 {
            out.push(FieldViolation::new("stopping.window", "must be positive"));
        }
        if self.output.stride == Some(0) {
            out.push(FieldViolation::new("output.stride", "must be positive"));
        }

        if let Some(init) = &self.initial {
            check_initial(init, n, &mut out);
        }
        if let Some(sweep) = &self.sweep {
            if sweep.grid.is_empty() {
                out.push(FieldViolation::new("sweep.grid", "must not be empty"));
            }
            if sweep.seeds.is_empty() {
                out.push(FieldViolation::new("sweep.seeds", "must not be empty"));
            }
            for (i, point) in sweep.grid.iter().enumerate() {
                let cell_n = point.n_agents.unwrap_or(n);
                if cell_n < 2 {
                    out.push(FieldViolation::new(format!("sweep.grid[{i}].n_agents"), format!("{cell_n} < 2")));
                }
                if let Some(spec) = &point.lambda {
                    check_coefficients(&format!("sweep.grid[{i}].lambda"), spec, cell_n, false, &mut out);
                }
                if let Some(spec) = &point.learning {
                    check_coefficients(&format!("sweep.grid[{i}].learning"), spec, cell_n, true, &mut out);
                }
            }
        }
        out
    }

    /// Builds the initial state and coefficients. Validates first.
    pub fn build_team(&self) -> Result<(TeamState, ModelParams), ConfigError> {
        let violations = self.validate();
        if !violations.is_empty() {
            return Err(ConfigError::Invalid(violations));
        }
        let n = self.n_agents;
        match (&self.initial, self.seed) {
            (Some(init), _) => {
                let state = initial_state(init).map_err(|m| ConfigError::Invalid(vec![FieldViolation::new("initial", m)]))?;
                let lambda = self.lambda.fixed(n).expect("validated: deterministic");
                let learning = self.learning.fixed(n).expect("validated: deterministic");
                Ok((state, ModelParams::new(lambda, learning)))
            }
            (None, Some(seed)) => random_team(n, seed, &self.lambda, &self.learning)
                .map_err(|e| ConfigError::Invalid(vec![FieldViolation::new("seed", e.to_string())])),
            (None, None) => Err(ConfigError::Invalid(vec![FieldViolation::new(
                "seed",
                "no seed given; sweep cells set their own",
            )])),
        }
    }

    /// Config for one sweep cell.
    pub fn cell(&self, point: &GridPoint, seed: u64) -> ExperimentConfig {
        let mut c = self.clone();
        c.sweep = None;
        c.seed = Some(seed);
        if let Some(n) = point.n_agents {
            c.n_agents = n;
        }
        if let Some(l) = &point.lambda {
            c.lambda = l.clone();
        }
        if let Some(l) = &point.learning {
            c.learning = l.clone();
        }
        c
    }

    /// Parses without validating.
    pub fn from_toml_unchecked(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }
}

fn check_coefficients(field: &str, spec: &CoefficientSpec, n: usize, learning: bool, out: &mut Vec<FieldViolation>) {
    let in_range = |v: f64| if learning { v > 0.0 && v <= 1.0 } else { (0.0..=1.0).contains(&v) };
    let range = if learning { "(0,1]" } else { "[0,1]" };
    match spec {
        CoefficientSpec::Uniform => {}
        CoefficientSpec::UniformAbove(low) => {
            if !(0.0..1.0).contains(low) {
                out.push(FieldViolation::new(field, format!("uniform_above bound {low} not in [0,1)")));
            }
        }
        CoefficientSpec::Zero => {
            if learning {
                out.push(FieldViolation::new(field, format!("learning coefficients must lie in {range}, zero given")));
            }
        }
        CoefficientSpec::Constant(c) => {
            if !in_range(*c) {
                out.push(FieldViolation::new(field, format!("constant {c} not in {range}")));
            }
        }
        CoefficientSpec::Explicit(v) => {
            if v.len() != n {
                out.push(FieldViolation::new(field, format!("dimension mismatch: {} values for {n} agents", v.len())));
            }
            for (i, &x) in v.iter().enumerate() {
                if !in_range(x) {
                    out.push(FieldViolation::new(format!("{field}[{i}]"), format!("{x} not in {range}")));
                }
            }
        }
    }
}

fn initial_state(init: &InitialCondition) -> Result<TeamState, String> {
    let appraisal = crate::serde_mat::matrix::from_rows(&init.appraisal)?;
    Ok(TeamState::new(appraisal, DVector::from_vec(init.expertise.clone())))
}

fn check_initial(init: &InitialCondition, n: usize, out: &mut Vec<FieldViolation>) {
    let mut shaped = true;
    if init.expertise.len() != n {
        shaped = false;
        out.push(FieldViolation::new(
            "initial.expertise",
            format!("dimension mismatch: {} values for {n} agents", init.expertise.len()),
        ));
    }
    if init.appraisal.len() != n {
        shaped = false;
        out.push(FieldViolation::new(
            "initial.appraisal",
            format!("dimension mismatch: {} rows for {n} agents", init.appraisal.len()),
        ));
    }
    for (i, row) in init.appraisal.iter().enumerate() {
        if row.len() != n {
            shaped = false;
            out.push(FieldViolation::new(
                format!("initial.appraisal[{i}]"),
                format!("dimension mismatch: {} entries for {n} agents", row.len()),
            ));
        }
    }
    if !shaped {
        return;
    }
    let Ok(state) = initial_state(init) else { return };
    // coefficients are checked separately; only state violations matter here
    let params = ModelParams::uniform(n, 0.0, 1.0);
    for v in model::validate_initial(&state, &params) {
        let field = match &v {
            Violation::ExpertiseOutOfRange { agent, .. } => format!("initial.expertise[{agent}]"),
            Violation::NegativeAppraisal { row, col, .. } => format!("initial.appraisal[{row}][{col}]"),
            Violation::RowNotStochastic { row, .. } => format!("initial.appraisal[{row}]"),
            _ => "initial".to_string(),
        };
        out.push(FieldViolation::new(field, v.to_string()));
    }
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let config = ExperimentConfig::from_toml_unchecked(text)?;
    let violations = config.validate();
    if violations.is_empty() {
        Ok(config)
    } else {
        Err(ConfigError::Invalid(violations))
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_config(&text)
}

pub fn save_config(config: &ExperimentConfig, path: &Path) -> Result<(), ConfigError> {
    fs::write(path, config.to_toml()?).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })
}

/// Reads a square matrix from text: one row per line, entries separated by
/// commas and/or whitespace. Blank lines and `#` comments are skipped.
pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>, String> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|e| format!("line {}: {s:?}: {e}", lineno + 1)))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    let m = crate::serde_mat::matrix::from_rows(&rows)?;
    if !m.is_square() {
        return Err(format!("matrix is {}x{}, expected square", m.nrows(), m.ncols()));
    }
    Ok(m)
}
