//! Output files: trajectories, summaries, sweep tables and graph reports.
//!
//! CSV headers are fixed:
//!
//! * expertise trajectory: `t,agent,expertise`
//! * appraisal trajectory: `t,i,j,appraisal`
//! * sweep table: [`SWEEP_HEADER`]
//!
//! Agents are 0-based. Floats use the shortest text that parses back to the
//! same `f64`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asymptotics::LimitPrediction;
use crate::config::OutputFormat;
use crate::graph::{Connectivity, FrobeniusDecomposition};
use crate::sim::{ExperimentSummary, SweepCell, Trajectory};

pub const EXPERTISE_HEADER: &str = "t,agent,expertise";
pub const APPRAISAL_HEADER: &str = "t,i,j,appraisal";
pub const SWEEP_HEADER: &str = "grid_index,seed,n_agents,regime,variant,alpha,converged,steps_taken,residual,error";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("json error in {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("trajectory has no snapshots")]
    EmptyTrajectory,
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    File::create(path).map(BufWriter::new).map_err(|source| IoError::Io { path: path.to_path_buf(), source })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), IoError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| IoError::Json { path: path.to_path_buf(), source })?;
    writeln!(w).and_then(|_| w.flush()).map_err(io_err(path))
}

/// Writes `traj` to `path`: the long expertise table for CSV, the full
/// trajectory for JSON.
pub fn write_trajectory(traj: &Trajectory, path: &Path, format: OutputFormat) -> Result<(), IoError> {
    if traj.snapshots.is_empty() {
        return Err(IoError::EmptyTrajectory);
    }
    match format {
        OutputFormat::Json => write_json(traj, path),
        OutputFormat::Csv => {
            let mut w = create(path)?;
            let mut body = || -> std::io::Result<()> {
                writeln!(w, "{EXPERTISE_HEADER}")?;
                for s in &traj.snapshots {
                    for (agent, y) in s.expertise.iter().enumerate() {
                        writeln!(w, "{},{agent},{y:?}", s.time)?;
                    }
                }
                w.flush()
            };
            body().map_err(io_err(path))
        }
    }
}

/// Companion CSV with every appraisal entry of every snapshot.
pub fn write_appraisal_csv(traj: &Trajectory, path: &Path) -> Result<(), IoError> {
    if traj.snapshots.is_empty() {
        return Err(IoError::EmptyTrajectory);
    }
    let mut w = create(path)?;
    let mut body = || -> std::io::Result<()> {
        writeln!(w, "{APPRAISAL_HEADER}")?;
        for s in &traj.snapshots {
            for i in 0..s.appraisal.nrows() {
                for j in 0..s.appraisal.ncols() {
                    writeln!(w, "{},{i},{j},{:?}", s.time, s.appraisal[(i, j)])?;
                }
            }
        }
        w.flush()
    };
    body().map_err(io_err(path))
}

pub fn read_trajectory_json(path: &Path) -> Result<Trajectory, IoError> {
    let file = File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(std::io::BufReader::new(file)).map_err(|source| IoError::Json { path: path.to_path_buf(), source })
}

pub fn write_summary(summary: &ExperimentSummary, path: &Path) -> Result<(), IoError> {
    write_json(summary, path)
}

pub fn read_summary(path: &Path) -> Result<ExperimentSummary, IoError> {
    let file = File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(std::io::BufReader::new(file)).map_err(|source| IoError::Json { path: path.to_path_buf(), source })
}

pub fn write_sweep_json(cells: &[SweepCell], path: &Path) -> Result<(), IoError> {
    write_json(&cells, path)
}

fn variant_name(p: &LimitPrediction) -> &'static str {
    match p {
        LimitPrediction::Exact { .. } => "exact",
        LimitPrediction::ClassBounds { .. } => "class_bounds",
        LimitPrediction::Unsupported { .. } => "unsupported",
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One CSV row per sweep cell.
pub fn sweep_csv(cells: &[SweepCell]) -> String {
    let mut out = String::new();
    out.push_str(SWEEP_HEADER);
    out.push('\n');
    for c in cells {
        let row = match &c.summary {
            Some(s) => {
                let regime = serde_json::to_value(s.regime).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
                let residual = s.residuals.headline().map(|r| format!("{r:?}")).unwrap_or_default();
                format!(
                    "{},{},{},{},{},{:?},{},{},{},",
                    c.grid_index,
                    c.seed,
                    s.n_agents,
                    regime,
                    variant_name(&s.prediction),
                    s.alpha,
                    s.converged,
                    s.steps_taken,
                    residual
                )
            }
            None => format!(
                "{},{},,,,,,,,{}",
                c.grid_index,
                c.seed,
                csv_field(c.error.as_deref().unwrap_or(""))
            ),
        };
        out.push_str(&row);
        out.push('\n');
    }
    out
}

pub fn write_sweep_csv(cells: &[SweepCell], path: &Path) -> Result<(), IoError> {
    std::fs::write(path, sweep_csv(cells)).map_err(io_err(path))
}

/// Serializable view of a Frobenius decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub n_nodes: usize,
    pub connectivity: Connectivity,
    pub permutation: Vec<usize>,
    pub classes: Vec<ClassReport>,
    /// `accessibility[j][i]`: class `i` is accessible from class `j`.
    pub accessibility: Vec<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub index: usize,
    pub members: Vec<usize>,
    pub size: usize,
    pub is_scalar: bool,
}

pub fn analysis_report(decomp: &FrobeniusDecomposition) -> AnalysisReport {
    let connectivity = match (decomp.n_nodes(), decomp.n_classes()) {
        (n, _) if n <= 1 => Connectivity::Scalar,
        (_, 1) => Connectivity::Irreducible,
        _ => Connectivity::Reducible,
    };
    AnalysisReport {
        n_nodes: decomp.n_nodes(),
        connectivity,
        permutation: decomp.permutation.clone(),
        classes: decomp
            .classes
            .iter()
            .map(|c| ClassReport { index: c.index, members: c.members.clone(), size: c.size(), is_scalar: c.is_scalar() })
            .collect(),
        accessibility: decomp.accessibility.rows().to_vec(),
    }
}

pub fn write_analysis(report: &AnalysisReport, path: &Path) -> Result<(), IoError> {
    write_json(report, path)
}

pub fn write_prediction(prediction: &LimitPrediction, path: &Path) -> Result<(), IoError> {
    write_json(prediction, path)
}
