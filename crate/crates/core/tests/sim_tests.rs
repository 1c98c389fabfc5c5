use tms_core::config::{GridPoint, InitialCondition};
use tms_core::sim::{default_stride, Residuals};
use tms_core::{batch_sweep, run_experiment, CoefficientSpec, ExperimentConfig, LimitPrediction, Regime};

#[test]
fn seeded_open_team_reaches_the_predicted_limit() {
    let mut cfg = ExperimentConfig::seeded(15, 7);
    cfg.output.stride = Some(50);
    let out = run_experiment(&cfg).unwrap();
    let s = &out.summary;
    assert_eq!(s.regime, Regime::NoStubborn);
    assert!(s.converged);
    assert!(matches!(s.prediction, LimitPrediction::Exact { .. }));
    assert!(s.residuals.headline().unwrap() <= 1e-6);
    let t = &out.trajectory;
    assert_eq!(t.snapshots[0].time, 0);
    assert_eq!(t.snapshots.last().unwrap().time, t.steps_taken);
    assert!(t.snapshots.windows(2).all(|w| w[1].time > w[0].time));
}

#[test]
fn explicit_stubborn_team_keeps_its_appraisal() {
    let mut cfg = ExperimentConfig::seeded(3, 0);
    cfg.seed = None;
    cfg.lambda = CoefficientSpec::Zero;
    cfg.learning = CoefficientSpec::Constant(0.8);
    cfg.initial = Some(InitialCondition {
        appraisal: vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![0.5, 0.0, 0.5]],
        expertise: vec![0.3, 0.9, 0.5],
    });
    let out = run_experiment(&cfg).unwrap();
    let s = &out.summary;
    assert_eq!(s.regime, Regime::AllStubborn);
    assert!(s.converged);
    assert_eq!(out.trajectory.final_state.appraisal, out.trajectory.snapshots[0].appraisal);
    let Residuals::Exact { expertise, appraisal } = s.residuals else { panic!("{:?}", s.residuals) };
    assert!(expertise <= 1e-6);
    assert_eq!(appraisal, Some(0.0));
}

#[test]
fn mixed_team_runs_without_prediction() {
    let mut cfg = ExperimentConfig::seeded(4, 3);
    cfg.lambda = CoefficientSpec::Explicit(vec![0.0, 0.5, 0.5, 1.0]);
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.summary.regime, Regime::Mixed);
    assert!(matches!(out.summary.prediction, LimitPrediction::Unsupported { .. }));
    assert_eq!(out.summary.residuals, Residuals::None);
}

#[test]
fn invalid_config_is_refused_before_running() {
    let mut cfg = ExperimentConfig::seeded(3, 1);
    cfg.learning = CoefficientSpec::Constant(1.5);
    assert!(run_experiment(&cfg).is_err());
}

#[test]
fn stride_defaults_by_team_size() {
    assert_eq!(default_stride(50), 1);
    assert_eq!(default_stride(51), 10);
}

fn grid() -> Vec<GridPoint> {
    vec![
        GridPoint { n_agents: Some(4), ..Default::default() },
        GridPoint { n_agents: Some(8), lambda: Some(CoefficientSpec::UniformAbove(0.05)), ..Default::default() },
        GridPoint { n_agents: Some(4), ..Default::default() },
    ]
}

#[test]
fn sweep_covers_every_cell_in_order() {
    let base = ExperimentConfig::seeded(4, 0);
    let seeds = [1, 2, 3];
    let cells = batch_sweep(&base, &grid(), &seeds).unwrap();
    assert_eq!(cells.len(), 9);
    for (k, c) in cells.iter().enumerate() {
        assert_eq!(c.grid_index, k / 3);
        assert_eq!(c.seed, seeds[k % 3]);
        let s = c.summary.as_ref().unwrap();
        assert_eq!(s.regime, Regime::NoStubborn);
        assert!(s.residuals.headline().unwrap() <= 1e-6);
    }
    // the third grid point repeats the first
    for k in 0..3 {
        assert_eq!(cells[k].summary, cells[6 + k].summary);
    }
}

#[test]
fn sweep_matches_sequential_runs() {
    let base = ExperimentConfig::seeded(4, 0);
    let g = grid();
    let cells = batch_sweep(&base, &g, &[5, 6]).unwrap();
    for c in &cells {
        let alone = run_experiment(&base.cell(&g[c.grid_index], c.seed)).unwrap();
        assert_eq!(c.summary.as_ref().unwrap(), &alone.summary);
    }
}

#[test]
fn failing_cell_is_recorded_not_fatal() {
    let base = ExperimentConfig::seeded(3, 0);
    let g = vec![
        GridPoint::default(),
        GridPoint { lambda: Some(CoefficientSpec::Explicit(vec![0.5])), ..Default::default() },
    ];
    let cells = batch_sweep(&base, &g, &[1]).unwrap();
    assert!(cells[0].error.is_none());
    assert!(cells[1].summary.is_none());
    assert!(cells[1].error.is_some());
    assert!(batch_sweep(&base, &[], &[1]).is_err());
}
