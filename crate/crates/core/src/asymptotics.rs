//! Equilibrium tests and a-priori predictions of where a team ends up.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{self, FrobeniusDecomposition};
use crate::model::{self, ModelError, ModelParams, TeamState};
use crate::serde_mat;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AsymptoticsError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("tolerance must be positive, got {0}")]
    Tolerance(f64),
    #[error("reducible appraisal matrix with all agents stubborn: a Frobenius decomposition is required")]
    DecompositionRequired,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("lambda must lie in (0,1], got {0}")]
    Lambda(f64),
    #[error("agent {agent} out of range for a team of {n}")]
    Agent { agent: usize, n: usize },
    #[error("expertise history is empty")]
    EmptyHistory,
}

/// How many agents keep their initial appraisals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Every `lambda > 0`.
    NoStubborn,
    /// Every `lambda == 0`; the appraisal matrix never moves.
    AllStubborn,
    Mixed,
}

pub fn classify_regime(params: &ModelParams) -> Regime {
    if params.lambda.iter().all(|&l| l > 0.0) {
        Regime::NoStubborn
    } else if params.lambda.iter().all(|&l| l == 0.0) {
        Regime::AllStubborn
    } else {
        Regime::Mixed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub is_equilibrium: bool,
    /// Max-norm appraisal residual.
    pub residual_appraisal: f64,
    /// Componentwise expertise slack; equilibrium needs every entry `>= -tol`.
    #[serde(with = "serde_mat::vector")]
    pub slack_expertise: DVector<f64>,
}

/// Decides whether `state` is a fixed point of the dynamics.
///
/// * No stubborn agent: the appraisal residual is `M - 1 yᵀ/||y||_1` and the
///   slack is `y - M y`.
/// * All stubborn: the appraisal cannot move, so the residual is 0 and only
///   `y - M y` is checked.
/// * Mixed: one step is taken; the residual is `||M' - M||_inf` and the slack
///   is `y - y'`.
pub fn is_equilibrium(
    state: &TeamState,
    params: &ModelParams,
    tol: f64,
) -> Result<EquilibriumReport, AsymptoticsError> {
    if !(tol > 0.0) {
        return Err(AsymptoticsError::Tolerance(tol));
    }
    let y = &state.expertise;
    let (residual_appraisal, slack_expertise) = match classify_regime(params) {
        Regime::NoStubborn => {
            let share = model::normalized_expertise(y)?;
            let n = y.len();
            check_square(&state.appraisal, n)?;
            let target = DMatrix::from_fn(n, n, |_, j| share[j]);
            ((&state.appraisal - target).amax(), y - &state.appraisal * y)
        }
        Regime::AllStubborn => {
            check_square(&state.appraisal, y.len())?;
            (0.0, y - &state.appraisal * y)
        }
        Regime::Mixed => {
            let (next, _) = model::step(state, params)?;
            ((&next.appraisal - &state.appraisal).amax(), y - &next.expertise)
        }
    };
    let is_equilibrium =
        residual_appraisal <= tol && slack_expertise.iter().all(|&s| s >= -tol);
    Ok(EquilibriumReport { is_equilibrium, residual_appraisal, slack_expertise })
}

fn check_square(m: &DMatrix<f64>, n: usize) -> Result<(), AsymptoticsError> {
    if m.shape() != (n, n) {
        return Err(AsymptoticsError::Dimension { expected: n, found: m.nrows() });
    }
    Ok(())
}

/// Limit interval for the members of one communication class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassBound {
    pub class: usize,
    pub members: Vec<usize>,
    /// Largest initial expertise inside the class.
    pub alpha: f64,
    pub lower: f64,
    pub upper: f64,
    /// Classes with access to this one, itself included.
    pub accessing: Vec<usize>,
    /// No other class feeds this one. The diagonal block is then stochastic
    /// and its members converge to `alpha` exactly.
    pub closed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum LimitPrediction {
    Exact {
        #[serde(with = "serde_mat::option_matrix")]
        limit_appraisal: Option<DMatrix<f64>>,
        #[serde(with = "serde_mat::vector")]
        limit_expertise: DVector<f64>,
        alpha: f64,
    },
    ClassBounds {
        classes: Vec<ClassBound>,
    },
    Unsupported {
        reason: String,
    },
}

pub const MIXED_REASON: &str =
    "mixed stubbornness: no limit result covers teams with both stubborn and open agents";

/// Predicts the limit of the trajectory started at `state0`.
///
/// `decomp` is only consulted when every agent is stubborn; it must then be
/// the decomposition of `state0.appraisal`. Without it, a reducible matrix is
/// an error.
pub fn predict_limit(
    state0: &TeamState,
    params: &ModelParams,
    decomp: Option<&FrobeniusDecomposition>,
) -> Result<LimitPrediction, AsymptoticsError> {
    let violations = model::validate_initial(state0, params);
    if !violations.is_empty() {
        return Err(ModelError::Invalid(violations).into());
    }
    let n = state0.n_agents();
    let alpha = state0.max_expertise();
    let exact = |limit_appraisal| LimitPrediction::Exact {
        limit_appraisal: Some(limit_appraisal),
        limit_expertise: DVector::from_element(n, alpha),
        alpha,
    };
    match classify_regime(params) {
        Regime::NoStubborn => Ok(exact(DMatrix::from_element(n, n, 1.0 / n as f64))),
        Regime::Mixed => Ok(LimitPrediction::Unsupported { reason: MIXED_REASON.to_string() }),
        Regime::AllStubborn => {
            let irreducible = match decomp {
                Some(d) => {
                    if d.n_nodes() != n {
                        return Err(AsymptoticsError::Dimension { expected: n, found: d.n_nodes() });
                    }
                    d.n_classes() == 1
                }
                None => graph::is_irreducible(&state0.appraisal),
            };
            if irreducible {
                return Ok(exact(state0.appraisal.clone()));
            }
            let d = decomp.ok_or(AsymptoticsError::DecompositionRequired)?;
            Ok(LimitPrediction::ClassBounds { classes: class_bounds(d, &state0.expertise)? })
        }
    }
}

/// Bounds on the limit expertise of every class: the min and max of the
/// class maxima `alpha_j` over all classes `j` with access to it.
pub fn class_bounds(
    decomp: &FrobeniusDecomposition,
    y0: &DVector<f64>,
) -> Result<Vec<ClassBound>, AsymptoticsError> {
    if y0.len() != decomp.n_nodes() {
        return Err(AsymptoticsError::Dimension { expected: decomp.n_nodes(), found: y0.len() });
    }
    let alphas: Vec<f64> = decomp
        .classes
        .iter()
        .map(|c| c.members.iter().map(|&v| y0[v]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    Ok(decomp
        .classes
        .iter()
        .map(|c| {
            let accessing = decomp.accessibility.accessing(c.index);
            let (lower, upper) = accessing.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &j| {
                (lo.min(alphas[j]), hi.max(alphas[j]))
            });
            ClassBound {
                class: c.index,
                members: c.members.clone(),
                alpha: alphas[c.index],
                lower,
                upper,
                closed: accessing.len() == 1,
                accessing,
            }
        })
        .collect())
}

/// `1 / (lambda ||y(0)||_1)`, the ceiling on every discounted-share partial sum.
pub fn discounted_share_bound(y0: &DVector<f64>, lambda: f64) -> f64 {
    1.0 / (lambda * y0.iter().sum::<f64>())
}

/// Partial sums `S_T = sum_{t<=T} (1 - lambda)^t u_j(t)` of agent `j`'s
/// discounted normalized expertise along `history`.
pub fn discounted_share_partial_sums(
    history: &[DVector<f64>],
    lambda: f64,
    j: usize,
) -> Result<Vec<f64>, AsymptoticsError> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(AsymptoticsError::Lambda(lambda));
    }
    let n = history.first().ok_or(AsymptoticsError::EmptyHistory)?.len();
    if j >= n {
        return Err(AsymptoticsError::Agent { agent: j, n });
    }
    let keep = 1.0 - lambda;
    let mut weight = 1.0;
    let mut total = 0.0;
    let mut sums = Vec::with_capacity(history.len());
    for y in history {
        if y.len() != n {
            return Err(AsymptoticsError::Dimension { expected: n, found: y.len() });
        }
        let share = model::normalized_expertise(y)?;
        total += weight * share[j];
        weight *= keep;
        sums.push(total);
    }
    Ok(sums)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::frobenius_form;
    use approx::assert_abs_diff_eq;

    #[test]
    fn regimes() {
        assert_eq!(classify_regime(&ModelParams::new(vec![0.3, 1.0], vec![1.0; 2])), Regime::NoStubborn);
        assert_eq!(classify_regime(&ModelParams::new(vec![0.0; 3], vec![1.0; 3])), Regime::AllStubborn);
        assert_eq!(classify_regime(&ModelParams::new(vec![0.0, 0.5], vec![1.0; 2])), Regime::Mixed);
    }

    #[test]
    fn uniform_state_is_equilibrium() {
        let state = TeamState::equilibrium(6, 0.4);
        let r = is_equilibrium(&state, &ModelParams::uniform(6, 0.5, 0.5), 1e-12).unwrap();
        assert!(r.is_equilibrium);
    }

    #[test]
    fn uniform_matrix_with_uneven_expertise_is_not() {
        let mut state = TeamState::equilibrium(3, 0.4);
        state.expertise[2] = 0.9;
        let r = is_equilibrium(&state, &ModelParams::uniform(3, 0.5, 0.5), 1e-12).unwrap();
        assert!(!r.is_equilibrium);
    }

    #[test]
    fn stubborn_cycle_with_constant_expertise() {
        let m = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        let state = TeamState::new(m, DVector::from_element(3, 0.6));
        let r = is_equilibrium(&state, &ModelParams::uniform(3, 0.0, 0.5), 1e-12).unwrap();
        assert!(r.is_equilibrium);
        assert_eq!(r.residual_appraisal, 0.0);
    }

    #[test]
    fn mixed_regime_uses_one_step() {
        let state = TeamState::equilibrium(4, 0.5);
        let params = ModelParams::new(vec![0.0, 0.5, 0.5, 0.5], vec![0.5; 4]);
        assert!(is_equilibrium(&state, &params, 1e-12).unwrap().is_equilibrium);
        let mut moved = state.clone();
        moved.expertise[0] = 0.1;
        let r = is_equilibrium(&moved, &params, 1e-12).unwrap();
        assert!(!r.is_equilibrium);
        assert!(r.slack_expertise[0] < 0.0);
    }

    #[test]
    fn nonpositive_tolerance_is_rejected() {
        let state = TeamState::equilibrium(2, 0.5);
        let err = is_equilibrium(&state, &ModelParams::uniform(2, 0.5, 0.5), 0.0).unwrap_err();
        assert_eq!(err, AsymptoticsError::Tolerance(0.0));
    }

    #[test]
    fn no_stubborn_prediction() {
        let mut state = TeamState::equilibrium(15, 0.2);
        state.expertise[7] = 0.969;
        let p = predict_limit(&state, &ModelParams::uniform(15, 0.4, 0.4), None).unwrap();
        match p {
            LimitPrediction::Exact { limit_appraisal, limit_expertise, alpha } => {
                assert_eq!(alpha, 0.969);
                assert!(limit_expertise.iter().all(|&v| v == 0.969));
                assert!(limit_appraisal.unwrap().iter().all(|&v| v == 1.0 / 15.0));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn stubborn_irreducible_prediction_keeps_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[0.3, 0.7, 0.6, 0.4]);
        let state = TeamState::new(m.clone(), DVector::from_vec(vec![0.2, 0.5]));
        let p = predict_limit(&state, &ModelParams::uniform(2, 0.0, 1.0), None).unwrap();
        assert!(matches!(p, LimitPrediction::Exact { limit_appraisal: Some(ref a), alpha, .. } if *a == m && alpha == 0.5));
    }

    #[test]
    fn mixed_prediction_is_unsupported() {
        let state = TeamState::equilibrium(2, 0.5);
        let p = predict_limit(&state, &ModelParams::new(vec![0.0, 0.5], vec![1.0; 2]), None).unwrap();
        assert_eq!(p, LimitPrediction::Unsupported { reason: MIXED_REASON.into() });
    }

    #[test]
    fn reducible_without_decomposition_errors() {
        let state = TeamState::new(DMatrix::identity(3, 3), DVector::from_vec(vec![0.1, 0.2, 0.3]));
        let params = ModelParams::uniform(3, 0.0, 1.0);
        assert_eq!(predict_limit(&state, &params, None).unwrap_err(), AsymptoticsError::DecompositionRequired);
        let d = frobenius_form(&state.appraisal);
        match predict_limit(&state, &params, Some(&d)).unwrap() {
            LimitPrediction::ClassBounds { classes } => {
                assert_eq!(classes.len(), 3);
                for c in &classes {
                    let y = state.expertise[c.members[0]];
                    assert_eq!((c.lower, c.upper), (y, y));
                    assert!(c.closed);
                }
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bounds_single_class() {
        let m = DMatrix::from_element(3, 3, 1.0 / 3.0);
        let d = frobenius_form(&m);
        let b = class_bounds(&d, &DVector::from_vec(vec![0.1, 0.7, 0.3])).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!((b[0].lower, b[0].upper), (0.7, 0.7));
    }

    #[test]
    fn bounds_three_class_chain() {
        // classes {0}, {1,2}, {3,4}: 0 -> {1,2} -> {3,4}
        let m = DMatrix::from_row_slice(
            5,
            5,
            &[
                1.0, 0.0, 0.0, 0.0, 0.0, //
                0.2, 0.4, 0.4, 0.0, 0.0, //
                0.0, 0.5, 0.5, 0.0, 0.0, //
                0.0, 0.0, 0.3, 0.3, 0.4, //
                0.0, 0.0, 0.0, 0.5, 0.5,
            ],
        );
        let d = frobenius_form(&m);
        let y0 = DVector::from_vec(vec![0.2, 0.8, 0.1, 0.5, 0.4]);
        let b = class_bounds(&d, &y0).unwrap();
        let alphas: Vec<f64> = b.iter().map(|c| c.alpha).collect();
        assert_eq!(alphas, vec![0.2, 0.8, 0.5]);
        assert_eq!((b[2].lower, b[2].upper), (0.2, 0.8));
        assert_eq!(b[2].accessing, vec![0, 1, 2]);
        assert!(b[0].closed && !b[1].closed && !b[2].closed);
        assert!(class_bounds(&d, &DVector::from_element(3, 0.5)).is_err());
    }

    #[test]
    fn partial_sums_with_full_lambda() {
        let history = vec![
            DVector::from_vec(vec![0.5, 1.0]),
            DVector::from_vec(vec![0.75, 1.0]),
            DVector::from_vec(vec![0.9, 1.0]),
        ];
        let s = discounted_share_partial_sums(&history, 1.0, 0).unwrap();
        assert_eq!(s, vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn partial_sums_constant_expertise_approach_closed_form() {
        let n = 4;
        let history = vec![DVector::from_element(n, 0.3); 200];
        let s = discounted_share_partial_sums(&history, 0.5, 2).unwrap();
        assert_abs_diff_eq!(*s.last().unwrap(), 2.0 / n as f64, epsilon = 1e-14);
        assert!(s.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn partial_sums_reject_bad_inputs() {
        let h = vec![DVector::from_element(2, 0.5)];
        assert_eq!(discounted_share_partial_sums(&h, 0.0, 0).unwrap_err(), AsymptoticsError::Lambda(0.0));
        assert!(discounted_share_partial_sums(&h, 0.5, 2).is_err());
        assert_eq!(discounted_share_partial_sums(&[], 0.5, 0).unwrap_err(), AsymptoticsError::EmptyHistory);
    }
}
