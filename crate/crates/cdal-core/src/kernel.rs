//! Inner coordinate-descent kernel.
//!
//! One full pass sweeps every coordinate of the stacked decision variable
//! exactly once, in reverse (default) or forward cyclic order. Each coordinate
//! takes an exact single-coordinate minimization step (clipped Newton step on
//! the separable quadratic) and the stage multipliers are updated in tandem so
//! that `Lambda[t]` always equals the extrapolated dual plus the current stage
//! residual. That coupling is what makes the per-coordinate gradient available
//! from O(state dim) dot products with model columns: no stacked Hessian, no
//! factorization, no matrix solve anywhere in this module.

use nalgebra::{DMatrix, DVector};

use crate::problem::{AugmentedModel, PrimalDualIterate, ProblemError};

/// Which way a pass walks the stacked variable: `Reverse` starts from the
/// terminal state and works back to the first input; `Forward` is the mirror.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepOrder {
    Forward,
    Reverse,
}

impl SweepOrder {
    /// Coordinate visit order within one block of `n` coordinates.
    #[inline]
    fn indices(self, n: usize) -> impl Iterator<Item = usize> {
        (0..n).map(move |k| match self {
            SweepOrder::Forward => k,
            SweepOrder::Reverse => n - 1 - k,
        })
    }
}

/// Outcome of one full coordinate-descent pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassResult {
    /// Sum of squared coordinate updates over the pass.
    pub sigma: f64,
}

/// Per-solve workspace: the penalty weight and the separable Hessian blocks of
/// the augmented-Lagrangian subproblem.
///
/// Only three distinct blocks exist: `phi1 = R/rho + B_hat'B_hat` for input
/// stages, `phi3 = Q/rho + I + A_hat'A_hat` for interior states and
/// `phi6 = Q/rho + I` for the terminal state. The coordinate steps divide only
/// by their cached diagonals; the off-diagonal coupling enters through the
/// maintained multipliers, so the full blocks are kept for inspection and
/// testing rather than for the iteration itself.
#[derive(Debug, Clone)]
pub struct CdWorkspace<'a> {
    pub model: &'a AugmentedModel,
    pub rho: f64,
    pub phi1: DMatrix<f64>,
    pub phi3: DMatrix<f64>,
    pub phi6: DMatrix<f64>,
    pub diag1: DVector<f64>,
    pub diag3: DVector<f64>,
    pub diag6: DVector<f64>,
}

impl<'a> CdWorkspace<'a> {
    pub fn new(model: &'a AugmentedModel, rho: f64) -> Result<Self, ProblemError> {
        if !rho.is_finite() || rho <= 0.0 {
            return Err(ProblemError::NonPositive { field: "rho" });
        }
        let n = model.state_dim();
        let phi1 = &model.R / rho + model.B_hat.transpose() * &model.B_hat;
        let phi3 =
            &model.Q / rho + DMatrix::identity(n, n) + model.A_hat.transpose() * &model.A_hat;
        let phi6 = &model.Q / rho + DMatrix::identity(n, n);
        let diag1 = phi1.diagonal();
        let diag3 = phi3.diagonal();
        let diag6 = phi6.diagonal();
        check_diag("diag1", &diag1)?;
        check_diag("diag3", &diag3)?;
        check_diag("diag6", &diag6)?;
        Ok(CdWorkspace {
            model,
            rho,
            phi1,
            phi3,
            phi6,
            diag1,
            diag3,
            diag6,
        })
    }
}

fn check_diag(field: &'static str, d: &DVector<f64>) -> Result<(), ProblemError> {
    for (i, &v) in d.iter().enumerate() {
        if !v.is_finite() || v <= 0.0 {
            return Err(ProblemError::NonpositiveDiagonal { field, index: i });
        }
    }
    Ok(())
}

/// Projection onto `[lo, hi]`; either side may be infinite.
#[inline]
pub fn clamp(v: f64, lo: f64, hi: f64) -> f64 {
    if v >= hi {
        hi
    } else if v <= lo {
        lo
    } else {
        v
    }
}

/// Coordinate sweep over the input increment of stage `t`.
///
/// Requires the coupling precondition: `Lambda[t]` holds the current stage-`t`
/// residual (dual plus `A_hat x_t + B_hat u_t + e_hat - x_{t+1}`). Each
/// coordinate moves to its clipped exact minimizer and `Lambda[t]` absorbs the
/// move through the corresponding column of `B_hat`, restoring the
/// precondition for the next coordinate.
pub fn ccd_input_block(
    ws: &CdWorkspace<'_>,
    it: &mut PrimalDualIterate,
    t: usize,
    sigma: &mut f64,
    order: SweepOrder,
) {
    let m = ws.model;
    let nu = m.input_dim();
    for i in order.indices(nu) {
        // R is symmetric, so row i of R acting on u is column i dotted with u.
        let s = m.R.column(i).dot(&it.U[t]) / ws.rho + m.B_hat.column(i).dot(&it.Lambda[t]);
        let v = it.U[t][i];
        let theta = clamp(v - s / ws.diag1[i], m.uh_min[i], m.uh_max[i]);
        let delta = theta - v;
        if delta != 0.0 {
            *sigma += delta * delta;
            it.U[t][i] = theta;
            it.Lambda[t].axpy(delta, &m.B_hat.column(i), 1.0);
        }
    }
}

/// Coordinate sweep over the interior state `X[t+1]`, `0 <= t <= T-2`.
///
/// `X[t+1]` couples two stage residuals: row `t` through `-I` and row `t+1`
/// through `A_hat`. Both `Lambda[t]` and `Lambda[t+1]` must hold current
/// residuals on entry and are updated per coordinate move.
pub fn ccd_state_block(
    ws: &CdWorkspace<'_>,
    it: &mut PrimalDualIterate,
    t: usize,
    sigma: &mut f64,
    order: SweepOrder,
) {
    let m = ws.model;
    let n = m.state_dim();
    debug_assert!(t + 2 <= m.horizon);
    for i in order.indices(n) {
        let s = (m.Q.column(i).dot(&it.X[t + 1]) + m.q_lin[i]) / ws.rho - it.Lambda[t][i]
            + m.A_hat.column(i).dot(&it.Lambda[t + 1]);
        let v = it.X[t + 1][i];
        let theta = clamp(v - s / ws.diag3[i], m.xh_min[i], m.xh_max[i]);
        let delta = theta - v;
        if delta != 0.0 {
            *sigma += delta * delta;
            it.X[t + 1][i] = theta;
            it.Lambda[t][i] -= delta;
            it.Lambda[t + 1].axpy(delta, &m.A_hat.column(i), 1.0);
        }
    }
}

/// Coordinate sweep over the terminal state `X[T]`, which touches only the
/// last stage residual through `-I`.
pub fn ccd_terminal_state(
    ws: &CdWorkspace<'_>,
    it: &mut PrimalDualIterate,
    sigma: &mut f64,
    order: SweepOrder,
) {
    let m = ws.model;
    let n = m.state_dim();
    let last = m.horizon - 1;
    for i in order.indices(n) {
        let s = (m.Q.column(i).dot(&it.X[last + 1]) + m.q_lin[i]) / ws.rho - it.Lambda[last][i];
        let v = it.X[last + 1][i];
        let theta = clamp(v - s / ws.diag6[i], m.xh_min[i], m.xh_max[i]);
        let delta = theta - v;
        if delta != 0.0 {
            *sigma += delta * delta;
            it.X[last + 1][i] = theta;
            it.Lambda[last][i] -= delta;
        }
    }
}

/// One full cyclic pass over every coordinate of the decision variable.
///
/// `Reverse` visits the terminal state first, then the last input, then walks
/// back through `{X[t+1], U[t]}` pairs down to stage 0, each block sweeping
/// its coordinates from highest index to lowest. `Forward` is the exact
/// mirror: `U[0], X[1], U[1], ..., X[T]` with ascending coordinates. Every
/// coordinate is updated exactly once, so `sigma` is the squared distance
/// between consecutive full iterates.
pub fn cd_full_pass(
    ws: &CdWorkspace<'_>,
    it: &mut PrimalDualIterate,
    order: SweepOrder,
) -> PassResult {
    let T = ws.model.horizon;
    let mut sigma = 0.0;
    match order {
        SweepOrder::Reverse => {
            ccd_terminal_state(ws, it, &mut sigma, order);
            ccd_input_block(ws, it, T - 1, &mut sigma, order);
            for t in (0..T - 1).rev() {
                ccd_state_block(ws, it, t, &mut sigma, order);
                ccd_input_block(ws, it, t, &mut sigma, order);
            }
        }
        SweepOrder::Forward => {
            for t in 0..T - 1 {
                ccd_input_block(ws, it, t, &mut sigma, order);
                ccd_state_block(ws, it, t, &mut sigma, order);
            }
            ccd_input_block(ws, it, T - 1, &mut sigma, order);
            ccd_terminal_state(ws, it, &mut sigma, order);
        }
    }
    PassResult { sigma }
}
