//! Diagonal state scaling (Jacobi-style preconditioning).
//!
//! The change of variables `x_bar = E x` with
//! `E[i,i] = sqrt(Q[i,i] + ||A_hat[:,i]||^2)` equilibrates the augmented
//! state coordinates so that coordinate descent makes comparable progress in
//! every direction. All model data is mapped so the scaled problem is exactly
//! equivalent: minimizers correspond one-to-one under the change of variables.

use nalgebra::DVector;

use crate::float;
use crate::problem::{AugmentedModel, ProblemError};

/// Lower/upper clamp on scaling entries; keeps pathological models from
/// overflowing without changing well-posed ones.
const SCALE_MIN: f64 = 1e-8;
const SCALE_MAX: f64 = 1e8;

/// Diagonal scaling `E` of the augmented state, stored with its reciprocal so
/// applying either direction is a single elementwise product.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalScaling {
    pub E_diag: DVector<f64>,
    pub E_inv_diag: DVector<f64>,
}

impl DiagonalScaling {
    pub fn identity(n: usize) -> Self {
        DiagonalScaling {
            E_diag: DVector::from_element(n, 1.0),
            E_inv_diag: DVector::from_element(n, 1.0),
        }
    }

    /// `x := E x` (into scaled coordinates).
    pub fn scale_state(&self, x: &mut DVector<f64>) {
        x.component_mul_assign(&self.E_diag);
    }

    /// `x := E^{-1} x` (back to original coordinates).
    pub fn unscale_state(&self, x: &mut DVector<f64>) {
        x.component_mul_assign(&self.E_inv_diag);
    }

    /// Multipliers transform contravariantly to the stage residuals: the
    /// scaled residual is `E r`, so `lambda_bar = E^{-1} lambda` keeps the
    /// Lagrangian pairing `lambda' r` invariant.
    pub fn scale_dual(&self, l: &mut DVector<f64>) {
        l.component_mul_assign(&self.E_inv_diag);
    }

    pub fn unscale_dual(&self, l: &mut DVector<f64>) {
        l.component_mul_assign(&self.E_diag);
    }
}

/// Computes the diagonal scaling `E[i,i] = sqrt(Q[i,i] + ||A_hat[:,i]||^2)`.
///
/// A coordinate with zero cost weight and zero dynamics column would scale to
/// zero; that is reported as an error rather than silently producing a
/// singular change of variables. Finite but extreme entries are clamped to
/// `[1e-8, 1e8]` with a warning.
pub fn compute_scaling(m: &AugmentedModel) -> Result<DiagonalScaling, ProblemError> {
    let n = m.state_dim();
    let mut E_diag = DVector::zeros(n);
    for i in 0..n {
        let v = m.Q[(i, i)] + m.A_hat.column(i).norm_squared();
        if v == 0.0 {
            return Err(ProblemError::UnscalableCoordinate { index: i });
        }
        if !v.is_finite() {
            return Err(ProblemError::NonFinite { field: "scaling" });
        }
        let mut e = float::sqrt(v);
        if e < SCALE_MIN {
            log::warn!("state scaling entry {i} = {e:.3e} clamped up to {SCALE_MIN:.0e}");
            e = SCALE_MIN;
        } else if e > SCALE_MAX {
            log::warn!("state scaling entry {i} = {e:.3e} clamped down to {SCALE_MAX:.0e}");
            e = SCALE_MAX;
        }
        E_diag[i] = e;
    }
    let E_inv_diag = E_diag.map(|e| 1.0 / e);
    Ok(DiagonalScaling { E_diag, E_inv_diag })
}

/// Maps the model into scaled coordinates `x_bar = E x`:
///
/// * dynamics: `A_bar = E A_hat E^{-1}`, `B_bar = E B_hat`, `e_bar = E e_hat`,
/// * cost: `Q_bar = E^{-1} Q E^{-1}`, `q_bar = E^{-1} q_lin` (R untouched),
/// * state bounds multiply by `E` so the box maps bijectively,
/// * initial state `E xh0`; input data unchanged.
pub fn apply_scaling(m: &AugmentedModel, s: &DiagonalScaling) -> AugmentedModel {
    let n = m.state_dim();
    let nu = m.input_dim();
    debug_assert_eq!(s.E_diag.len(), n);

    let mut A_hat = m.A_hat.clone();
    let mut B_hat = m.B_hat.clone();
    let mut Q = m.Q.clone();
    for i in 0..n {
        let e = s.E_diag[i];
        let einv = s.E_inv_diag[i];
        for j in 0..n {
            A_hat[(i, j)] *= e;
            Q[(i, j)] *= einv;
        }
        for j in 0..nu {
            B_hat[(i, j)] *= e;
        }
    }
    for j in 0..n {
        let einv = s.E_inv_diag[j];
        for i in 0..n {
            A_hat[(i, j)] *= einv;
            Q[(i, j)] *= einv;
        }
    }

    AugmentedModel {
        A_hat,
        B_hat,
        Q,
        R: m.R.clone(),
        q_lin: m.q_lin.component_mul(&s.E_inv_diag),
        xh_min: m.xh_min.component_mul(&s.E_diag),
        xh_max: m.xh_max.component_mul(&s.E_diag),
        uh_min: m.uh_min.clone(),
        uh_max: m.uh_max.clone(),
        e_hat: m.e_hat.component_mul(&s.E_diag),
        horizon: m.horizon,
        xh0: m.xh0.component_mul(&s.E_diag),
    }
}

/// Maps a scaled state trajectory back to original coordinates in place:
/// `x = E^{-1} x_bar` stage by stage.
pub fn unscale_states(s: &DiagonalScaling, X: &mut [DVector<f64>]) {
    for x in X {
        s.unscale_state(x);
    }
}
