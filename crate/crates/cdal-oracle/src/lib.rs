//! Ground-truth machinery for validating the coordinate-descent MPC solver.
//!
//! Everything here is deliberately the *opposite* of the production solver:
//! the sparse stacked QP is materialized as dense matrices and solved by
//! accelerated projected gradient inside a method-of-multipliers loop, sharing
//! no code with the coordinate-descent kernel. Slow and obviously correct
//! beats fast and subtle for a reference implementation.

#![allow(non_snake_case)]

use cdal_core::AugmentedModel;
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

mod fista;
pub mod brute;
pub mod testgen;

pub use fista::{minimize_f_rho, solve_qp_reference};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error(
        "reference solve budget exhausted: residual {residual:.3e} after {iterations} gradient steps"
    )]
    BudgetExhausted { iterations: usize, residual: f64 },
}

/// The horizon problem written out as one dense box-constrained QP
///
/// ```text
///   minimize    1/2 z'Hz + h'z
///   subject to  G z = g,   lo <= z <= hi
/// ```
///
/// with `z = (u_0, x_1, u_1, x_2, ..., u_{T-1}, x_T)` stacking the input
/// increments and augmented states stage by stage.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitQp {
    pub H: DMatrix<f64>,
    pub h: DVector<f64>,
    pub G: DMatrix<f64>,
    pub g: DVector<f64>,
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
    /// Augmented state dimension (states embed the previous input).
    pub state_dim: usize,
    pub input_dim: usize,
    pub horizon: usize,
}

impl ExplicitQp {
    pub fn n_z(&self) -> usize {
        self.H.nrows()
    }

    /// Number of equality rows.
    pub fn n_c(&self) -> usize {
        self.G.nrows()
    }

    fn stage_offset(&self, t: usize) -> usize {
        t * (self.state_dim + self.input_dim)
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * (&self.H * z).dot(z) + self.h.dot(z)
    }

    /// Equality residual `Gz - g`.
    pub fn residual(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.G * z - &self.g
    }

    /// Projection onto the box, in place.
    pub fn project(&self, z: &mut DVector<f64>) {
        for i in 0..z.len() {
            z[i] = z[i].clamp(self.lo[i], self.hi[i]);
        }
    }

    /// Splits a stacked vector into per-stage inputs and states
    /// `(U, X[1..=T])`.
    pub fn split(&self, z: &DVector<f64>) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let mut U = Vec::with_capacity(self.horizon);
        let mut X = Vec::with_capacity(self.horizon);
        for t in 0..self.horizon {
            let o = self.stage_offset(t);
            U.push(z.rows(o, self.input_dim).clone_owned());
            X.push(z.rows(o + self.input_dim, self.state_dim).clone_owned());
        }
        (U, X)
    }

    /// Inverse of [`split`](Self::split): stacks per-stage inputs and states
    /// (`X` without the fixed initial state).
    pub fn assemble(&self, U: &[DVector<f64>], X: &[DVector<f64>]) -> DVector<f64> {
        let mut z = DVector::zeros(self.n_z());
        for t in 0..self.horizon {
            let o = self.stage_offset(t);
            z.rows_mut(o, self.input_dim).copy_from(&U[t]);
            z.rows_mut(o + self.input_dim, self.state_dim)
                .copy_from(&X[t]);
        }
        z
    }
}

/// Stacks per-stage multipliers into one vector matching the rows of `G`.
pub fn stack_duals(L: &[DVector<f64>]) -> DVector<f64> {
    let n = L.iter().map(|l| l.len()).sum();
    let mut out = DVector::zeros(n);
    let mut o = 0;
    for l in L {
        out.rows_mut(o, l.len()).copy_from(l);
        o += l.len();
    }
    out
}

/// Materializes the dense stacked QP for an augmented model.
///
/// `H` is block diagonal `(R, Q, R, Q, ...)`; `G` carries the banded dynamics
/// with `B_hat` under each input, `-I` under the next state and `A_hat` under
/// the previous state; the first block row folds the known initial state into
/// `g`.
pub fn build_qp(m: &AugmentedModel) -> ExplicitQp {
    let n = m.state_dim();
    let nu = m.input_dim();
    let T = m.horizon;
    let nz = T * (n + nu);
    let nc = T * n;

    let mut H = DMatrix::zeros(nz, nz);
    let mut h = DVector::zeros(nz);
    let mut G = DMatrix::zeros(nc, nz);
    let mut g = DVector::zeros(nc);
    let mut lo = DVector::zeros(nz);
    let mut hi = DVector::zeros(nz);

    for t in 0..T {
        let o = t * (n + nu);
        H.view_mut((o, o), (nu, nu)).copy_from(&m.R);
        H.view_mut((o + nu, o + nu), (n, n)).copy_from(&m.Q);
        h.rows_mut(o + nu, n).copy_from(&m.q_lin);
        lo.rows_mut(o, nu).copy_from(&m.uh_min);
        hi.rows_mut(o, nu).copy_from(&m.uh_max);
        lo.rows_mut(o + nu, n).copy_from(&m.xh_min);
        hi.rows_mut(o + nu, n).copy_from(&m.xh_max);

        let row = t * n;
        G.view_mut((row, o), (n, nu)).copy_from(&m.B_hat);
        for i in 0..n {
            G[(row + i, o + nu + i)] = -1.0;
        }
        if t == 0 {
            g.rows_mut(0, n).copy_from(&(-(&m.A_hat * &m.xh0) - &m.e_hat));
        } else {
            let prev_state = (t - 1) * (n + nu) + nu;
            G.view_mut((row, prev_state), (n, n)).copy_from(&m.A_hat);
            g.rows_mut(row, n).copy_from(&(-&m.e_hat));
        }
    }

    ExplicitQp {
        H,
        h,
        G,
        g,
        lo,
        hi,
        state_dim: n,
        input_dim: nu,
        horizon: T,
    }
}

/// Augmented-Lagrangian subproblem objective
/// `1/2 z'(H/rho + G'G)z + (h/rho + G'lambda_hat - G'g)'z`, evaluated without
/// forming the stacked Hessian.
pub fn eval_f_rho(qp: &ExplicitQp, z: &DVector<f64>, lambda_hat: &DVector<f64>, rho: f64) -> f64 {
    let Gz = &qp.G * z;
    0.5 * (&qp.H * z).dot(z) / rho
        + qp.h.dot(z) / rho
        + 0.5 * Gz.norm_squared()
        + (lambda_hat - &qp.g).dot(&Gz)
}
