//! MPC problem description and its velocity-form augmentation.
//!
//! The tracking problem is posed on the augmented state `xh_t = [x_t; u_{t-1}]`
//! with the input increment `uh_t = u_t - u_{t-1}` as the decision input, so
//! rate bounds become plain box bounds and absolute input bounds become state
//! bounds. Stage equality constraints `xh_{t+1} = A_hat xh_t + B_hat uh_t + e_hat`
//! are the only coupling; everything else is separable boxes.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, DVector};

use crate::kernel::clamp;

/// Errors from problem assembly and validation. Every variant names the
/// offending field so configuration mistakes are directly actionable.
#[derive(Debug, Clone, PartialEq)]
pub enum ProblemError {
    /// A matrix or vector has the wrong shape. `expected`/`got` are (rows, cols).
    DimensionMismatch {
        field: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
    NotSymmetric {
        field: &'static str,
    },
    NotPositiveDefinite {
        field: &'static str,
    },
    NotPositiveSemidefinite {
        field: &'static str,
    },
    /// A lower bound exceeds the matching upper bound at `index`.
    BoundsOutOfOrder {
        field: &'static str,
        index: usize,
    },
    /// A value that must be finite (or at least non-NaN for bounds) is not.
    NonFinite {
        field: &'static str,
    },
    /// A scalar that must be strictly positive is not.
    NonPositive {
        field: &'static str,
    },
    ZeroHorizon,
    /// An output bound was requested but the corresponding row of C is not a
    /// unit vector, so it cannot be converted into a state bound.
    OutputRowNotUnit {
        row: usize,
    },
    /// Diagonal scaling hit a coordinate with `Q[i,i] + ||A_hat[:,i]||^2 = 0`.
    UnscalableCoordinate {
        index: usize,
    },
    /// A cached coordinate-descent diagonal is zero or negative.
    NonpositiveDiagonal {
        field: &'static str,
        index: usize,
    },
    /// Closed-loop cost was requested over an empty log.
    EmptyLog,
}

impl fmt::Display for ProblemError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemError::DimensionMismatch {
                field,
                expected,
                got,
            } => write!(
                f,
                "dimension mismatch in `{field}`: expected {}x{}, got {}x{}",
                expected.0, expected.1, got.0, got.1
            ),
            ProblemError::NotSymmetric { field } => write!(f, "`{field}` is not symmetric"),
            ProblemError::NotPositiveDefinite { field } => {
                write!(f, "`{field}` is not positive definite")
            }
            ProblemError::NotPositiveSemidefinite { field } => {
                write!(f, "`{field}` is not positive semidefinite")
            }
            ProblemError::BoundsOutOfOrder { field, index } => write!(
                f,
                "`{field}` has lower bound above upper bound at index {index}"
            ),
            ProblemError::NonFinite { field } => write!(f, "`{field}` contains a non-finite value"),
            ProblemError::NonPositive { field } => write!(f, "`{field}` must be positive"),
            ProblemError::ZeroHorizon => write!(f, "prediction horizon must be at least 1"),
            ProblemError::OutputRowNotUnit { row } => write!(
                f,
                "output bound on row {row} rejected: row {row} of C is not a unit vector, \
                 so the bound does not map onto a single state"
            ),
            ProblemError::UnscalableCoordinate { index } => write!(
                f,
                "unscalable coordinate {index}: Q[{index},{index}] + ||A_hat[:,{index}]||^2 = 0"
            ),
            ProblemError::NonpositiveDiagonal { field, index } => {
                write!(f, "`{field}` has nonpositive entry at index {index}")
            }
            ProblemError::EmptyLog => write!(f, "closed-loop cost over an empty log"),
        }
    }
}

impl core::error::Error for ProblemError {}

/// Linear (or per-step linearized) MPC tracking problem over one horizon.
///
/// Dynamics: `x_{t+1} = A x_t + B u_t + e`, outputs `y_t = C x_t`.
/// Stage cost weights `W_y` (output tracking), `W_u` (input tracking) and
/// `W_du` (increment penalty) enter the objective as `||W (.)||^2` terms.
/// Bounds may be `±inf` to deactivate a side.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcProblem {
    pub A: DMatrix<f64>,
    pub B: DMatrix<f64>,
    pub C: DMatrix<f64>,
    /// Output tracking weight, symmetric PSD, n_y x n_y.
    pub W_y: DMatrix<f64>,
    /// Input tracking weight, symmetric PSD, n_u x n_u.
    pub W_u: DMatrix<f64>,
    /// Input increment weight, symmetric positive definite, n_u x n_u.
    pub W_du: DMatrix<f64>,
    /// Prediction horizon T >= 1.
    pub horizon: usize,
    pub x_min: DVector<f64>,
    pub x_max: DVector<f64>,
    pub u_min: DVector<f64>,
    pub u_max: DVector<f64>,
    pub du_min: DVector<f64>,
    pub du_max: DVector<f64>,
    /// Output reference, held constant over the horizon.
    pub r: DVector<f64>,
    /// Input reference, held constant over the horizon. Irrelevant when
    /// `W_u = 0`; conventionally set to `u_prev` in that case.
    pub u_ref: DVector<f64>,
    /// Current measured state.
    pub x0: DVector<f64>,
    /// Input applied at the previous step.
    pub u_prev: DVector<f64>,
    /// Affine dynamics offset (zero for plain linear models).
    pub e: DVector<f64>,
}

impl MpcProblem {
    pub fn state_dim(&self) -> usize {
        self.A.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.B.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.C.nrows()
    }

    /// Checks shapes, symmetry/definiteness of the weights, bound ordering and
    /// finiteness. Every failure names the offending field.
    pub fn validate(&self) -> Result<(), ProblemError> {
        let nx = self.A.nrows();
        let nu = self.B.ncols();
        let ny = self.C.nrows();

        check_shape("A", &self.A, nx, nx)?;
        check_shape("B", &self.B, nx, nu)?;
        check_shape("C", &self.C, ny, nx)?;
        check_shape("W_y", &self.W_y, ny, ny)?;
        check_shape("W_u", &self.W_u, nu, nu)?;
        check_shape("W_du", &self.W_du, nu, nu)?;
        check_len("x_min", &self.x_min, nx)?;
        check_len("x_max", &self.x_max, nx)?;
        check_len("u_min", &self.u_min, nu)?;
        check_len("u_max", &self.u_max, nu)?;
        check_len("du_min", &self.du_min, nu)?;
        check_len("du_max", &self.du_max, nu)?;
        check_len("r", &self.r, ny)?;
        check_len("u_ref", &self.u_ref, nu)?;
        check_len("x0", &self.x0, nx)?;
        check_len("u_prev", &self.u_prev, nu)?;
        check_len("e", &self.e, nx)?;

        if self.horizon == 0 {
            return Err(ProblemError::ZeroHorizon);
        }

        check_finite_mat("A", &self.A)?;
        check_finite_mat("B", &self.B)?;
        check_finite_mat("C", &self.C)?;
        check_finite_mat("W_y", &self.W_y)?;
        check_finite_mat("W_u", &self.W_u)?;
        check_finite_mat("W_du", &self.W_du)?;
        check_finite_vec("r", &self.r)?;
        check_finite_vec("u_ref", &self.u_ref)?;
        check_finite_vec("x0", &self.x0)?;
        check_finite_vec("u_prev", &self.u_prev)?;
        check_finite_vec("e", &self.e)?;

        check_bounds("x bounds", &self.x_min, &self.x_max)?;
        check_bounds("u bounds", &self.u_min, &self.u_max)?;
        check_bounds("du bounds", &self.du_min, &self.du_max)?;

        check_symmetric("W_y", &self.W_y)?;
        check_symmetric("W_u", &self.W_u)?;
        check_symmetric("W_du", &self.W_du)?;

        check_psd("W_y", &self.W_y)?;
        check_psd("W_u", &self.W_u)?;
        if nalgebra::Cholesky::new(self.W_du.clone()).is_none() {
            return Err(ProblemError::NotPositiveDefinite { field: "W_du" });
        }

        Ok(())
    }

    /// Builds the augmented velocity-form model:
    ///
    /// * `xh = [x; u_prev]`, `uh = du`,
    /// * `A_hat = [[A, B], [0, I]]`, `B_hat = [B; I]`,
    /// * `Q = [[C' W_y C, 0], [0, W_u]]`, `R = W_du`,
    /// * linear state cost `q_lin = [-C' W_y r; -W_u u_ref]`,
    /// * bounds `[x bounds; u bounds]` on states, `du` bounds on inputs.
    pub fn augment(&self) -> Result<AugmentedModel, ProblemError> {
        self.validate()?;
        let nx = self.state_dim();
        let nu = self.input_dim();
        let nxh = nx + nu;

        let mut A_hat = DMatrix::zeros(nxh, nxh);
        A_hat.view_mut((0, 0), (nx, nx)).copy_from(&self.A);
        A_hat.view_mut((0, nx), (nx, nu)).copy_from(&self.B);
        A_hat
            .view_mut((nx, nx), (nu, nu))
            .copy_from(&DMatrix::identity(nu, nu));

        let mut B_hat = DMatrix::zeros(nxh, nu);
        B_hat.view_mut((0, 0), (nx, nu)).copy_from(&self.B);
        B_hat
            .view_mut((nx, 0), (nu, nu))
            .copy_from(&DMatrix::identity(nu, nu));

        let mut Q = DMatrix::zeros(nxh, nxh);
        Q.view_mut((0, 0), (nx, nx))
            .copy_from(&(self.C.transpose() * &self.W_y * &self.C));
        Q.view_mut((nx, nx), (nu, nu)).copy_from(&self.W_u);

        let mut q_lin = DVector::zeros(nxh);
        q_lin
            .rows_mut(0, nx)
            .copy_from(&(-(self.C.transpose() * &self.W_y * &self.r)));
        q_lin
            .rows_mut(nx, nu)
            .copy_from(&(-(&self.W_u * &self.u_ref)));

        let mut e_hat = DVector::zeros(nxh);
        e_hat.rows_mut(0, nx).copy_from(&self.e);

        Ok(AugmentedModel {
            A_hat,
            B_hat,
            Q,
            R: self.W_du.clone(),
            q_lin,
            xh_min: stack_vec(&self.x_min, &self.u_min),
            xh_max: stack_vec(&self.x_max, &self.u_max),
            uh_min: self.du_min.clone(),
            uh_max: self.du_max.clone(),
            e_hat,
            horizon: self.horizon,
            xh0: stack_vec(&self.x0, &self.u_prev),
        })
    }
}

/// Converts output box bounds into state box bounds for pure state-selection
/// output maps, tightening `x_min`/`x_max` in place.
///
/// Each row of `C` carrying a finite output bound must be a unit vector
/// (exactly one entry equal to 1); anything else is rejected because a mixed
/// output bound is not representable as a state box.
pub fn tighten_state_bounds_from_outputs(
    C: &DMatrix<f64>,
    y_min: &DVector<f64>,
    y_max: &DVector<f64>,
    x_min: &mut DVector<f64>,
    x_max: &mut DVector<f64>,
) -> Result<(), ProblemError> {
    for row in 0..C.nrows() {
        if y_min[row] == f64::NEG_INFINITY && y_max[row] == f64::INFINITY {
            continue;
        }
        let mut unit_col = None;
        for col in 0..C.ncols() {
            let v = C[(row, col)];
            if v == 0.0 {
                continue;
            }
            if v == 1.0 && unit_col.is_none() {
                unit_col = Some(col);
            } else {
                return Err(ProblemError::OutputRowNotUnit { row });
            }
        }
        let col = unit_col.ok_or(ProblemError::OutputRowNotUnit { row })?;
        if y_min[row] > x_min[col] {
            x_min[col] = y_min[row];
        }
        if y_max[row] < x_max[col] {
            x_max[col] = y_max[row];
        }
    }
    Ok(())
}

/// Augmented velocity-form model: the data the solver actually iterates on.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedModel {
    /// `[[A, B], [0, I]]`, nxh x nxh with nxh = n_x + n_u.
    pub A_hat: DMatrix<f64>,
    /// `[B; I]`, nxh x n_u.
    pub B_hat: DMatrix<f64>,
    /// Augmented state cost `[[C' W_y C, 0], [0, W_u]]`, symmetric PSD.
    pub Q: DMatrix<f64>,
    /// Input increment cost `W_du`, symmetric positive definite.
    pub R: DMatrix<f64>,
    /// Linear state cost `-Chat' What rhat`, paired with stages 1..=T.
    pub q_lin: DVector<f64>,
    pub xh_min: DVector<f64>,
    pub xh_max: DVector<f64>,
    pub uh_min: DVector<f64>,
    pub uh_max: DVector<f64>,
    /// Affine stage offset `[e; 0]`.
    pub e_hat: DVector<f64>,
    pub horizon: usize,
    /// Current augmented state `[x0; u_prev]`.
    pub xh0: DVector<f64>,
}

impl AugmentedModel {
    /// Augmented state dimension nxh.
    pub fn state_dim(&self) -> usize {
        self.A_hat.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.B_hat.ncols()
    }

    /// Stage equality residual `A_hat x_t + B_hat u_t + e_hat - x_{t+1}`.
    pub fn residual(&self, t: usize, X: &[DVector<f64>], U: &[DVector<f64>]) -> DVector<f64> {
        let mut r = &self.A_hat * &X[t] + &self.e_hat;
        r += &self.B_hat * &U[t];
        r -= &X[t + 1];
        r
    }

    /// Objective of the augmented tracking problem (constant terms in the
    /// references dropped):
    /// `sum_{t=1..T} (1/2 x_t' Q x_t + q_lin' x_t) + sum_{t=0..T-1} 1/2 u_t' R u_t`.
    pub fn objective(&self, X: &[DVector<f64>], U: &[DVector<f64>]) -> f64 {
        let mut j = 0.0;
        for x in X.iter().skip(1) {
            j += 0.5 * (&self.Q * x).dot(x) + self.q_lin.dot(x);
        }
        for u in U {
            j += 0.5 * (&self.R * u).dot(u);
        }
        j
    }

    pub fn project_state(&self, x: &mut DVector<f64>) {
        for i in 0..x.len() {
            x[i] = clamp(x[i], self.xh_min[i], self.xh_max[i]);
        }
    }

    pub fn project_input(&self, u: &mut DVector<f64>) {
        for i in 0..u.len() {
            u[i] = clamp(u[i], self.uh_min[i], self.uh_max[i]);
        }
    }
}

/// Primal-dual iterate: `U` holds the T input increments, `X` the T+1
/// augmented states (with `X[0]` the fixed current state), `Lambda` the T
/// scaled stage multipliers and `Lambda_prev` the multipliers from the
/// previous outer iteration (for dual extrapolation).
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalDualIterate {
    pub U: Vec<DVector<f64>>,
    pub X: Vec<DVector<f64>>,
    pub Lambda: Vec<DVector<f64>>,
    pub Lambda_prev: Vec<DVector<f64>>,
}

impl PrimalDualIterate {
    /// Cold start: zero increments and multipliers; states rolled out from
    /// `xh0` under zero increments, projected onto the state box stage by
    /// stage so the iterate starts feasible with respect to the boxes.
    pub fn cold_start(m: &AugmentedModel) -> Self {
        let T = m.horizon;
        let nxh = m.state_dim();
        let nu = m.input_dim();
        let mut X = Vec::with_capacity(T + 1);
        X.push(m.xh0.clone());
        for t in 0..T {
            let mut next = &m.A_hat * &X[t] + &m.e_hat;
            m.project_state(&mut next);
            X.push(next);
        }
        PrimalDualIterate {
            U: vec![DVector::zeros(nu); T],
            X,
            Lambda: vec![DVector::zeros(nxh); T],
            Lambda_prev: vec![DVector::zeros(nxh); T],
        }
    }

    /// Receding-horizon shift: drops stage 0, duplicates the terminal stage,
    /// installs the new current state, re-projects the shifted primal entries
    /// onto their boxes and resets `Lambda_prev = Lambda` so the next dual
    /// extrapolation starts as a no-op.
    pub fn shift_warm_start(&mut self, m: &AugmentedModel, new_xh0: &DVector<f64>) {
        let T = m.horizon;
        for t in 0..T - 1 {
            self.U[t] = self.U[t + 1].clone();
            self.Lambda[t] = self.Lambda[t + 1].clone();
        }
        self.X[0] = new_xh0.clone();
        for t in 1..T {
            self.X[t] = self.X[t + 1].clone();
        }
        for u in &mut self.U {
            m.project_input(u);
        }
        for x in self.X.iter_mut().skip(1) {
            m.project_state(x);
        }
        self.Lambda_prev = self.Lambda.clone();
    }
}

/// One closed-loop step of data for cost accounting. `y`/`r` are the output
/// and reference after the step's input was applied.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSample {
    pub y: DVector<f64>,
    pub r: DVector<f64>,
    pub u: DVector<f64>,
    pub u_ref: DVector<f64>,
    pub du: DVector<f64>,
}

/// Average realized tracking cost over a closed-loop run:
/// `(1/N) sum 1/2 [(y-r)'W_y(y-r) + (u-u_ref)'W_u(u-u_ref) + du'W_du du]`.
///
/// Each term is the MPC stage cost evaluated on the realized signals, with
/// the same single application of the weights (and the conventional 1/2) the
/// controller itself optimizes.
pub fn closed_loop_cost(
    W_y: &DMatrix<f64>,
    W_u: &DMatrix<f64>,
    W_du: &DMatrix<f64>,
    samples: &[CostSample],
) -> Result<f64, ProblemError> {
    if samples.is_empty() {
        return Err(ProblemError::EmptyLog);
    }
    let mut total = 0.0;
    for s in samples {
        let ey = &s.y - &s.r;
        let eu = &s.u - &s.u_ref;
        total += 0.5 * (W_y * &ey).dot(&ey);
        total += 0.5 * (W_u * &eu).dot(&eu);
        total += 0.5 * (W_du * &s.du).dot(&s.du);
    }
    Ok(total / samples.len() as f64)
}

fn stack_vec(top: &DVector<f64>, bottom: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(top.len() + bottom.len());
    out.rows_mut(0, top.len()).copy_from(top);
    out.rows_mut(top.len(), bottom.len()).copy_from(bottom);
    out
}

fn check_shape(
    field: &'static str,
    m: &DMatrix<f64>,
    rows: usize,
    cols: usize,
) -> Result<(), ProblemError> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(ProblemError::DimensionMismatch {
            field,
            expected: (rows, cols),
            got: (m.nrows(), m.ncols()),
        });
    }
    Ok(())
}

fn check_len(field: &'static str, v: &DVector<f64>, len: usize) -> Result<(), ProblemError> {
    if v.len() != len {
        return Err(ProblemError::DimensionMismatch {
            field,
            expected: (len, 1),
            got: (v.len(), 1),
        });
    }
    Ok(())
}

fn check_finite_mat(field: &'static str, m: &DMatrix<f64>) -> Result<(), ProblemError> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(ProblemError::NonFinite { field });
    }
    Ok(())
}

fn check_finite_vec(field: &'static str, v: &DVector<f64>) -> Result<(), ProblemError> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(ProblemError::NonFinite { field });
    }
    Ok(())
}

/// Bounds may be infinite but never NaN, and must be ordered where both sides
/// are finite.
fn check_bounds(
    field: &'static str,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> Result<(), ProblemError> {
    for i in 0..lo.len() {
        if lo[i].is_nan() || hi[i].is_nan() {
            return Err(ProblemError::NonFinite { field });
        }
        if lo[i] > hi[i] {
            return Err(ProblemError::BoundsOutOfOrder { field, index: i });
        }
    }
    Ok(())
}

fn check_symmetric(field: &'static str, m: &DMatrix<f64>) -> Result<(), ProblemError> {
    let scale = 1.0 + m.iter().fold(0.0f64, |a, v| a.max(crate::float::abs(*v)));
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if crate::float::abs(m[(i, j)] - m[(j, i)]) > 1e-9 * scale {
                return Err(ProblemError::NotSymmetric { field });
            }
        }
    }
    Ok(())
}

fn check_psd(field: &'static str, m: &DMatrix<f64>) -> Result<(), ProblemError> {
    if m.nrows() == 0 {
        return Ok(());
    }
    let eig = m.clone().symmetric_eigenvalues();
    let scale = 1.0 + eig.iter().fold(0.0f64, |a, v| a.max(crate::float::abs(*v)));
    if eig.iter().any(|&l| l < -1e-9 * scale) {
        return Err(ProblemError::NotPositiveSemidefinite { field });
    }
    Ok(())
}
