//! Continuous-to-discrete conversions for the controller models.

#![allow(non_snake_case)]

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DiscretizeError {
    #[error("matrix exponential series did not converge within {terms} terms")]
    SeriesDiverged { terms: usize },
    #[error("sampling time must be positive and finite, got {0}")]
    BadSamplingTime(f64),
}

const SERIES_TOL: f64 = 1e-12;
const MAX_TERMS: usize = 200;

/// Zero-order-hold discretization: `Ad = exp(Ac Ts)` and
/// `Bd = (integral of exp(Ac s) ds over [0, Ts]) Bc`.
///
/// Both come out of one matrix exponential of the augmented block matrix
/// `[[Ac, Bc], [0, 0]] * Ts`, evaluated by scaling and squaring with a
/// truncated Taylor series.
pub fn zoh_discretize(
    Ac: &DMatrix<f64>,
    Bc: &DMatrix<f64>,
    Ts: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>), DiscretizeError> {
    if !(Ts > 0.0 && Ts.is_finite()) {
        return Err(DiscretizeError::BadSamplingTime(Ts));
    }
    let n = Ac.nrows();
    let m = Bc.ncols();
    assert_eq!(Ac.ncols(), n, "state matrix must be square");
    assert_eq!(Bc.nrows(), n, "input matrix row count must match the state");

    let dim = n + m;
    let mut M = DMatrix::zeros(dim, dim);
    M.view_mut((0, 0), (n, n)).copy_from(&(Ac * Ts));
    M.view_mut((0, n), (n, m)).copy_from(&(Bc * Ts));

    // Scale so the series converges in a handful of terms, then square back.
    let norm = M.amax() * dim as f64;
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    M /= f64::powi(2.0, squarings as i32);

    let mut exp = DMatrix::identity(dim, dim);
    let mut term = DMatrix::identity(dim, dim);
    let mut converged = false;
    for k in 1..=MAX_TERMS {
        term = (&term * &M) / k as f64;
        exp += &term;
        if term.amax() <= SERIES_TOL * exp.amax() {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(DiscretizeError::SeriesDiverged { terms: MAX_TERMS });
    }
    for _ in 0..squarings {
        exp = &exp * &exp;
    }

    let Ad = exp.view((0, 0), (n, n)).clone_owned();
    let Bd = exp.view((0, n), (n, m)).clone_owned();
    Ok((Ad, Bd))
}

/// Forward-Euler discretization of an affine model:
/// `Ad = I + Ts Ac`, `Bd = Ts Bc`, `ed = Ts ec`.
///
/// `Ts = 0` is accepted and yields the degenerate hold model `(I, 0, 0)`.
pub fn euler_discretize(
    Ac: &DMatrix<f64>,
    Bc: &DMatrix<f64>,
    ec: &nalgebra::DVector<f64>,
    Ts: f64,
) -> (DMatrix<f64>, DMatrix<f64>, nalgebra::DVector<f64>) {
    let n = Ac.nrows();
    (DMatrix::identity(n, n) + Ac * Ts, Bc * Ts, ec * Ts)
}
