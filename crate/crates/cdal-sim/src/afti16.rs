//! AFTI-16 aircraft benchmark: an open-loop unstable four-state linearized
//! model with two inputs, pitch-angle tracking, and a tight angle-of-attack
//! constraint that makes the problem ill conditioned.

#![allow(non_snake_case)]

use cdal_core::{tighten_state_bounds_from_outputs, MpcProblem};
use nalgebra::{dmatrix, dvector, DMatrix, DVector};

use crate::discretize::{zoh_discretize, DiscretizeError};
use crate::harness::Scenario;

/// Sampling time in seconds.
pub const TS: f64 = 0.05;
/// Prediction horizon in steps.
pub const HORIZON: usize = 5;

/// Continuous-time model `(A, B, C)`.
pub fn continuous() -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let A = dmatrix![
        -0.0151, -60.5651, 0.0, -32.174;
        -0.0001, -1.3411, 0.9929, 0.0;
        0.00018, 43.2541, -0.86939, 0.0;
        0.0, 0.0, 1.0, 0.0
    ];
    let B = dmatrix![
        -2.516, -13.136;
        -0.1689, -0.2514;
        -17.251, -1.5766;
        0.0, 0.0
    ];
    let C = dmatrix![
        0.0, 1.0, 0.0, 0.0;
        0.0, 0.0, 0.0, 1.0
    ];
    (A, B, C)
}

/// Zero-order-hold discretization of the model at [`TS`](TS).
pub fn discrete() -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>), DiscretizeError> {
    let (Ac, Bc, C) = continuous();
    let (Ad, Bd) = zoh_discretize(&Ac, &Bc, TS)?;
    Ok((Ad, Bd, C))
}

/// The tracking problem: `W_y = diag(10, 10)`, no input-magnitude cost,
/// `W_du = diag(0.1, 0.1)`, inputs limited to 25 degrees, angle of attack to
/// half a degree and pitch to 100 degrees (converted to state bounds).
pub fn mpc_template() -> Result<MpcProblem, DiscretizeError> {
    let (A, B, C) = discrete()?;
    let inf = f64::INFINITY;
    let mut x_min = DVector::from_element(4, -inf);
    let mut x_max = DVector::from_element(4, inf);
    tighten_state_bounds_from_outputs(
        &C,
        &dvector![-0.5, -100.0],
        &dvector![0.5, 100.0],
        &mut x_min,
        &mut x_max,
    )
    .expect("output rows are unit vectors");

    Ok(MpcProblem {
        A,
        B,
        C,
        W_y: DMatrix::from_diagonal(&dvector![10.0, 10.0]),
        W_u: DMatrix::zeros(2, 2),
        W_du: DMatrix::from_diagonal(&dvector![0.1, 0.1]),
        horizon: HORIZON,
        x_min,
        x_max,
        u_min: dvector![-25.0, -25.0],
        u_max: dvector![25.0, 25.0],
        du_min: dvector![-inf, -inf],
        du_max: dvector![inf, inf],
        r: dvector![0.0, 0.0],
        u_ref: dvector![0.0, 0.0],
        x0: DVector::zeros(4),
        u_prev: DVector::zeros(2),
        e: DVector::zeros(4),
    })
}

/// Pitch reference scenario: step to `pitch_ref` degrees at the first sample,
/// back to zero at `switch_step`, for `n_steps` samples total.
pub fn scenario(n_steps: usize, switch_step: usize, pitch_ref: f64) -> Scenario {
    let template = mpc_template().expect("fixed model discretizes");
    let refs = (0..=n_steps)
        .map(|k| {
            if k < switch_step {
                dvector![0.0, pitch_ref]
            } else {
                dvector![0.0, 0.0]
            }
        })
        .collect();
    Scenario {
        template,
        ts: TS,
        refs,
    }
}

/// The benchmark scenario: a 10 degree pitch step held for 5 seconds, then
/// back to zero for another 5 seconds (201 samples at 50 ms).
pub fn default_scenario() -> Scenario {
    scenario(201, 100, 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn continuous_model_is_open_loop_unstable() {
        let (A, _, _) = continuous();
        let eigs = A.complex_eigenvalues();
        let max_re = eigs.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
        assert!(
            max_re > 1e-3,
            "expected an unstable eigenvalue, max real part {max_re}"
        );
    }

    #[test]
    fn transition_matrix_satisfies_the_semigroup_identity() {
        let (Ac, Bc, _) = continuous();
        let (A1, _) = zoh_discretize(&Ac, &Bc, TS).unwrap();
        let (A2, _) = zoh_discretize(&Ac, &Bc, 2.0 * TS).unwrap();
        assert_relative_eq!(A2, &A1 * &A1, epsilon = 1e-9);
    }

    #[test]
    fn template_validates_and_converts_output_bounds() {
        let p = mpc_template().unwrap();
        p.validate().unwrap();
        assert_eq!(p.x_min[1], -0.5);
        assert_eq!(p.x_max[1], 0.5);
        assert_eq!(p.x_min[3], -100.0);
        assert_eq!(p.x_max[3], 100.0);
        assert!(p.x_min[0].is_infinite() && p.x_min[2].is_infinite());
    }

    #[test]
    fn scenario_reference_switches_at_half() {
        let s = default_scenario();
        assert_eq!(s.refs.len(), 202);
        assert_eq!(s.refs[0], dvector![0.0, 10.0]);
        assert_eq!(s.refs[99], dvector![0.0, 10.0]);
        assert_eq!(s.refs[100], dvector![0.0, 0.0]);
        assert_eq!(s.refs[201], dvector![0.0, 0.0]);
    }
}
