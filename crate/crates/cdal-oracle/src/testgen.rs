//! Seeded random problem generation for equivalence testing.
//!
//! Instances are feasible by construction: bounds are placed around the
//! zero-increment rollout (hold the previous input forever), so that
//! trajectory is always strictly inside every box. Mixes finite and infinite
//! bounds, zero and nonzero input-tracking weights, and affine offsets.

use cdal_core::MpcProblem;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Dimension ranges for [`random_mpc_problem`](random_mpc_problem).
#[derive(Debug, Clone, Copy)]
pub struct InstanceDims {
    pub max_states: usize,
    pub max_inputs: usize,
    pub max_horizon: usize,
}

impl Default for InstanceDims {
    fn default() -> Self {
        InstanceDims {
            max_states: 4,
            max_inputs: 2,
            max_horizon: 5,
        }
    }
}

/// Draws a random feasible tracking problem. Increment weights are kept at or
/// above `0.1` so the stacked Hessian never degenerates.
pub fn random_mpc_problem(rng: &mut impl Rng, dims: InstanceDims) -> MpcProblem {
    let nx = rng.random_range(1..=dims.max_states);
    let nu = rng.random_range(1..=dims.max_inputs);
    let ny = rng.random_range(1..=nx);
    let horizon = rng.random_range(1..=dims.max_horizon);

    let a_scale = 0.9 / (nx as f64).sqrt();
    let A = DMatrix::from_fn(nx, nx, |_, _| rng.random_range(-1.0..1.0) * a_scale);
    let B = DMatrix::from_fn(nx, nu, |_, _| rng.random_range(-1.0..1.0));
    let C = DMatrix::from_fn(ny, nx, |_, _| rng.random_range(-1.0..1.0));

    let W_y = DMatrix::from_diagonal(&DVector::from_fn(ny, |_, _| {
        if rng.random_bool(0.2) {
            0.0
        } else {
            rng.random_range(0.2..2.0)
        }
    }));
    let W_u = if rng.random_bool(0.5) {
        DMatrix::zeros(nu, nu)
    } else {
        DMatrix::from_diagonal(&DVector::from_fn(nu, |_, _| rng.random_range(0.0..1.0)))
    };
    let W_du = DMatrix::from_diagonal(&DVector::from_fn(nu, |_, _| rng.random_range(0.1..1.5)));

    let x0 = DVector::from_fn(nx, |_, _| rng.random_range(-1.0..1.0));
    let u_prev = DVector::from_fn(nu, |_, _| rng.random_range(-1.0..1.0));
    let e = if rng.random_bool(0.5) {
        DVector::zeros(nx)
    } else {
        DVector::from_fn(nx, |_, _| rng.random_range(-0.1..0.1))
    };
    let r = DVector::from_fn(ny, |_, _| rng.random_range(-1.0..1.0));
    let u_ref = DVector::from_fn(nu, |_, _| rng.random_range(-1.0..1.0));

    // Envelope of the zero-increment rollout; state bounds hug it with a
    // positive margin so the hold-input trajectory stays feasible.
    let mut env_min = x0.clone();
    let mut env_max = x0.clone();
    let mut x = x0.clone();
    for _ in 0..horizon {
        x = &A * &x + &B * &u_prev + &e;
        for i in 0..nx {
            env_min[i] = env_min[i].min(x[i]);
            env_max[i] = env_max[i].max(x[i]);
        }
    }

    let x_min = DVector::from_fn(nx, |i, _| {
        if rng.random_bool(0.35) {
            f64::NEG_INFINITY
        } else {
            env_min[i] - rng.random_range(0.05..1.0)
        }
    });
    let x_max = DVector::from_fn(nx, |i, _| {
        if rng.random_bool(0.35) {
            f64::INFINITY
        } else {
            env_max[i] + rng.random_range(0.05..1.0)
        }
    });
    let u_min = DVector::from_fn(nu, |i, _| {
        if rng.random_bool(0.3) {
            f64::NEG_INFINITY
        } else {
            u_prev[i] - rng.random_range(0.05..1.0)
        }
    });
    let u_max = DVector::from_fn(nu, |i, _| {
        if rng.random_bool(0.3) {
            f64::INFINITY
        } else {
            u_prev[i] + rng.random_range(0.05..1.0)
        }
    });
    let du_min = DVector::from_fn(nu, |_, _| {
        if rng.random_bool(0.3) {
            f64::NEG_INFINITY
        } else {
            -rng.random_range(0.02..0.7)
        }
    });
    let du_max = DVector::from_fn(nu, |_, _| {
        if rng.random_bool(0.3) {
            f64::INFINITY
        } else {
            rng.random_range(0.02..0.7)
        }
    });

    MpcProblem {
        A,
        B,
        C,
        W_y,
        W_u,
        W_du,
        horizon,
        x_min,
        x_max,
        u_min,
        u_max,
        du_min,
        du_max,
        r,
        u_ref,
        x0,
        u_prev,
        e,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_problems_validate_and_hold_trajectory_is_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let p = random_mpc_problem(&mut rng, InstanceDims::default());
            p.validate().expect("generated instance must validate");
            // Zero increments: u sticks at u_prev, states follow the rollout.
            let mut x = p.x0.clone();
            for i in 0..p.input_dim() {
                assert!(p.u_prev[i] >= p.u_min[i] && p.u_prev[i] <= p.u_max[i]);
                assert!(p.du_min[i] <= 0.0 && p.du_max[i] >= 0.0);
            }
            for _ in 0..p.horizon {
                x = &p.A * &x + &p.B * &p.u_prev + &p.e;
                for i in 0..p.state_dim() {
                    assert!(
                        x[i] >= p.x_min[i] && x[i] <= p.x_max[i],
                        "rollout leaves the state box"
                    );
                }
            }
        }
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let mut a = ChaCha8Rng::seed_from_u64(42);
        let mut b = ChaCha8Rng::seed_from_u64(42);
        let pa = random_mpc_problem(&mut a, InstanceDims::default());
        let pb = random_mpc_problem(&mut b, InstanceDims::default());
        assert_eq!(pa, pb);
    }

    #[test]
    fn dimension_caps_are_respected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dims = InstanceDims {
            max_states: 2,
            max_inputs: 1,
            max_horizon: 3,
        };
        for _ in 0..50 {
            let p = random_mpc_problem(&mut rng, dims);
            assert!(p.state_dim() <= 2);
            assert_eq!(p.input_dim(), 1);
            assert!(p.horizon <= 3);
        }
    }
}
