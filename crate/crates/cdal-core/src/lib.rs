//! Construction-free, matrix-free coordinate-descent augmented-Lagrangian
//! (CDAL) solver for linear and LPV model predictive control.
//!
//! The crate is organized around four pieces:
//!
//! * [`problem`]: MPC problem description, velocity-form augmentation with
//!   embedded previous input, primal-dual iterate storage and warm-start
//!   shifting, closed-loop cost accounting.
//! * [`scaling`]: diagonal state scaling used as a preconditioner.
//! * [`kernel`]: the coordinate-descent inner kernel. One pass touches every
//!   coordinate once, keeps the stage multipliers coupled to the equality
//!   residuals, and divides only by cached diagonal entries.
//! * [`solver`]: the accelerated augmented-Lagrangian outer loop.
//!
//! No matrix is ever factorized and no linear system is solved while
//! iterating; per-step work is a handful of small matrix-vector actions.
//! The crate is `no_std`-compatible (`--no-default-features --features libm`)
//! and only needs an allocator.

#![cfg_attr(not(feature = "std"), no_std)]
#![allow(non_snake_case)]

extern crate alloc;

pub mod kernel;
pub mod problem;
pub mod scaling;
pub mod solver;

mod float;

pub use kernel::{
    ccd_input_block, ccd_state_block, ccd_terminal_state, cd_full_pass, clamp, CdWorkspace,
    PassResult, SweepOrder,
};
pub use problem::{
    closed_loop_cost, tighten_state_bounds_from_outputs, AugmentedModel, CostSample, MpcProblem,
    PrimalDualIterate, ProblemError,
};
pub use scaling::{apply_scaling, compute_scaling, unscale_states, DiagonalScaling};
pub use solver::{
    dual_refresh, nesterov_alpha, solve, solve_with_scaling, SolveError, SolveReport,
    SolverSettings,
};
