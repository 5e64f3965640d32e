//! Closed-loop MPC simulation and benchmarking on top of `cdal-core`.
//!
//! The library half holds the simulation harness, the two built-in benchmark
//! problems (an open-loop-unstable flight control model and a nonlinear
//! exothermic reactor), model discretization, and the CLI implementation;
//! the `cdal` binary is a thin wrapper over [`cli::run`].

#![allow(non_snake_case)]

pub mod ablation;
pub mod afti16;
pub mod cli;
pub mod config;
pub mod cstr;
pub mod csvout;
pub mod discretize;
pub mod harness;
